"""Command line: dataset generation, training runs, standalone LID
estimation, and cross-seed summaries.

Subcommands:

    gen-data      write paired train/test manifold-blob caches
    train         run one strategy over one or more seeds
    estimate-lid  score a dataset's features or a checkpoint's representations
    summarize     aggregate the per-seed records of a finished run

Options can also come from a ``--config`` file of ``key = value`` lines;
explicit flags win over the file, the file wins over built-in defaults.
Every command that writes a run directory drops a config echo there
(``<command>.cfg``) which can be fed back via ``--config`` to reproduce
the run byte for byte.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime abort.
Set D2L_THREADS to cap BLAS parallelism, D2L_KERNELS to pick the
distance-kernel backend (``compiled`` or ``python``).
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import (
    gen_manifold_blobs,
    load_dataset,
    load_idx_dataset,
    save_dataset,
    with_noise,
)
from .errors import ConfigError, D2LError
from .lid import batch_lid_mean
from .metrics import format_summary, read_records, summarize, write_records, write_summary
from .network import (
    NetworkModel,
    OptimizerConfig,
    forward,
    load_checkpoint,
    save_checkpoint,
    snapshot,
)
from .strategies import StrategyKind, symmetric_transition
from .trainer import TrainConfig, run_training


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _parse_hidden(text: str) -> tuple:
    return tuple(_parse_int_list(text))


def _parse_lr_drops(text: str) -> tuple:
    """epoch:divisor pairs, e.g. ``40:10,80:10``."""
    drops = []
    for part in text.split(","):
        if not part.strip():
            continue
        epoch, _, divisor = part.partition(":")
        try:
            drops.append((int(epoch), float(divisor)))
        except ValueError:
            raise ConfigError(f"expected epoch:divisor pairs, got {text!r}") from None
    return tuple(drops)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(
            f"{item[0]}:{item[1]}" if isinstance(item, tuple) else str(item)
            for item in value
        )
    if isinstance(value, float):
        return repr(value)
    return str(value)


# Per-subcommand option tables: (name, parser for config-file values,
# default, help).  argparse holds no defaults so that a missing flag can
# fall through to the config file and then to the default here.

GEN_OPTIONS = (
    ("blobs", _parse_bool, False, "generate manifold blob data"),
    ("classes", int, 2, "number of classes"),
    ("n", int, 2000, "total training points (divisible by classes)"),
    ("test_n", int, None, "total test points (default n / 5)"),
    ("d_intrinsic", int, 2, "manifold dimension of each class"),
    ("d_ambient", int, 10, "feature-space dimension"),
    ("separation", float, 6.0, "distance scale between class centers"),
    ("seed", int, 0, "generator seed"),
    ("out", str, "runs", "output directory"),
)

TRAIN_OPTIONS = (
    ("data", str, None, "directory with train.d2l / test.d2l caches"),
    ("train_images", str, None, "IDX image file for training"),
    ("train_labels", str, None, "IDX label file for training"),
    ("test_images", str, None, "IDX image file for testing"),
    ("test_labels", str, None, "IDX label file for testing"),
    ("classes", int, None, "class count for IDX data (default: inferred)"),
    ("strategy", str, "ce", "ce | d2l | boot-soft | boot-hard | forward | backward"),
    ("noise_rate", float, 0.0, "symmetric label-noise rate"),
    ("epochs", int, 50, "total training epochs"),
    ("window", int, None, "turning-point window (default: epochs / 10)"),
    ("k", int, 20, "neighbors for LID estimation"),
    ("m", int, 10, "batches per LID score"),
    ("batch_size", int, 128, "minibatch size"),
    ("hidden", _parse_hidden, (128, 128), "hidden layer widths, comma-separated"),
    ("lr", float, 0.1, "initial learning rate"),
    ("momentum", float, 0.9, "SGD momentum"),
    ("weight_decay", float, 1e-4, "L2 penalty on all parameters"),
    ("lr_drops", _parse_lr_drops, (), "learning-rate drops, epoch:divisor pairs"),
    ("beta", float, None, "bootstrap mixing weight (default per strategy)"),
    ("early_stop_patience", int, 0, "epochs without test-accuracy gain before stopping"),
    ("turning_std", str, "population", "population | sample std in the turning test"),
    ("seed", int, 0, "run seed when --seeds is not given"),
    ("seeds", _parse_int_list, None, "comma-separated seeds for a sweep"),
    ("out", str, "runs", "output directory"),
)

ESTIMATE_OPTIONS = (
    ("dataset", str, None, "dataset cache file to score"),
    ("data", str, None, "run directory holding train.d2l / test.d2l"),
    ("split", str, "train", "which cache to score from --data"),
    ("checkpoint", str, None, "score this model's penultimate representations"),
    ("k", int, 20, "neighbors for LID estimation"),
    ("m", int, 10, "number of batches"),
    ("batch_size", int, 128, "points per batch"),
    ("seed", int, 0, "batch-sampling seed"),
)

SUMMARIZE_OPTIONS = (("run", str, None, "run directory written by train"),)


def _read_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected key = value, got {raw!r}")
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def _resolve(args, table) -> dict:
    """Merge CLI flags over config-file values over defaults."""
    from_file = _read_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(from_file) - {name for name, _, _, _ in table}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    opts = {}
    for name, parse_fn, default, _ in table:
        explicit = getattr(args, name)
        if explicit is not None:
            opts[name] = explicit
        elif name in from_file:
            opts[name] = parse_fn(from_file[name])
        else:
            opts[name] = default
    return opts


def _write_config_echo(opts, table, path) -> None:
    lines = [
        f"{name} = {_format_value(opts[name])}"
        for name, _, _, _ in table
        if opts[name] is not None
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def _add_options(parser, table):
    for name, parse_fn, _, help_text in table:
        flag = "--" + name.replace("_", "-")
        if parse_fn is _parse_bool:
            parser.add_argument(flag, action="store_const", const=True, help=help_text)
        elif parse_fn is _parse_int_list:
            parser.add_argument(flag, type=_parse_int_list, help=help_text)
        elif parse_fn is _parse_hidden:
            parser.add_argument(flag, type=_parse_hidden, help=help_text)
        elif parse_fn is _parse_lr_drops:
            parser.add_argument(flag, type=_parse_lr_drops, help=help_text)
        else:
            parser.add_argument(flag, type=parse_fn, help=help_text)
    parser.add_argument("--config", help="key = value file merged under explicit flags")


def cmd_gen_data(args) -> int:
    opts = _resolve(args, GEN_OPTIONS)
    if not opts["blobs"]:
        raise ConfigError("gen-data currently requires --blobs")
    classes, n = opts["classes"], opts["n"]
    test_n = opts["test_n"] if opts["test_n"] is not None else max(classes, n // 5)
    for label, count in (("--n", n), ("--test-n", test_n)):
        if count < classes or count % classes:
            raise ConfigError(f"{label} ({count}) must be a positive multiple of --classes")
    train, test = gen_manifold_blobs(
        train_per_class=n // classes,
        test_per_class=test_n // classes,
        class_count=classes,
        intrinsic_dim=opts["d_intrinsic"],
        ambient_dim=opts["d_ambient"],
        separation=opts["separation"],
        seed=opts["seed"],
    )
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    opts["test_n"] = test_n
    save_dataset(train, out / "train.d2l")
    save_dataset(test, out / "test.d2l")
    _write_config_echo(opts, GEN_OPTIONS, out / "gen-data.cfg")
    print(
        f"wrote {out / 'train.d2l'} ({len(train)} points) and "
        f"{out / 'test.d2l'} ({len(test)} points): "
        f"{classes} classes, {opts['d_intrinsic']}-dim manifolds in "
        f"{opts['d_ambient']} dimensions"
    )
    return 0


def _load_split_pair(opts):
    if opts["data"]:
        base = Path(opts["data"])
        return load_dataset(base / "train.d2l"), load_dataset(base / "test.d2l")
    idx_paths = [opts[key] for key in ("train_images", "train_labels", "test_images", "test_labels")]
    if all(idx_paths):
        classes = opts["classes"]
        if classes is None:
            probe_train = load_idx_dataset(idx_paths[0], idx_paths[1], class_count=256)
            probe_test = load_idx_dataset(idx_paths[2], idx_paths[3], class_count=256)
            classes = int(max(probe_train.labels.max(), probe_test.labels.max())) + 1
        return (
            load_idx_dataset(idx_paths[0], idx_paths[1], class_count=classes),
            load_idx_dataset(idx_paths[2], idx_paths[3], class_count=classes),
        )
    raise ConfigError("need --data DIR or all four --train/test-images/-labels paths")


def cmd_train(args) -> int:
    opts = _resolve(args, TRAIN_OPTIONS)
    train, test = _load_split_pair(opts)
    strategy = StrategyKind.parse(opts["strategy"])
    rate = opts["noise_rate"]
    window = opts["window"] if opts["window"] is not None else max(1, opts["epochs"] // 10)
    opts["window"] = window
    transition = None
    if strategy in (StrategyKind.FORWARD, StrategyKind.BACKWARD):
        transition = symmetric_transition(train.class_count, rate)
    seeds = opts["seeds"] if opts["seeds"] else [opts["seed"]]

    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_config_echo(opts, TRAIN_OPTIONS, out / "train.cfg")

    runs = []
    for seed in seeds:
        cfg = TrainConfig(
            total_epochs=opts["epochs"],
            window=window,
            strategy=strategy,
            lid_batches=opts["m"],
            lid_neighbors=opts["k"],
            batch_size=opts["batch_size"],
            hidden_sizes=opts["hidden"],
            optimizer=OptimizerConfig(
                learning_rate=opts["lr"],
                momentum=opts["momentum"],
                weight_decay=opts["weight_decay"],
                lr_drops=opts["lr_drops"],
            ),
            seed=seed,
            beta=opts["beta"],
            transition=transition,
            early_stop_patience=opts["early_stop_patience"],
            turning_std=opts["turning_std"],
        )
        noisy = with_noise(train, rate, seed=[seed, 3]) if rate > 0 else train
        result = run_training(noisy, test, cfg)

        seed_dir = out / f"seed-{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        write_records(result.records, seed_dir / "records.csv")
        save_checkpoint(
            snapshot(result.model, result.opt, epoch=len(result.records)),
            seed_dir / "model.ckpt",
        )
        overhead = result.lid_seconds / max(result.total_seconds, 1e-12)
        (seed_dir / "timing.json").write_text(
            json.dumps(
                {
                    "lid_seconds": result.lid_seconds,
                    "total_seconds": result.total_seconds,
                    "lid_fraction": overhead,
                },
                indent=2,
            )
            + "\n"
        )
        last = result.records[-1]
        print(
            f"seed {seed}: {len(result.records)} epochs, "
            f"final test acc {last.test_acc:.4f}, final lid {last.lid:.3f}, "
            f"lid overhead {100 * overhead:.1f}%"
            + (f", turning point at epoch {result.trajectory.turning_epoch}"
               if result.trajectory.turning_epoch != -1 else "")
        )
        runs.append((seed, result.records))

    summary = summarize(strategy.value, rate, runs)
    write_summary(summary, out / "summary.json")
    print(format_summary(summary))
    return 0


def cmd_estimate_lid(args) -> int:
    opts = _resolve(args, ESTIMATE_OPTIONS)
    if opts["dataset"]:
        ds = load_dataset(opts["dataset"])
    elif opts["data"]:
        if opts["split"] not in ("train", "test"):
            raise ConfigError(f"--split must be train or test, got {opts['split']!r}")
        ds = load_dataset(Path(opts["data"]) / f"{opts['split']}.d2l")
    else:
        raise ConfigError("need --dataset FILE or --data DIR")

    model = None
    if opts["checkpoint"]:
        ckpt = load_checkpoint(opts["checkpoint"])
        model = NetworkModel(weights=ckpt.weights, biases=ckpt.biases)

    rng = np.random.default_rng(opts["seed"])
    size = min(opts["batch_size"], len(ds))
    values = []
    for _ in range(opts["m"]):
        picked = rng.choice(len(ds), size=size, replace=False)
        batch = ds.features[picked]
        if model is not None:
            batch = forward(model, batch)[0]
        values.append(batch_lid_mean(batch, opts["k"]))
    spread = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    source = "penultimate representations" if model is not None else "raw features"
    print(
        f"lid {float(np.mean(values)):.4f} +/- {spread:.4f} "
        f"over {opts['m']} batches of {size} ({source}, k={opts['k']})"
    )
    return 0


def cmd_summarize(args) -> int:
    opts = _resolve(args, SUMMARIZE_OPTIONS)
    if not opts["run"]:
        raise ConfigError("need --run DIR")
    run_dir = Path(opts["run"])
    echo = run_dir / "train.cfg"
    if not echo.exists():
        raise ConfigError(f"{run_dir} has no train.cfg; was it written by `d2l train`?")
    recorded = _read_config_file(echo)
    strategy = recorded.get("strategy", "ce")
    noise_rate = float(recorded.get("noise_rate", 0.0))

    runs = []
    for records_path in sorted(run_dir.glob("seed-*/records.csv")):
        seed = int(records_path.parent.name.split("-", 1)[1])
        runs.append((seed, read_records(records_path)))
    runs.sort(key=lambda pair: pair[0])
    if not runs:
        raise ConfigError(f"no seed-*/records.csv under {run_dir}")
    summary = summarize(strategy, noise_rate, runs)
    write_summary(summary, run_dir / "summary.json")
    print(format_summary(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="d2l",
        description="train classifiers that monitor representation dimensionality to resist label noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, table, func, blurb in (
        ("gen-data", GEN_OPTIONS, cmd_gen_data, "write paired train/test blob caches"),
        ("train", TRAIN_OPTIONS, cmd_train, "train one strategy over one or more seeds"),
        ("estimate-lid", ESTIMATE_OPTIONS, cmd_estimate_lid, "score a dataset or checkpoint"),
        ("summarize", SUMMARIZE_OPTIONS, cmd_summarize, "aggregate a run's per-seed records"),
    ):
        command = sub.add_parser(name, help=blurb)
        _add_options(command, table)
        command.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except D2LError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
