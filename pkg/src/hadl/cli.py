"""Command-line experiment runner.

Subcommands: train, robustness, ablate, params, export-weights. Every run is
fully described by an ExperimentConfig, assembled from defaults, an optional
flat `key = value` config file, and per-key CLI overrides (highest priority).
A short hash of the resolved config is embedded in every output file header,
and no output contains timestamps, so re-running a command with the same
config and seed reproduces every file byte for byte.

Output layout: <outdir>/<dataset>/<variant>/<horizon>/ with checkpoint,
trace and report files; robustness and ablation tables sit one level up.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import data as hadl_data
from . import metrics as hadl_metrics
from .errors import HadlError, MissingZeroEtaError, UnknownAxisError
from .model import (
    HEAD_DENSE,
    HEAD_LOW_RANK,
    effective_weight,
    forward,
    init_model,
    kilo_display,
    load_checkpoint,
    param_count,
    save_checkpoint,
)
from .optim import TrainConfig, train, write_trace_csv, write_trace_json

SYNTH_KINDS = ("sine_mix", "low_rank_target", "random_walk")


@dataclass
class ExperimentConfig:
    """Every knob a run can turn. Names double as config-file keys and
    as --flags (with '-' for '_')."""

    dataset: str = "sine_mix"
    data_path: str = ""
    registry: str = ""
    convention: str = ""
    lookback: int = 512
    horizons: tuple[int, ...] = (96, 192, 336, 720)
    rank: int = 50
    use_haar: bool = True
    use_dct: bool = True
    head: str = HEAD_LOW_RANK
    with_bias: bool = True
    standardize: bool = True
    stride: int = 1
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    l1_lambda: float = 1e-4
    max_epochs: int = 100
    patience: int = 20
    batch_size: int = 64
    seed: int = 0
    seeds: tuple[int, ...] = ()
    noise_eta: float = 0.0
    eta_list: tuple[float, ...] = (0.0, 0.3, 0.7, 1.3, 1.7, 2.3)
    robust_max_epochs: int = 50
    robust_patience: int = 10
    ablate_rank: int = 40
    rank_list: tuple[int, ...] = (15, 35, 55, 75)
    lookback_list: tuple[int, ...] = (48, 96, 192, 336, 512, 720)
    outdir: str = "runs"
    synth_length: int = 480
    synth_channels: int = 3
    synth_period: float = 24.0
    synth_amplitude: float = 1.0

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]

    def seed_list(self) -> tuple[int, ...]:
        return self.seeds if self.seeds else (self.seed,)


_LIST_ELEM = {
    "horizons": int,
    "seeds": int,
    "eta_list": float,
    "rank_list": int,
    "lookback_list": int,
}


def _parse_value(name: str, text: str):
    if name in _LIST_ELEM:
        text = text.strip()
        if not text:
            return ()
        return tuple(_LIST_ELEM[name](part.strip()) for part in text.split(","))
    default = getattr(ExperimentConfig(), name)
    if isinstance(default, bool):
        lowered = text.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise HadlError(f"config key {name}: expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip()


def read_config_file(path) -> dict:
    """Flat `key = value` lines; '#' comments and blank lines ignored."""
    values: dict = {}
    known = {f.name for f in fields(ExperimentConfig)}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise HadlError(f"{path}: line {line_no}: expected `key = value`")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise HadlError(f"{path}: line {line_no}: unknown config key {key!r}")
            values[key] = _parse_value(key, value)
    return values


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = _parse_value(f.name, raw)
    return ExperimentConfig(**values)


def mix_seed(base: int, *parts) -> int:
    """Derive a stream-specific seed from the base seed; stable across runs
    and platforms (unlike hash())."""
    material = json.dumps([int(base)] + [str(p) for p in parts])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def variant_name(config: ExperimentConfig) -> str:
    parts = [
        "haar" if config.use_haar else "nohaar",
        "dct" if config.use_dct else "nodct",
        f"lowrank_r{config.rank}" if config.head == HEAD_LOW_RANK else "dense",
        "bias" if config.with_bias else "nobias",
    ]
    return "-".join(parts)


def load_dataset(config: ExperimentConfig) -> hadl_data.Dataset:
    name = config.dataset
    if name in SYNTH_KINDS:
        params = {
            "length": config.synth_length,
            "channels": config.synth_channels,
        }
        if name == "sine_mix":
            params["periods"] = [config.synth_period]
            params["amplitudes"] = [config.synth_amplitude]
        elif name == "low_rank_target":
            params["period"] = config.synth_period
        return hadl_data.synth(name, params, seed=mix_seed(config.seed, "dataset"))
    path = config.data_path
    expected_channels = None
    if config.registry:
        registry = hadl_data.load_registry(config.registry)
        if name in registry:
            entry = registry[name]
            path = path or entry["path"]
            expected_channels = entry["channels"]
    if not path:
        path = os.path.join("data", f"{name}.csv")
    if not os.path.exists(path):
        raise HadlError(f"dataset file not found: {path} (set data_path or registry)")
    return hadl_data.load_csv(path, name=name, expected_channels=expected_channels)


def dataset_convention(config: ExperimentConfig, dataset_name: str) -> str:
    """Explicit config wins, then the registry entry, then the known-name
    default (ratio for anything unrecognized)."""
    if config.convention:
        return config.convention
    if config.registry:
        registry = hadl_data.load_registry(config.registry)
        if dataset_name in registry:
            return registry[dataset_name]["convention"]
    return hadl_data.convention_for(dataset_name)


def prepare_windows(config: ExperimentConfig, dataset: hadl_data.Dataset,
                    lookback: int, horizon: int, eta: float, seed: int):
    """Split, standardize, noise the train segment, and window all three."""
    convention = dataset_convention(config, dataset.name)
    train_seg, val_seg, test_seg = hadl_data.split(dataset, convention, lookback=lookback)
    if config.standardize:
        _, train_seg, val_seg, test_seg = hadl_data.fit_transform(train_seg, val_seg, test_seg)
    if eta > 0.0:
        train_seg = hadl_data.inject_noise(train_seg, eta, mix_seed(seed, "noise", eta))
    w_train = hadl_data.windows(train_seg, lookback, horizon, config.stride)
    w_val = hadl_data.windows(val_seg, lookback, horizon)
    w_test = hadl_data.windows(test_seg, lookback, horizon)
    return w_train, w_val, w_test


def run_single(config: ExperimentConfig, dataset: hadl_data.Dataset, lookback: int,
               horizon: int, rank: int, eta: float, seed: int,
               max_epochs: int | None = None, patience: int | None = None,
               head: str | None = None, use_haar: bool | None = None,
               use_dct: bool | None = None):
    """Train one model and evaluate it on the clean test split.

    Returns (best_model, trace, EvalReport). The model init seed does not
    depend on eta, so a robustness sweep perturbs only the training data.
    """
    head = config.head if head is None else head
    use_haar = config.use_haar if use_haar is None else use_haar
    use_dct = config.use_dct if use_dct is None else use_dct
    w_train, w_val, w_test = prepare_windows(config, dataset, lookback, horizon, eta, seed)
    train_config = TrainConfig(
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
        l1_lambda=config.l1_lambda,
        max_epochs=config.max_epochs if max_epochs is None else max_epochs,
        patience=config.patience if patience is None else patience,
        batch_size=config.batch_size,
        seed=seed,
        noise_eta=eta,
    )
    model = init_model(
        lookback,
        horizon,
        rank,
        seed=mix_seed(seed, "init", lookback, horizon),
        use_haar=use_haar,
        use_dct=use_dct,
        head=head,
        with_bias=config.with_bias,
    )
    best, trace = train(model, w_train, w_val, train_config)
    pred = forward(best, w_test.inputs)
    report = hadl_metrics.EvalReport(
        dataset=dataset.name,
        horizon=horizon,
        use_haar=use_haar,
        use_dct=use_dct,
        head=head,
        with_bias=config.with_bias,
        rank=rank if head == HEAD_LOW_RANK else None,
        seed=seed,
        noise_eta=eta,
        mse=hadl_metrics.mse(pred, w_test.targets),
        mae=hadl_metrics.mae(pred, w_test.targets),
        config={
            "learning_rate": config.learning_rate,
            "l1_lambda": config.l1_lambda,
            "batch_size": config.batch_size,
            "max_epochs": train_config.max_epochs,
            "patience": train_config.patience,
            "standardize": config.standardize,
        },
    )
    return best, trace, report


def _run_dir(config: ExperimentConfig, dataset_name: str, variant: str, horizon: int) -> str:
    path = os.path.join(config.outdir, dataset_name, variant, str(horizon))
    os.makedirs(path, exist_ok=True)
    return path


def _train_job(config: ExperimentConfig, horizon: int, seed: int,
               dataset: hadl_data.Dataset | None = None) -> hadl_metrics.EvalReport:
    """One (horizon, seed) training run; loads its own data when run in a
    worker process. Output paths are disjoint per (horizon, seed)."""
    if dataset is None:
        dataset = load_dataset(config)
    best, trace, report = run_single(
        config, dataset, config.lookback, horizon, config.rank,
        eta=config.noise_eta, seed=seed,
    )
    run_dir = _run_dir(config, dataset.name, variant_name(config), horizon)
    fingerprint = config.fingerprint()
    save_checkpoint(best, os.path.join(run_dir, f"checkpoint_seed{seed}.npz"))
    write_trace_csv(trace, os.path.join(run_dir, f"trace_seed{seed}.csv"), fingerprint)
    write_trace_json(trace, os.path.join(run_dir, f"trace_seed{seed}.json"), fingerprint)
    print(
        f"train dataset={dataset.name} H={horizon} seed={seed} "
        f"best_epoch={trace.best_epoch} test_mse={report.mse:.6f} test_mae={report.mae:.6f}"
    )
    return report


def cmd_train(config: ExperimentConfig, workers: int = 1) -> list[hadl_metrics.EvalReport]:
    """Train per horizon (and per seed), write checkpoints, traces, reports.

    workers > 1 runs the (horizon, seed) grid in parallel processes; job
    outputs are independent of scheduling, so results match a serial run.
    """
    dataset = load_dataset(config)  # validates inputs before any output dir exists
    fingerprint = config.fingerprint()
    grid = [(horizon, seed) for horizon in config.horizons for seed in config.seed_list()]

    by_cell: dict[tuple[int, int], hadl_metrics.EvalReport] = {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(h, s, pool.submit(_train_job, config, h, s)) for h, s in grid]
            for horizon, seed, future in futures:
                by_cell[(horizon, seed)] = future.result()
    else:
        for horizon, seed in grid:
            by_cell[(horizon, seed)] = _train_job(config, horizon, seed, dataset)

    all_reports: list[hadl_metrics.EvalReport] = []
    for horizon in config.horizons:
        variant = variant_name(config)
        run_dir = _run_dir(config, dataset.name, variant, horizon)
        reports = [by_cell[(horizon, seed)] for seed in config.seed_list()]
        hadl_metrics.write_eval_csv(reports, os.path.join(run_dir, "eval.csv"), fingerprint)
        mses = [r.mse for r in reports]
        bundle = {
            "config": asdict(config),
            "config_fingerprint": fingerprint,
            "dataset": dataset.name,
            "horizon": horizon,
            "variant": variant,
            "reports": [asdict(r) for r in reports],
            "mse_mean": float(np.mean(mses)),
            "mse_std": float(np.std(mses)),
        }
        hadl_metrics.write_json_bundle(bundle, os.path.join(run_dir, "eval.json"))
        all_reports.extend(reports)
    return all_reports


def _robustness_job(config: ExperimentConfig, eta: float,
                    dataset: hadl_data.Dataset | None = None) -> float:
    """Clean-test MSE of one noise intensity; worker-process safe."""
    if dataset is None:
        dataset = load_dataset(config)
    horizon = config.horizons[0]
    _, trace, report = run_single(
        config, dataset, config.lookback, horizon, config.rank,
        eta=eta, seed=config.seed_list()[0],
        max_epochs=config.robust_max_epochs, patience=config.robust_patience,
    )
    print(
        f"robustness dataset={dataset.name} H={horizon} eta={eta} "
        f"best_epoch={trace.best_epoch} test_mse={report.mse:.6f}"
    )
    return report.mse


def cmd_robustness(config: ExperimentConfig, workers: int = 1) -> hadl_metrics.RobustnessReport:
    """Noise sweep at the first configured horizon; evaluation always clean.

    Each eta trains its own model (robust_max_epochs/robust_patience); the
    eta list must contain 0.0 for the NRR baseline. workers > 1 trains the
    etas in parallel processes.
    """
    etas = tuple(sorted(set(config.eta_list)))
    if 0.0 not in etas:
        raise MissingZeroEtaError("eta_list must contain 0.0")
    dataset = load_dataset(config)
    fingerprint = config.fingerprint()
    horizon = config.horizons[0]
    variant = variant_name(config)
    run_dir = _run_dir(config, dataset.name, variant, horizon)

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            mses = list(pool.map(_robustness_job, [config] * len(etas), etas))
    else:
        mses = [_robustness_job(config, eta, dataset) for eta in etas]
    report = hadl_metrics.robustness_report(etas, mses)

    for prev, nxt in zip(report.nrr_per_eta, report.nrr_per_eta[1:]):
        if nxt < prev - 0.02:
            print(
                f"warning: NRR decreased from {prev:.4f} to {nxt:.4f} with more noise;"
                " unusual but not an error",
                file=sys.stderr,
            )
    if report.mav is None:
        print("robustness: no noisy etas, MAV undefined")
    else:
        print(f"robustness: MAV={report.mav:.6f} over etas {list(report.eta_list[1:])}")

    hadl_metrics.write_robustness_csv(
        report, os.path.join(run_dir, "robustness.csv"), fingerprint
    )
    bundle = {
        "config": asdict(config),
        "config_fingerprint": fingerprint,
        "dataset": dataset.name,
        "horizon": horizon,
        "variant": variant,
        "eta_list": list(report.eta_list),
        "mse_per_eta": list(report.mse_per_eta),
        "nrr_per_eta": list(report.nrr_per_eta),
        "mav": report.mav,
    }
    hadl_metrics.write_json_bundle(bundle, os.path.join(run_dir, "robustness.json"))
    return report


ABLATION_AXES = ("haar", "head", "dct", "rank", "lookback")


def _ablate_grid(config: ExperimentConfig, axis: str) -> list[dict]:
    """The (label, model-variant) grid an ablation axis expands to."""
    r = config.ablate_rank
    if axis == "haar":
        return [
            {"value": "with_haar", "use_haar": True, "rank": r},
            {"value": "without_haar", "use_haar": False, "rank": r},
        ]
    if axis == "head":
        return [
            {"value": "low_rank", "head": HEAD_LOW_RANK, "rank": r},
            {"value": "dense", "head": HEAD_DENSE, "rank": r},
        ]
    if axis == "dct":
        return [
            {"value": "with_dct", "use_dct": True, "rank": r},
            {"value": "without_dct", "use_dct": False, "rank": r},
        ]
    if axis == "rank":
        return [{"value": str(rank), "rank": rank} for rank in config.rank_list]
    if axis == "lookback":
        return [{"value": str(lb), "lookback": lb, "rank": r} for lb in config.lookback_list]
    raise UnknownAxisError(f"unknown ablation axis {axis!r}; choose from {ABLATION_AXES}")


def cmd_ablate(config: ExperimentConfig, axis: str, params_only: bool = False) -> str:
    """Run a variant grid and write an MSE + parameter-count table.

    With params_only the table skips training and fills only the parameter
    columns (useful to inspect model sizes without data).
    """
    grid = _ablate_grid(config, axis)
    rows: list[dict] = []
    dataset = None if params_only else load_dataset(config)
    seed = config.seed_list()[0]
    for point in grid:
        lookback = point.get("lookback", config.lookback)
        rank = point.get("rank", config.rank)
        head = point.get("head", config.head)
        use_haar = point.get("use_haar", config.use_haar)
        use_dct = point.get("use_dct", config.use_dct)
        for horizon in config.horizons:
            counted = param_count(lookback, horizon, rank, config.with_bias, use_haar, head)
            row = {
                "axis": axis,
                "value": point["value"],
                "lookback": lookback,
                "horizon": horizon,
                "mse": "",
                "params": counted.total,
                "params_display": kilo_display(counted.total),
            }
            if not params_only:
                _, _, report = run_single(
                    config, dataset, lookback, horizon, rank,
                    eta=config.noise_eta, seed=seed,
                    head=head, use_haar=use_haar, use_dct=use_dct,
                )
                row["mse"] = repr(report.mse)
                print(
                    f"ablate axis={axis} value={point['value']} H={horizon} "
                    f"mse={report.mse:.6f} params={counted.total}"
                )
            rows.append(row)

    out_root = os.path.join(config.outdir, config.dataset)
    os.makedirs(out_root, exist_ok=True)
    out_path = os.path.join(out_root, f"ablate_{axis}.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as handle:
        handle.write(f"# config_fingerprint={config.fingerprint()}\n")
        writer = csv.writer(handle)
        header = ["axis", "value", "lookback", "horizon", "mse", "params", "params_display"]
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[col] for col in header])
    print(f"ablate table written to {out_path}")
    return out_path


def cmd_params(config: ExperimentConfig) -> None:
    """Print parameter counts for the configured variant at every horizon."""
    for horizon in config.horizons:
        counted = param_count(
            config.lookback, horizon, config.rank, config.with_bias,
            config.use_haar, config.head,
        )
        detail = " + ".join(f"{k}={v}" for k, v in counted.breakdown.items())
        print(
            f"L={config.lookback} H={horizon} rank={config.rank} head={config.head} "
            f"haar={config.use_haar} bias={config.with_bias}: "
            f"{counted.total} parameters ({kilo_display(counted.total)}) [{detail}]"
        )


def cmd_export_weights(checkpoint_path: str, out_path: str) -> None:
    """Dump the effective d_in x H weight matrix of a low-rank checkpoint
    as a plain CSV matrix (one row per input feature)."""
    model = load_checkpoint(checkpoint_path)
    weight = effective_weight(model)
    with open(out_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        for row in weight:
            writer.writerow([repr(float(v)) for v in row])
    print(f"wrote {weight.shape[0]}x{weight.shape[1]} weight matrix to {out_path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hadl",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat `key = value` config file")
        for f in fields(ExperimentConfig):
            flag = "--" + f.name.replace("_", "-")
            p.add_argument(flag, dest=f.name, metavar="V",
                           help=f"override config key {f.name} (default {f.default!r})")

    p_train = sub.add_parser("train", help="train and evaluate per horizon")
    p_train.add_argument("--workers", type=int, default=1,
                         help="run the (horizon, seed) grid in N parallel processes")
    add_config_args(p_train)

    p_rob = sub.add_parser("robustness", help="noise sweep with NRR/MAV report")
    p_rob.add_argument("--workers", type=int, default=1,
                       help="train the noise intensities in N parallel processes")
    add_config_args(p_rob)

    p_abl = sub.add_parser("ablate", help="variant-grid table for one axis")
    p_abl.add_argument("axis", choices=ABLATION_AXES)
    p_abl.add_argument("--params-only", action="store_true",
                       help="skip training; emit parameter counts only")
    add_config_args(p_abl)

    p_params = sub.add_parser("params", help="print parameter counts")
    add_config_args(p_params)

    p_export = sub.add_parser("export-weights", help="dump effective weight matrix as CSV")
    p_export.add_argument("checkpoint")
    p_export.add_argument("out")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cmd_train(resolve_config(args), workers=args.workers)
        elif args.command == "robustness":
            cmd_robustness(resolve_config(args), workers=args.workers)
        elif args.command == "ablate":
            cmd_ablate(resolve_config(args), args.axis, params_only=args.params_only)
        elif args.command == "params":
            cmd_params(resolve_config(args))
        elif args.command == "export-weights":
            cmd_export_weights(args.checkpoint, args.out)
    except (HadlError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
