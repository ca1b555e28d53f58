"""Command-line front end: synth, train, infer, eval, gradcheck and bench.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort
(including a failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")
THREADS_WARNING = ("warning: --threads > 1 lets BLAS split the batch across threads; "
                   "results are bit-reproducible only with --threads 1")


class UsageError(Exception):
    """Inconsistent flags or configuration (exit code 2)."""


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radiomamba", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS/numba threads (default 1; only 1 is bit-deterministic)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--mode", default="SRM", help="SRM or DRM")
    p.add_argument("--count", type=int, required=True, help="number of training samples")
    p.add_argument("--val", type=int, default=0, help="number of validation samples")
    p.add_argument("--test", type=int, default=0, help="number of test samples")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path, help="key=value overlay (flags take precedence)")
    p.add_argument("--mode")
    p.add_argument("--grid", type=int)
    p.add_argument("--base-channels", type=int)
    p.add_argument("--state-dim", type=int)
    p.add_argument("--conv-variant", choices=("depthwise_separable", "standard"))
    p.add_argument("--scan-mode", choices=("sequential", "parallel"))
    p.add_argument("--loss-weights", type=_floats, help="w_l1,w_mse,w_ssim,w_grad")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--val-every", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None,
                   help="random flips/quarter turns of training pairs (default on)")
    p.add_argument("--resume", action="store_true", help="continue from <out>/last.ckpt")

    p = sub.add_parser("infer", help="predict maps for every sample directory under --input-dir")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--input-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="score a checkpoint (or a baseline) on a dataset split")
    p.add_argument("--ckpt", type=Path)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--report", type=Path, required=True, help="output stem; writes <stem>.txt and <stem>.json")
    p.add_argument("--predictor", default="model", choices=("model", "free-space", "mean-target", "ground-truth"))
    p.add_argument("--latency-runs", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite in 64-bit")
    p.add_argument("--scope", default="ops", choices=("ops", "ssm", "block", "model"))
    p.add_argument("--tol", type=float, help="override the scope's default tolerance")
    p.add_argument("--corrupt-backward", action="store_true",
                   help="negative control: scale every backward rule by 1.1 (must fail)")

    p = sub.add_parser("bench", help="selective-scan runtime against sequence length")
    p.add_argument("--scan-lengths", type=_ints, default=[256, 1024, 4096, 16384])
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--state-dim", type=int, default=8)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--report", type=Path, help="output stem; writes <stem>.txt and <stem>.json")
    return parser


# -- synth --------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .data import DataError, normalize_mode, save_map, synth_generate, write_manifest
    from .data.synth import G_SCALE, KAPPA, MIN_GRID
    from .seeding import derive_seed

    mode = normalize_mode(args.mode)
    if args.grid < MIN_GRID:
        raise UsageError(f"--grid must be at least {MIN_GRID}, got {args.grid}")
    counts = {"train": args.count, "val": args.val, "test": args.test}
    if any(n < 0 for n in counts.values()):
        raise UsageError("sample counts must be non-negative")
    root = args.out
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"{root}: cannot create output directory ({exc.strerror})") from None
    for split_index, (split, n) in enumerate(counts.items()):
        for i in range(n):
            sample = synth_generate(derive_seed(args.seed, "synth", split_index, i), args.grid, mode)
            save_map(root / split / f"map_{i:05d}", sample, mode)
    write_manifest(root, mode, args.grid, counts, {"seed": args.seed, "kappa": KAPPA, "g_scale": G_SCALE})
    print(f"wrote {sum(counts.values())} {mode} samples ({args.grid}x{args.grid}) to {root}")
    return EXIT_OK


# -- train --------------------------------------------------------------------

_TRAIN_FLAGS = {
    "grid": "model.grid", "base_channels": "model.base_channels", "state_dim": "model.state_dim",
    "conv_variant": "model.conv_variant", "scan_mode": "model.scan_mode", "loss_weights": "train.loss_weights",
    "steps": "train.steps", "batch_size": "train.batch_size", "val_every": "train.val_every",
    "seed": "train.seed", "mode": "train.mode", "augment": "train.augment",
}


def resolve_train_config(args, manifest: dict):
    """Defaults, then the --config file, then explicit flags; returns (ModelConfig, TrainConfig)."""
    from . import config as cfgio
    from .data import DataError, input_channels, normalize_mode, parse_key_values
    from .train import TrainConfig
    from .unet import ModelConfig

    kv = {}
    if args.config is not None:
        try:
            kv.update(parse_key_values(args.config.read_text(), str(args.config)))
        except OSError as exc:
            raise UsageError(f"{args.config}: cannot read config file ({exc.strerror})") from None
        except DataError as exc:
            raise UsageError(str(exc)) from None
        # a run's echoed config.txt is a valid overlay; its data path is informational
        kv.pop("data", None)
        unknown = [k for k in kv if not k.startswith(("model.", "train."))]
        if unknown:
            raise UsageError(f"{args.config}: unknown configuration keys {unknown}")
    for attr, key in _TRAIN_FLAGS.items():
        value = getattr(args, attr)
        if value is not None:
            kv[key] = cfgio.format_value(value)
    kv.setdefault("train.mode", manifest["mode"])
    kv.setdefault("model.grid", str(manifest["grid"]))
    try:
        kv["train.mode"] = normalize_mode(kv["train.mode"])
    except DataError as exc:
        raise UsageError(str(exc)) from None
    kv["model.input_channels"] = str(input_channels(kv["train.mode"]))
    model_cfg = cfgio.from_strings(ModelConfig, kv, prefix="model.", base=ModelConfig())
    train_cfg = cfgio.from_strings(TrainConfig, kv, prefix="train.", base=TrainConfig())
    model_cfg.validate()
    train_cfg.validate()
    if train_cfg.mode != manifest["mode"]:
        raise UsageError(f"mode {train_cfg.mode} does not match the dataset's {manifest['mode']}")
    if model_cfg.grid != manifest["grid"]:
        raise UsageError(f"model grid {model_cfg.grid} does not match the dataset grid {manifest['grid']}")
    return model_cfg, train_cfg


def cmd_train(args) -> int:
    from . import config as cfgio
    from .data import load_dataset, read_manifest
    from .seeding import derive_seed
    from .train import train_loop
    from .unet import build_model, count_parameters

    manifest = read_manifest(args.data)
    model_cfg, train_cfg = resolve_train_config(args, manifest)
    train = load_dataset(args.data, "train")
    val = load_dataset(args.data, "val")
    args.out.mkdir(parents=True, exist_ok=True)
    resolved = {**cfgio.to_strings(model_cfg, "model."), **cfgio.to_strings(train_cfg, "train."),
                "data": str(args.data.resolve())}
    (args.out / "config.txt").write_text(cfgio.dump(resolved))
    model = build_model(model_cfg, seed=derive_seed(train_cfg.seed, "init"))
    total, _ = count_parameters(model)
    print(f"model: {total} parameters; {len(train)} train / {len(val)} val samples")
    state, history = train_loop(model, train, val, train_cfg, args.out, resume=args.resume,
                                log=lambda msg: print(msg, flush=True))
    summary = {"steps": state.step, "best_val_nmse": state.best_val,
               "final_loss": history.steps[-1]["loss"] if history.steps else None,
               "final_validation": history.validation[-1] if history.validation else None}
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"done: best validation NMSE {state.best_val:.6f}; checkpoints in {args.out}")
    return EXIT_OK


# -- infer --------------------------------------------------------------------

def _map_dirs(root: Path) -> list[Path]:
    if (root / "buildings.png").is_file():
        return [root]
    return sorted(p.parent for p in root.rglob("buildings.png"))


def inference_inputs(root: Path, input_channels: int, grid: int):
    """Yield (name, x) for every transmitter file found under ``root``; x is (C_in, grid, grid)."""
    import re

    import numpy as np

    from .data import DataError, read_png

    def binary(path: Path) -> np.ndarray:
        img = read_png(path)
        if img.shape != (grid, grid):
            raise DataError(f"{path}: expected {grid}x{grid}, got {img.shape[0]}x{img.shape[1]}")
        return (img >= 128).astype(np.float32)

    dirs = _map_dirs(root)
    if not dirs:
        raise DataError(f"{root}: no map directories (buildings.png) found")
    for d in dirs:
        h_s = binary(d / "buildings.png")
        h_d = binary(d / "vehicles.png") if input_channels == 3 else None
        tx = sorted((int(m.group(1)), f) for f in d.iterdir() if (m := re.fullmatch(r"tx_(\d+)\.png", f.name)))
        if not tx:
            raise DataError(f"{d}: no tx_<k>.png files")
        for k, path in tx:
            r = binary(path)
            if int(r.sum()) != 1:
                raise DataError(f"{path}: transmitter map must have exactly one hot pixel")
            planes = [h_s, h_d, r] if h_d is not None else [h_s, r]
            yield d.relative_to(root) if d != root else Path(d.name), k, np.stack(planes)


def cmd_infer(args) -> int:
    from .data import to_gray, write_f32grid, write_png
    from .train import build_from_checkpoint, predict

    model, _ = build_from_checkpoint(args.ckpt)
    cfg = model.config
    rows = []
    for rel, k, x in inference_inputs(args.input_dir, cfg.input_channels, cfg.grid):
        t0 = time.perf_counter()
        pred = predict(model, x[None])[0, 0]
        seconds = time.perf_counter() - t0
        target = args.out / rel
        target.mkdir(parents=True, exist_ok=True)
        write_png(target / f"pred_{k}.png", to_gray(pred))
        write_f32grid(target / f"pred_{k}.f32grid", pred)
        rows.append(f"{rel.as_posix()}/{k},{seconds!r}")
    (args.out / "timing.csv").write_text("sample,seconds\n" + "".join(r + "\n" for r in rows))
    print(f"wrote {len(rows)} predictions to {args.out}")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------

def free_space_prediction(samples, g_scale: float):
    """Gain from distance alone, as if no obstacle existed."""
    import numpy as np

    from .data import free_space_gain

    out = []
    for s in samples:
        ti, tj = s.transmitter
        ii, jj = np.indices(s.p.shape)
        out.append(free_space_gain(np.hypot(ii - ti, jj - tj), g_scale)[None])
    return np.stack(out)


def mean_target_prediction(reference, count: int):
    """The pixelwise mean target of ``reference``, repeated ``count`` times."""
    import numpy as np

    mean = np.mean([s.p for s in reference], axis=0)
    return np.repeat(mean[None, None], count, axis=0)


def score(pred, samples) -> dict[str, float]:
    import numpy as np

    from .losses import metrics

    per = [metrics(p[0], s.p) for p, s in zip(pred, samples)]
    return {k: float(np.mean([m[k] for m in per])) for k in ("nmse", "rmse", "ssim", "psnr")}


def evaluate_dataset(data: Path, split: str, predictor: str = "model", ckpt: Path | None = None,
                     latency_runs: int = 20, warmup: int = 3) -> dict:
    """Metrics for ``predictor`` on ``split``, and both baselines when scoring a model."""
    import numpy as np

    from .bench import latency_stats
    from .data import DataError, load_dataset, read_manifest, stack
    from .data.synth import G_SCALE

    manifest = read_manifest(data)
    samples = load_dataset(data, split)
    if not samples:
        raise DataError(f"{data}: split {split!r} is empty")
    g_scale = float(manifest["extra"].get("g_scale", G_SCALE))
    train = load_dataset(data, "train") if manifest["train"] else []
    reference = train or samples
    baselines = {
        "free-space": lambda: free_space_prediction(samples, g_scale),
        "mean-target": lambda: mean_target_prediction(reference, len(samples)),
        "ground-truth": lambda: np.stack([s.p[None] for s in samples]),
    }
    report = {"data": str(data), "split": split, "samples": len(samples), "predictor": predictor,
              "mean_target_reference": "train" if train else split}
    if predictor != "model":
        report["metrics"] = score(baselines[predictor](), samples)
        return report
    if ckpt is None:
        raise UsageError("--ckpt is required when --predictor is model")
    from .train import build_from_checkpoint, predict

    model, _ = build_from_checkpoint(ckpt)
    if model.config.grid != manifest["grid"]:
        raise UsageError(f"checkpoint grid {model.config.grid} does not match dataset grid {manifest['grid']}")
    x, _ = stack(samples, manifest["mode"])
    report["checkpoint"] = str(ckpt)
    report["metrics"] = score(predict(model, x), samples)
    report["baselines"] = {name: score(baselines[name](), samples) for name in ("free-space", "mean-target")}
    report["nmse_improvement"] = {name: b["nmse"] / max(report["metrics"]["nmse"], 1e-30)
                                  for name, b in report["baselines"].items()}
    single = x[:1]
    report["latency"] = latency_stats(lambda: predict(model, single), runs=latency_runs, warmup=warmup)
    return report


def format_report(report: dict) -> str:
    lines = [f"split {report['split']} ({report['samples']} samples), predictor {report['predictor']}"]

    def row(name, m):
        return f"  {name:<12} NMSE {m['nmse']:.6f}  RMSE {m['rmse']:.6f}  SSIM {m['ssim']:.4f}  PSNR {m['psnr']:.2f} dB"

    lines.append(row(report["predictor"], report["metrics"]))
    for name, m in report.get("baselines", {}).items():
        lines.append(row(name, m) + f"  (model NMSE {report['nmse_improvement'][name]:.1f}x lower)")
    if "latency" in report:
        lat = report["latency"]
        lines.append(f"  latency over {lat['runs']} runs after {lat['warmup']} warmups: mean {lat['mean_s'] * 1e3:.2f} ms, "
                     f"median {lat['median_s'] * 1e3:.2f} ms, p95 {lat['p95_s'] * 1e3:.2f} ms")
    return "\n".join(lines) + "\n"


def _write_report(stem: Path, report: dict, text: str) -> None:
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".json").write_text(json.dumps(report, indent=2) + "\n")
    stem.with_suffix(".txt").write_text(text)


def cmd_eval(args) -> int:
    report = evaluate_dataset(args.data, args.split, args.predictor, args.ckpt, args.latency_runs, args.warmup)
    text = format_report(report)
    _write_report(args.report, report, text)
    print(text, end="")
    return EXIT_OK


# -- gradcheck / bench ----------------------------------------------------------

def cmd_gradcheck(args) -> int:
    from .verify import DEFAULT_TOL, run_scope

    tol = DEFAULT_TOL[args.scope] if args.tol is None else args.tol
    results = run_scope(args.scope, tol=tol, corrupt=args.corrupt_backward)
    for name, report in results:
        print(f"{'PASS' if report.passed else 'FAIL'}  {name:<36} max_error {report.max_error:.3e}  "
              f"({report.checked} entries)")
    failed = [name for name, r in results if not r.passed]
    print(f"{args.scope}: {len(results) - len(failed)}/{len(results)} passed at tol {tol:g}")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_bench(args) -> int:
    from .bench import time_scan

    if len(args.scan_lengths) < 2 or min(args.scan_lengths) < 1:
        raise UsageError("--scan-lengths needs at least two positive lengths")
    timings = time_scan(args.scan_lengths, args.channels, args.state_dim, repeats=args.repeats)
    lines = [f"selective scan, C={args.channels}, N={args.state_dim}, best of {args.repeats}"]
    for t in timings:
        cells = "  ".join(f"L={L}: {s * 1e3:.3f} ms" for L, s in zip(t.lengths, t.seconds))
        lines.append(f"  {t.mode:<10} slope {t.slope:.3f}  {cells}")
    text = "\n".join(lines) + "\n"
    if args.report is not None:
        report = {"channels": args.channels, "state_dim": args.state_dim, "repeats": args.repeats,
                  "modes": {t.mode: {"lengths": t.lengths, "seconds": t.seconds, "slope": t.slope}
                            for t in timings}}
        _write_report(args.report, report, text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "infer": cmd_infer, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck, "bench": cmd_bench}


def _configure_threads(threads: int) -> None:
    if threads < 1:
        raise UsageError(f"--threads must be positive, got {threads}")
    for var in THREAD_VARS:
        os.environ[var] = str(threads)
    if threads > 1:
        print(THREADS_WARNING, file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        # must happen before numpy or numba are first imported
        _configure_threads(args.threads)
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return code


def _exit_code(exc: Exception) -> int | None:
    from .autodiff import ConfigurationError, DimensionError, NumericError
    from .data import DataError
    from .ssm import DomainError
    from .train import CheckpointError

    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (UsageError, ConfigurationError, DimensionError, DomainError)):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, CheckpointError, OSError)):
        return EXIT_DATA
    return None


if __name__ == "__main__":
    sys.exit(main())
