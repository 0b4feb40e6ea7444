"""Command-line workflow: train, predict, evaluate, ablate, gradcheck, synth.

Run configuration lives in a flat JSON file (schema in the README); every
command validates its whole configuration before touching the filesystem.
Errors exit nonzero with a single ``error:<category>: <message>`` line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import gradchecks
from .checkpoint import load_checkpoint, save_checkpoint
from .data import RawSeries, SYNTH_KINDS, chronological_split, load_csv, sliding_windows, synth_generate, write_csv
from .errors import ConfigError, DataError, DiffcastError
from .pipeline import ModelConfig, evaluate_windows, predict, train_loop

GRADCHECK_TOLERANCE = 1e-4


@dataclass
class RunConfig:
    """Flat run configuration; JSON keys map 1:1 onto these fields."""

    d: int
    lookback: int
    horizon: int
    dataset: str | None = None
    synth_kind: str | None = None
    synth_n: int = 2000
    synth_noise_std: float = 0.1
    split_ratios: str = "6:2:2"
    eval_stride: int = 1
    hidden: int = 256
    k_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.1
    mixup: str = "soft"
    mixup_tau: float = 0.5
    use_ar: bool = True
    head: str = "data"
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    ar_epochs: int = 20
    sample_count: int = 10
    sampler_steps: int | None = None
    train_stride: int = 1
    valid_steps: int | None = None
    valid_max_windows: int | None = None
    seed: int = 0
    out_dir: str = "diffcast_run"

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            d=self.d, lookback=self.lookback, horizon=self.horizon, hidden=self.hidden,
            k_steps=self.k_steps, beta_start=self.beta_start, beta_end=self.beta_end,
            mixup=self.mixup, mixup_tau=self.mixup_tau, use_ar=self.use_ar, head=self.head,
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience, ar_epochs=self.ar_epochs,
            sample_count=self.sample_count, sampler_steps=self.sampler_steps,
            train_stride=self.train_stride, valid_steps=self.valid_steps,
            valid_max_windows=self.valid_max_windows, seed=self.seed,
        ).validate()

    def ratios(self) -> list[float]:
        try:
            parts = [float(p) for p in str(self.split_ratios).split(":")]
        except ValueError:
            raise ConfigError(f"split_ratios must look like '6:2:2', got {self.split_ratios!r}") from None
        if len(parts) != 3:
            raise ConfigError(f"split_ratios needs three parts, got {self.split_ratios!r}")
        return parts

    def validate(self) -> "RunConfig":
        self.model_config()
        self.ratios()
        if self.dataset is None and self.synth_kind is None:
            raise ConfigError("config needs either 'dataset' (CSV path) or 'synth_kind'")
        if self.synth_kind is not None and self.synth_kind not in SYNTH_KINDS:
            raise ConfigError(f"unknown synth_kind '{self.synth_kind}'")
        if self.eval_stride < 1:
            raise ConfigError("eval_stride must be >= 1")
        return self


def load_run_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object of key/value pairs")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in ("d", "lookback", "horizon") if k not in raw]
    if missing:
        raise ConfigError(f"config is missing required keys: {', '.join(missing)}")
    return RunConfig(**raw).validate()


def _load_series(cfg: RunConfig) -> RawSeries:
    if cfg.dataset is not None:
        series = load_csv(cfg.dataset)
    else:
        series = synth_generate(cfg.synth_kind, cfg.d, cfg.synth_n, cfg.synth_noise_std, cfg.seed)
    if series.d != cfg.d:
        raise ConfigError(f"config declares d={cfg.d} but the dataset has {series.d} variables")
    return series


def _splits(cfg: RunConfig):
    series = _load_series(cfg)
    return chronological_split(series, cfg.ratios(), min_length=cfg.lookback + cfg.horizon)


def _train_one(cfg: RunConfig, model_config: ModelConfig):
    train_part, valid_part, _ = _splits(cfg)
    train_w = sliding_windows(train_part, cfg.lookback, cfg.horizon, model_config.train_stride)
    valid_w = sliding_windows(valid_part, cfg.lookback, cfg.horizon)
    return train_loop(train_w, valid_w, model_config)


def _test_mse(cfg: RunConfig, checkpoint, *, threads: int = 1) -> float:
    _, _, test_part = _splits(cfg)
    test_w = sliding_windows(test_part, cfg.lookback, cfg.horizon, cfg.eval_stride)
    mse, _ = evaluate_windows(checkpoint, test_w, n_samples=cfg.sample_count,
                              steps=cfg.sampler_steps, seed=cfg.seed, threads=threads)
    return mse


def _threads_from_env() -> int:
    raw = os.environ.get("DIFFCAST_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"DIFFCAST_THREADS must be an integer, got {raw!r}") from None


def _write_history_csv(path, history) -> None:
    lines = ["epoch,train_loss,valid_mse"]
    lines += [f"{h['epoch']},{h['train_loss']!r},{h['valid_mse']!r}" for h in history]
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    cfg.validate()
    model_config = cfg.model_config()
    checkpoint = _train_one(cfg, model_config)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(checkpoint, out / "checkpoint.bin")
    _write_history_csv(out / "loss_history.csv", checkpoint.history)
    print(f"trained {checkpoint.epoch} epochs, best validation mse {checkpoint.best_val!r}")
    print(f"wrote {out / 'checkpoint.bin'} and {out / 'loss_history.csv'}")
    return 0


def cmd_predict(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    cfg = checkpoint.config
    series = load_csv(args.input)
    if series.d != cfg.d:
        raise DataError(f"checkpoint expects {cfg.d} variables, input has {series.d}")
    if series.n < cfg.lookback:
        raise DataError(f"input has {series.n} rows, lookback needs {cfg.lookback}")
    lookback = series.values[-cfg.lookback :].T
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg.seed)
    forecast = predict(lookback, checkpoint, n_samples=args.samples, steps=args.steps, rng=rng)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "forecast.csv"
    write_csv(path, RawSeries(values=forecast.T, names=series.names))
    print(f"wrote {path} ({cfg.horizon} rows x {cfg.d} variables)")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    cfg.validate()
    checkpoint = load_checkpoint(args.checkpoint)
    for name in ("d", "lookback", "horizon"):
        if getattr(checkpoint.config, name) != getattr(cfg, name):
            raise ConfigError(f"checkpoint {name}={getattr(checkpoint.config, name)} "
                              f"disagrees with config {name}={getattr(cfg, name)}")
    parts = dict(zip(("train", "valid", "test"), _splits(cfg)))
    part = parts[args.split]
    windows = sliding_windows(part, cfg.lookback, cfg.horizon, cfg.eval_stride)
    samples = args.samples or cfg.sample_count
    steps = args.steps or cfg.sampler_steps
    mse, per_window = evaluate_windows(checkpoint, windows, n_samples=samples,
                                       steps=steps, seed=cfg.seed, threads=_threads_from_env())
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = [
        f"split={args.split}",
        f"windows={len(windows)}",
        f"mse={mse!r}",
        f"samples={samples}",
        f"steps={steps or checkpoint.schedule.K}",
        f"seed={cfg.seed}",
        f"config={json.dumps(raw_config_dict(cfg), sort_keys=True)}",
    ]
    (out / "metrics.txt").write_text("\n".join(report) + "\n")
    if args.per_window:
        lines = ["window,mse"] + [f"{i},{v!r}" for i, v in enumerate(per_window)]
        (out / "per_window.csv").write_text("\n".join(lines) + "\n")
    print(f"{args.split} mse over {len(windows)} windows: {mse!r}")
    print(f"wrote {out / 'metrics.txt'}")
    return 0


def raw_config_dict(cfg: RunConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}


def _ablation_cells(cfg: RunConfig, suite: str):
    base = cfg.model_config()
    if suite == "conditioning":
        strategy = cfg.mixup if cfg.mixup != "none" else "soft"
        for use_mixup in (True, False):
            for use_ar in (True, False):
                label = {"mixup": "on" if use_mixup else "off", "ar": "on" if use_ar else "off"}
                yield label, _replace(base, mixup=strategy if use_mixup else "none", use_ar=use_ar)
    elif suite == "mixup":
        yield {"strategy": "soft", "tau": ""}, _replace(base, mixup="soft")
        for strategy in ("hard", "segment"):
            for tau in (0.1, 0.3, 0.5, 0.7, 0.9):
                yield {"strategy": strategy, "tau": tau}, _replace(base, mixup=strategy, mixup_tau=tau)
    elif suite == "head":
        for head in ("data", "noise"):
            yield {"head": head}, _replace(base, head=head)
    else:
        raise ConfigError(f"unknown ablation suite '{suite}' (conditioning | mixup | head)")


def _replace(base: ModelConfig, **kw) -> ModelConfig:
    from dataclasses import replace

    return replace(base, **kw).validate()


def cmd_ablate(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    cfg.validate()
    cells = list(_ablation_cells(cfg, args.suite))
    threads = _threads_from_env()
    rows = []
    for label, model_config in cells:
        checkpoint = _train_one(cfg, model_config)
        mse = _test_mse(cfg, checkpoint, threads=threads)
        rows.append((label, mse))
        print(" ".join(f"{k}={v}" for k, v in label.items()) + f" mse={mse!r}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0][0].keys()) + ["mse"]
    lines = [",".join(columns)]
    lines += [",".join([str(label[c]) for c in columns[:-1]] + [repr(mse)]) for label, mse in rows]
    path = out / f"ablation_{args.suite}.csv"
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = gradchecks.run_suite(seed=seed)
    failed = []
    for name, err in results.items():
        status = "ok" if err < GRADCHECK_TOLERANCE else "FAIL"
        if status == "FAIL":
            failed.append(name)
        print(f"group={name} max_rel_err={err:.3e} status={status}")
    if failed:
        print(f"error:gradcheck: groups over tolerance {GRADCHECK_TOLERANCE:g}: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(results)} groups under {GRADCHECK_TOLERANCE:g}")
    return 0


def cmd_synth(args) -> int:
    series = synth_generate(args.kind, args.dims, args.length, args.noise_std, args.seed or 0)
    out = Path(args.out or "synth.csv")
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, series)
    print(f"wrote {out} ({series.n} rows x {series.d} variables)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffcast",
                                     description="Diffusion-based time-series forecasting workflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (overrides config out_dir)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="forecast from the last lookback rows of a CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="CSV with at least lookback rows")
    p.add_argument("--samples", type=int, help="forecast draws to average (default: checkpoint config)")
    p.add_argument("--steps", type=int, help="denoising steps (default: full schedule)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="mean squared error over a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--samples", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--per-window", action="store_true", help="also write per-window MSEs as CSV")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="train/evaluate a suite of config variants")
    p.add_argument("--config", required=True)
    p.add_argument("--suite", required=True, choices=("conditioning", "mixup", "head"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--kind", required=True, choices=SYNTH_KINDS)
    p.add_argument("--dims", type=int, default=1)
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except DiffcastError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
