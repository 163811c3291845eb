"""Single command-line entry point.

Subcommands: ``synth`` (HR PNGs -> synthetic bursts), ``init`` (seeded
random weights), ``infer`` (burst manifest -> HR PNG), ``eval``
(prediction/ground-truth dirs -> JSON + CSV report), ``check`` (oracle and
invariant suites), ``bench`` (scan kernel timing table).

Every subcommand accepts ``--config FILE`` pointing at a JSON key-value
document whose keys are the flag names with underscores; precedence is
flag > file > default. All numerical outputs are deterministic for fixed
flags and seeds (wall times excluded). Exit status is 0 only if all work
succeeded, and for ``check``, all checks passed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .bench import ratio_grows, rows_to_csv, run_bench
from .checks import SUITES, run_suite
from .errors import BurstSrError, ValidationError
from .metrics import EvalReport, report_to_csv, report_to_json, score_pair
from .pipeline import (
    ModelConfig,
    align,
    config_from_weights,
    forward,
    init_weights,
    load_weights,
    save_weights,
)
from .synthburst import NoiseParams, generate_burst, load_burst, load_image, save_burst, save_image

SYNTH_DEFAULTS = {
    "input_dir": None,
    "out_dir": None,
    "frames": 14,
    "scale": 4,
    "sigma_read": 0.02,
    "sigma_shot": 0.02,
    "max_shift": 3.0,
    "seed": 0,
    "input_mode": "raw4",
    "gamma": True,
}
INIT_DEFAULTS = {
    "out": None,
    "seed": 0,
    "burst_size": 14,
    "scale": 4,
    "c_feat": 32,
    "d_state": 16,
    "qssm_blocks": 2,
    "msfm_blocks": 2,
    "input_mode": "raw4",
}
INFER_DEFAULTS = {"weights": None, "burst_manifest": None, "out": None}
EVAL_DEFAULTS = {"pred_dir": None, "gt_dir": None, "report": None}
CHECK_DEFAULTS = {"suite": "all", "seed": 0}
BENCH_DEFAULTS = {"lengths": "64,256,1024,4096", "channels": 32, "state": 16, "seed": 0, "repeats": 3, "out": None}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"config file {path}: expected a JSON object")
    return doc


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """flag > file > default; unknown file keys are rejected up front."""
    file_cfg = _load_config_file(args.config)
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ValidationError(f"config file has unknown keys: {sorted(unknown)}")
    merged = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key)
        merged[key] = flag_val if flag_val is not None else file_cfg.get(key, default)
    return merged


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if cfg[key] is None:
            raise ValidationError(f"missing required option --{key.replace('_', '-')}")


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args, SYNTH_DEFAULTS)
    _require(cfg, "input_dir", "out_dir")
    if cfg["frames"] < 2:
        raise ValidationError(f"a burst needs at least 2 frames, got {cfg['frames']}")
    images = sorted(Path(cfg["input_dir"]).glob("*.png"))
    if not images:
        raise ValidationError(f"no PNG images found in {cfg['input_dir']}")
    noise = NoiseParams(sigma_read=cfg["sigma_read"], sigma_shot=cfg["sigma_shot"])
    for i, path in enumerate(images):
        hr = load_image(path)
        if hr.shape[0] != 3:
            raise ValidationError(f"{path}: expected an RGB image, got {hr.shape[0]} channels")
        stack, gt = generate_burst(
            hr,
            cfg["frames"],
            cfg["scale"],
            noise,
            cfg["max_shift"],
            seed=cfg["seed"] + i,
            input_mode=cfg["input_mode"],
            gamma=cfg["gamma"],
        )
        manifest = save_burst(stack, gt, cfg["out_dir"], path.stem)
        print(f"{path.name}: {cfg['frames']} frames -> {manifest.parent}")
    print(f"synthesized {len(images)} burst(s) in {cfg['out_dir']}")
    return 0


def cmd_init(args: argparse.Namespace) -> int:
    cfg = _resolve(args, INIT_DEFAULTS)
    _require(cfg, "out")
    model_cfg = ModelConfig(
        burst_size=cfg["burst_size"],
        scale=cfg["scale"],
        c_feat=cfg["c_feat"],
        d_state=cfg["d_state"],
        num_qssm_blocks=cfg["qssm_blocks"],
        num_msfm_blocks=cfg["msfm_blocks"],
        input_mode=cfg["input_mode"],
    )
    weights = init_weights(model_cfg, seed=cfg["seed"])
    save_weights(weights, cfg["out"])
    n_params = sum(int(np.prod(w.shape)) if w.shape else 1 for w in weights.values())
    print(f"wrote {len(weights)} tensors ({n_params} parameters) to {cfg['out']}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    cfg = _resolve(args, INFER_DEFAULTS)
    _require(cfg, "weights", "burst_manifest", "out")
    if not Path(cfg["weights"]).is_file():
        raise ValidationError(f"weights file not found: {cfg['weights']}")
    weights = load_weights(cfg["weights"])
    model_cfg = config_from_weights(weights)
    stack, _ = load_burst(cfg["burst_manifest"])
    aligned = align(stack, stack.shifts)
    t0 = time.perf_counter()
    out = forward(aligned, weights, model_cfg)
    wall = time.perf_counter() - t0
    save_image(out, cfg["out"], bit_depth=16)
    print(f"output shape {out.shape[0]}x{out.shape[1]}x{out.shape[2]}, forward time {wall:.3f}s -> {cfg['out']}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve(args, EVAL_DEFAULTS)
    _require(cfg, "pred_dir", "gt_dir", "report")
    preds = {p.name: p for p in sorted(Path(cfg["pred_dir"]).glob("*.png"))}
    gts = {p.name: p for p in sorted(Path(cfg["gt_dir"]).glob("*.png"))}
    if not preds or not gts:
        raise ValidationError(f"no PNGs to compare (pred: {len(preds)}, gt: {len(gts)})")
    orphans = sorted(set(preds) ^ set(gts))
    if orphans:
        raise ValidationError(f"unmatched filenames between pred and gt dirs: {orphans}")
    scores = [score_pair(name, load_image(preds[name]), load_image(gts[name])) for name in sorted(preds)]
    report = EvalReport.from_scores(scores)
    report_path = Path(cfg["report"])
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report_to_json(report))
    report_path.with_suffix(".csv").write_text(report_to_csv(report))
    mean_psnr = report.aggregate["mean_psnr"]
    psnr_text = "inf" if mean_psnr == float("inf") else f"{mean_psnr:.4f}"
    print(f"{report.aggregate['count']} image(s): mean PSNR {psnr_text} dB, mean SSIM {report.aggregate['mean_ssim']:.4f}")
    print(f"report -> {report_path} and {report_path.with_suffix('.csv')}")
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    cfg = _resolve(args, CHECK_DEFAULTS)
    if cfg["suite"] != "all" and cfg["suite"] not in SUITES:
        raise ValidationError(f"unknown suite {cfg['suite']!r}, expected one of {SUITES + ('all',)}")
    results = run_suite(cfg["suite"], seed=cfg["seed"])
    failed = 0
    for res in results:
        tag = " ok " if res.passed else "FAIL"
        detail = f" — {res.detail}" if res.detail else ""
        print(f"[{tag}] {res.name}{detail}")
        failed += 0 if res.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _resolve(args, BENCH_DEFAULTS)
    try:
        lengths = [int(tok) for tok in str(cfg["lengths"]).split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --lengths value {cfg['lengths']!r}") from exc
    if not lengths:
        raise ValidationError("--lengths must name at least one sequence length")
    rows = run_bench(lengths, channels=cfg["channels"], state=cfg["state"], seed=cfg["seed"], repeats=cfg["repeats"])
    print(f"{'L':>6} {'scan s':>10} {'closed s':>10} {'tokens/s':>12} {'ratio':>10}")
    for r in rows:
        print(f"{r.length:>6} {r.scan_seconds:>10.4g} {r.closed_seconds:>10.4g} {r.scan_tokens_per_s:>12.4g} {r.ratio:>10.4g}")
    csv_text = rows_to_csv(rows)
    if cfg["out"]:
        Path(cfg["out"]).write_text(csv_text)
        print(f"csv -> {cfg['out']}")
    if not ratio_grows(rows):
        print("FAIL: closed-form/scan time ratio did not grow with L")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="burstsr", description="Burst super-resolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic RAW bursts from HR PNGs")
    p.add_argument("--config")
    p.add_argument("--input-dir")
    p.add_argument("--out-dir")
    p.add_argument("--frames", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--sigma-read", type=float)
    p.add_argument("--sigma-shot", type=float)
    p.add_argument("--max-shift", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--input-mode", choices=["raw4", "rgb3"])
    p.add_argument("--gamma", action=argparse.BooleanOptionalAction)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("init", help="write seeded random model weights")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--burst-size", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--c-feat", type=int)
    p.add_argument("--d-state", type=int)
    p.add_argument("--qssm-blocks", type=int)
    p.add_argument("--msfm-blocks", type=int)
    p.add_argument("--input-mode", choices=["raw4", "rgb3"])
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("infer", help="run the network on a burst manifest")
    p.add_argument("--config")
    p.add_argument("--weights")
    p.add_argument("--burst-manifest")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM report over matching PNG dirs")
    p.add_argument("--config")
    p.add_argument("--pred-dir")
    p.add_argument("--gt-dir")
    p.add_argument("--report")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("check", help="run oracle/invariant verification suites")
    p.add_argument("--config")
    p.add_argument("--suite", choices=list(SUITES) + ["all"])
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("bench", help="time the scan kernels across lengths")
    p.add_argument("--config")
    p.add_argument("--lengths")
    p.add_argument("--channels", type=int)
    p.add_argument("--state", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BurstSrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
