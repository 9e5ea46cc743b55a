"""Command-line entry point for reproduction runs.

Subcommands: synth, train-teacher, distill, eval, count, gradcheck.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .data import Sample, make_samples, read_image, write_image
from .errors import SkdError
from .gradsuite import DEFAULT_TOL, run_gradcheck_suite, total_trials
from .models import count_params_flops
from .trainer import distill, evaluate, train_teacher


def _apply_seed(run: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return run
    return RunConfig(model=run.model, student_model=run.student_model,
                     train=replace(run.train, seed=seed),
                     data=replace(run.data, base_seed=seed))


def _image_name(index: int, kind: str, channels: int) -> str:
    ext = "pgm" if channels == 1 else "ppm"
    return f"{index:05d}_{kind}.{ext}"


def cmd_synth(args) -> int:
    run = _apply_seed(load_run_config(args.spec), args.seed)
    spec = replace(run.data, task=args.task) if args.task else run.data
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = make_samples(spec, threads=args.threads)
    for i, sample in enumerate(samples):
        write_image(out / _image_name(i, "clean", spec.channels), sample.clean)
        write_image(out / _image_name(i, "degraded", spec.channels), sample.degraded)
    manifest = {
        "task": spec.task,
        "count": spec.count,
        "channels": spec.channels,
        "patch_size": spec.patch_size,
        "base_seed": spec.base_seed,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(samples)} {spec.task} pairs to {out}")
    return 0


def _load_dataset(path: str) -> list[Sample]:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    samples = []
    for i in range(manifest["count"]):
        clean = read_image(root / _image_name(i, "clean", manifest["channels"]))
        degraded = read_image(root / _image_name(i, "degraded", manifest["channels"]))
        samples.append(Sample(clean=clean, degraded=degraded,
                              task=manifest["task"], seed=manifest["base_seed"]))
    return samples


def cmd_train_teacher(args) -> int:
    run = _apply_seed(load_run_config(args.config), args.seed)
    result = train_teacher(run)
    save_checkpoint(result.checkpoint, args.out)
    last = result.history[-1] if result.history else {}
    evals = result.eval_history[-1] if result.eval_history else {}
    status = "aborted (non-finite loss)" if result.aborted else "done"
    print(f"{status}: {result.checkpoint.step} steps, "
          f"loss {last.get('loss', float('nan')):.5f}, "
          f"heldout psnr {evals.get('psnr_restored', float('nan')):.2f} dB "
          f"(degraded {evals.get('psnr_degraded', float('nan')):.2f} dB)")
    print(f"checkpoint -> {args.out}")
    return 0


def cmd_distill(args) -> int:
    run = _apply_seed(load_run_config(args.config), args.seed)
    teacher = load_checkpoint(args.teacher)
    result = distill(run, teacher)
    save_checkpoint(result.checkpoint, args.out)
    last = result.history[-1] if result.history else {}
    status = "aborted (non-finite loss)" if result.aborted else "done"
    print(f"{status}: {result.checkpoint.step} steps, "
          f"loss {last.get('loss', float('nan')):.5f} "
          f"(rec {last.get('rec', float('nan')):.5f}, "
          f"gk {last.get('gk', float('nan')):.5f}, "
          f"cl {last.get('cl', float('nan')):.5f})")
    print(f"checkpoint -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    samples = _load_dataset(args.data)
    report = evaluate(ckpt, samples)
    blob = json.dumps(report, sort_keys=True, indent=2) + "\n"
    Path(args.report).write_text(blob, encoding="utf-8")
    print(blob, end="")
    return 0


def cmd_count(args) -> int:
    run = load_run_config(args.config)
    size = args.size
    params, flops = count_params_flops(run.model, size, size)
    print(f"config: params={params} flops={flops} (at {size}x{size})")
    if args.baseline:
        base = load_run_config(args.baseline)
        b_params, b_flops = count_params_flops(base.model, size, size)
        print(f"baseline: params={b_params} flops={b_flops}")
        p_red = 100.0 * (1.0 - b_params / params)
        f_red = 100.0 * (1.0 - b_flops / flops)
        print(f"reduction: params={p_red:.1f}% flops={f_red:.1f}%")
    return 0


def cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    results = run_gradcheck_suite(args.seed if args.seed is not None else 0)
    elapsed = time.perf_counter() - t0
    failures = 0
    for r in results:
        status = "ok  " if r.passed(args.tol) else "FAIL"
        failures += 0 if r.passed(args.tol) else 1
        print(f"{status} {r.name:40} trials={r.trials:3} max_rel_err={r.max_rel_err:.3e}")
    print(f"{total_trials(results)} trials in {elapsed:.1f}s, "
          f"{failures} failing groups (tolerance {args.tol:g})")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skdistill",
        description="Distill compact image-restoration networks on synthetic tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a clean/degraded image folder")
    p.add_argument("--task", choices=["denoise", "deblur", "derain"])
    p.add_argument("--spec", required=True, help="run config JSON (data section is used)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-teacher", help="train the reference network")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="distill the compact student")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", help="metrics report for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("count", help="parameter/FLOP accounting")
    p.add_argument("--config", required=True)
    p.add_argument("--baseline")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SkdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
