"""Command-line runner: experiments, validation, and the four-method compare.

Subcommands::

    parviflow run --config FILE [--preset NAME] --out DIR [--plot]
    parviflow validate --level fast|full [--out FILE]
    parviflow compare --preset fig3 --out DIR [--plot]

Exit codes: 0 success, 1 validation/config failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import platform
import sys
import time

import numpy as np
import scipy

from .config import (
    ExperimentConfig,
    build_ensemble,
    build_sampler_config,
    build_target,
    load_preset,
    parse_config,
)
from .diagnostics import compute_metrics, reference_sample
from .errors import ConfigError, ConfigurationError, StepRejected
from .samplers import METHODS, run
from .utils import atomic_write_text
from .validation import run_validation

REFERENCE_SIZE = 2000


def _format_float(value: float) -> str:
    return repr(float(value))


def _trace_csv(snapshots, ell: int, with_momentum: bool) -> str:
    buf = io.StringIO()
    header = ["iter", "particle_id"]
    header += [f"theta_{k + 1}" for k in range(ell)]
    if with_momentum:
        header += [f"r_{k + 1}" for k in range(ell)]
    buf.write(",".join(header) + "\n")
    for iteration, theta, r in snapshots:
        for pid in range(theta.shape[0]):
            row = [str(iteration), str(pid)]
            row += [_format_float(v) for v in theta[pid]]
            if with_momentum:
                row += [_format_float(v) for v in r[pid]]
            buf.write(",".join(row) + "\n")
    return buf.getvalue()


def _metrics_csv(reports, ell: int) -> str:
    buf = io.StringIO()
    header = ["iter", "mmd", "w2"]
    header += [f"mean_{k + 1}" for k in range(ell)]
    header += [f"cov_{i + 1}{j + 1}" for i in range(ell) for j in range(ell)]
    buf.write(",".join(header) + "\n")
    for rep in reports:
        row = [str(rep.iteration), _format_float(rep.mmd)]
        row.append("" if rep.w2 is None else _format_float(rep.w2))
        row += [_format_float(v) for v in rep.mean]
        row += [_format_float(v) for v in rep.cov.ravel()]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def _plot_snapshots(snapshots, out_dir: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    shown = snapshots[: min(len(snapshots), 36)]
    cols = min(6, len(shown))
    rows = (len(shown) + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.2 * rows), squeeze=False)
    for ax in axes.ravel():
        ax.set_axis_off()
    for ax, (iteration, theta, _) in zip(axes.ravel(), shown):
        ax.set_axis_on()
        ax.scatter(theta[:, 0], theta[:, 1], s=4)
        ax.set_xlim(-7, 3)
        ax.set_ylim(-9, 9)
        ax.set_title(f"iter {iteration}", fontsize=7)
        ax.tick_params(labelsize=5)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "snapshots.png"), dpi=110)
    plt.close(fig)


def run_experiment(cfg: ExperimentConfig, out_dir: str, plot: bool = False) -> int:
    """Run one configured experiment and write trace.csv / metrics.csv / meta.json.

    Returns 0 on success, 2 on a rejected step (partial outputs are still
    flushed, with a failure marker in meta.json).
    """
    os.makedirs(out_dir, exist_ok=True)
    target = build_target(cfg)
    sampler_cfg = build_sampler_config(cfg)
    ens = build_ensemble(cfg, target)
    ell = target.dim
    reference = reference_sample(target, max(REFERENCE_SIZE, cfg.n_particles), seed=cfg.seed + 1)

    def metric_hook(iteration, ensemble):
        return compute_metrics(iteration, ensemble.theta, reference)

    meta = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }

    status = 0
    error = None
    trace = None
    start = time.perf_counter()
    try:
        trace = run(
            sampler_cfg,
            target,
            ens,
            hook=metric_hook if cfg.metrics_every > 0 else None,
            hook_every=cfg.metrics_every,
            snapshot_every=cfg.snapshot_every,
        )
    except StepRejected as exc:
        status = 2
        error = {"message": str(exc), "iteration": exc.iteration}
        trace = getattr(exc, "partial_trace", None)

    wall = time.perf_counter() - start
    snapshots = trace.snapshots if trace is not None else []
    records = trace.hook_records if trace is not None else []
    with_momentum = cfg.method != "blob"
    atomic_write_text(os.path.join(out_dir, "trace.csv"), _trace_csv(snapshots, ell, with_momentum))
    atomic_write_text(os.path.join(out_dir, "metrics.csv"), _metrics_csv(records, ell))
    meta["wall_time"] = wall
    meta["n_snapshots"] = len(snapshots)
    meta["status"] = "ok" if status == 0 else "failed"
    if error is not None:
        meta["error"] = error
    atomic_write_text(os.path.join(out_dir, "meta.json"), json.dumps(meta, indent=2) + "\n")
    if plot and snapshots:
        _plot_snapshots(snapshots, out_dir, f"{cfg.method} on {cfg.target['name']}")
    return status


def _cmd_run(args) -> int:
    if args.preset:
        cfg = load_preset(args.preset)
    else:
        if not args.config:
            print("run: either --config or --preset is required", file=sys.stderr)
            return 1
        with open(args.config) as handle:
            cfg = parse_config(handle.read())
    return run_experiment(cfg, args.out, plot=args.plot)


def _cmd_validate(args) -> int:
    report = run_validation(args.level)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        print(text, end="")
    for check in report["checks"]:
        flag = "PASS" if check["passed"] else "FAIL"
        print(f"[{flag}] {check['check']}: residual {check['residual']:.3e} "
              f"(threshold {check['threshold']:.3e})", file=sys.stderr)
    if not report["all_passed"]:
        failed = [c["check"] for c in report["checks"] if not c["passed"]]
        print(f"validation failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _cmd_compare(args) -> int:
    worst = 0
    for method in METHODS:
        cfg = load_preset(args.preset, method=method)
        out_dir = os.path.join(args.out, method)
        code = run_experiment(cfg, out_dir, plot=args.plot)
        print(f"{method}: exit {code} -> {out_dir}")
        worst = max(worst, code)
    return worst


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="parviflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("--config", help="path to a JSON config file")
    p_run.add_argument("--preset", help="named preset instead of a config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--plot", action="store_true", help="also write snapshots.png")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="run the self-validation suite")
    p_val.add_argument("--level", choices=("fast", "full"), default="fast")
    p_val.add_argument("--out", help="write the JSON report here (default: stdout)")
    p_val.set_defaults(func=_cmd_validate)

    p_cmp = sub.add_parser("compare", help="run all four methods on a preset")
    p_cmp.add_argument("--preset", default="fig3")
    p_cmp.add_argument("--out", required=True, help="parent output directory")
    p_cmp.add_argument("--plot", action="store_true")
    p_cmp.set_defaults(func=_cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except StepRejected as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
