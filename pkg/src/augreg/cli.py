"""Command-line interface.

Three subcommands: ``fit`` runs the augmented-estimate pipeline on a CSV
study, ``simulate`` runs replicated scenario studies, and ``report``
re-renders a saved report. Results go to stdout or ``--out``; stderr
carries status and errors only. Exit codes: 0 success, 2 invalid input
or plan, 3 fit/convergence failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .augment import augment
from .dataio import load_analysis_spec, load_csv
from .errors import DataError, EstimationError
from .report import (
    build_report,
    input_digest,
    load_report,
    render_replicate_dump,
    render_summary_csv,
    render_summary_json,
    write_report,
)
from .resample import BootstrapPlan, JackknifePlan, EstimationTask, resample_cov
from .resample import AUTO_DELETE1_LIMIT, AUTO_GROUPS
from .simulate import ScenarioSpec, SCENARIO_NAMES, analysis_spec_for, run_replications

# Refits beyond this estimate trigger a stderr warning before a
# simulation starts.
FIT_BUDGET = 2_000_000


def _status(msg: str) -> None:
    print(msg, file=sys.stderr)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("AUGREG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DataError(f"AUGREG_THREADS must be an integer, got {env!r}") from None
    return 1


def _make_plan(args, spec_plan=None):
    method = args.method
    if method is None:
        if spec_plan is not None:
            return spec_plan
        method = "jackknife"
    if method == "jackknife":
        return JackknifePlan(n_groups=args.groups)
    return BootstrapPlan(replicates=args.boot_b, seed=args.seed)


def _plan_provenance(plan) -> dict:
    if isinstance(plan, JackknifePlan):
        return {"method": "jackknife", "groups": plan.n_groups}
    return {"method": "bootstrap", "replicates": plan.replicates, "boot_seed": plan.seed}


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# fit


def _cmd_fit(args) -> int:
    spec, spec_plan = load_analysis_spec(args.spec)
    plan = _make_plan(args, spec_plan)
    alpha = args.alpha if args.alpha is not None else spec.alpha
    data = load_csv(args.data, spec, strict_references=args.strict_references)
    threads = _threads(args)

    task = EstimationTask(data, spec, ties=args.ties)
    js = task.full()
    cov = resample_cov(data, spec, plan, ties=args.ties, threads=threads, task=task)
    est = augment(js, cov, alpha=alpha)

    provenance = {
        "command": "fit",
        "version": __version__,
        "alpha": alpha,
        "ties": args.ties,
        "input_digest": input_digest(args.data, args.spec),
        **_plan_provenance(plan),
    }
    report = build_report(est, provenance)
    text = write_report(report, args.out, fmt=args.format)
    _emit(text, args.out)
    if args.out:
        _status(f"report written to {args.out}")
    if args.plot_dir:
        from .figures import save_interval_plot

        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        target = save_interval_plot(report, plot_dir / "fit_intervals.png")
        _status(f"figure written to {target}")
    return 0


# ---------------------------------------------------------------------------
# simulate


def _estimated_fits(plan, n_full: int, reps: int) -> int:
    if isinstance(plan, BootstrapPlan):
        per = 3 * (plan.replicates + 1)
    else:
        g = plan.n_groups or (n_full if n_full <= AUTO_DELETE1_LIMIT else AUTO_GROUPS)
        per = 3 * (g + 1)
    return reps * per


def _cmd_simulate(args) -> int:
    plan = _make_plan(args)
    scenario = ScenarioSpec(
        name=args.scenario, n_full=args.n_full, n_val=args.n_val, seed=args.seed
    )
    estimated = _estimated_fits(plan, args.n_full, args.reps)
    if estimated > FIT_BUDGET:
        _status(
            f"warning: about {estimated:,} model refits requested "
            f"(budget {FIT_BUDGET:,}); consider fewer groups, replicates or reps"
        )
    keep = bool(args.dump_replicates or args.plot_dir)
    summary = run_replications(
        scenario,
        reps=args.reps,
        plan=plan,
        alpha=args.alpha if args.alpha is not None else 0.05,
        ties=args.ties,
        threads=_threads(args),
        keep_replicates=keep,
    )
    aspec = analysis_spec_for(args.scenario)
    if args.format == "json":
        text = render_summary_json(summary)
    else:
        text = render_summary_csv(summary, aspec)
    if args.out:
        Path(args.out).write_text(text)
        _status(f"summary written to {args.out}")
    else:
        sys.stdout.write(text)
    _status(
        f"{summary.completed}/{summary.requested} replicates completed, "
        f"{summary.failures} failed"
    )
    if args.dump_replicates:
        Path(args.dump_replicates).write_text(render_replicate_dump(summary, aspec))
        _status(f"replicate dump written to {args.dump_replicates}")
    if args.plot_dir:
        from .figures import save_error_boxplots

        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        target = save_error_boxplots(
            summary, aspec, plot_dir / f"{args.scenario}_errors.png"
        )
        _status(f"figure written to {target}")
    return 0


# ---------------------------------------------------------------------------
# report


def _cmd_report(args) -> int:
    report = load_report(args.input)
    text = write_report(report, args.out, fmt=args.format)
    _emit(text, args.out)
    if args.out:
        _status(f"report written to {args.out}")
    if args.plot_dir:
        from .figures import save_interval_plot

        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        target = save_interval_plot(report, plot_dir / "fit_intervals.png")
        _status(f"figure written to {target}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["jackknife", "bootstrap"], default=None,
                   help="covariance estimator (default: jackknife)")
    p.add_argument("--groups", type=int, default=None,
                   help="jackknife groups (default: delete-1 up to "
                        f"{AUTO_DELETE1_LIMIT} units, then {AUTO_GROUPS} groups)")
    p.add_argument("--boot-B", dest="boot_b", type=int, default=400,
                   help="bootstrap replicates (default 400)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--alpha", type=float, default=None,
                   help="two-sided interval level (default 0.05)")
    p.add_argument("--ties", choices=["efron", "breslow"], default="efron",
                   help="Cox tied-event correction (default efron)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: AUGREG_THREADS or 1); "
                        "results do not depend on this")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--plot-dir", default=None,
                   help="also render PNG figures into this directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augreg",
        description="Augmented regression estimates for measurement error "
                    "with an internal validation subsample.",
    )
    parser.add_argument("--version", action="version", version=f"augreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="estimate from a CSV study and a JSON analysis spec")
    fit.add_argument("--data", required=True, help="CSV study file")
    fit.add_argument("--spec", required=True, help="analysis spec JSON file")
    fit.add_argument("--format", choices=["json", "csv", "text"], default="json")
    fit.add_argument("--strict-references", action="store_true",
                     help="error (instead of warn) when reference values appear "
                          "outside the validation subsample")
    _add_common(fit)
    fit.set_defaults(func=_cmd_fit)

    sim = sub.add_parser("simulate", help="run a built-in simulation scenario")
    sim.add_argument("--scenario", required=True, choices=list(SCENARIO_NAMES))
    sim.add_argument("--reps", type=int, required=True, help="number of replicates")
    sim.add_argument("--n-full", dest="n_full", type=int, default=4000)
    sim.add_argument("--n-val", dest="n_val", type=int, default=400)
    sim.add_argument("--format", choices=["json", "csv"], default="json")
    sim.add_argument("--dump-replicates", default=None,
                     help="write per-replicate estimates to this CSV")
    _add_common(sim)
    sim.set_defaults(func=_cmd_simulate)

    rep = sub.add_parser("report", help="re-render a saved fit report")
    rep.add_argument("--input", required=True, help="report JSON file")
    rep.add_argument("--format", choices=["text", "csv", "json"], default="text")
    rep.add_argument("--out", default=None, help="output path (default: stdout)")
    rep.add_argument("--plot-dir", default=None,
                     help="also render PNG figures into this directory")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        _status(f"error: {exc}")
        return 2
    except EstimationError as exc:
        _status(f"error: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
