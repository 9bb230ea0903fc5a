"""Command-line front end for the fit / simulate / score / select pipeline.

Exit codes: 0 success, 1 internal error, 2 input or usage error.  All
randomness flows from ``--seed``; reruns with identical flags and inputs
produce byte-identical outputs at any thread count.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import dpmix, fdr, scores
from .domain import (
    InputError,
    fmt_float,
    load_dataset,
    load_rates,
    load_scenario,
    save_dataset,
    save_scenario,
)
from .genmodel import simulate_dataset

_SCENARIO_GLOB = "scenario_*.csv"


def _add_common(p: argparse.ArgumentParser, dataset_help: str = "dataset file") -> None:
    p.add_argument("--rates", required=True, help="mutation-type rate file")
    p.add_argument("--dataset", required=True, help=dataset_help)
    p.add_argument("--seed", type=int, default=0, help="master 64-bit seed")


def _load_inputs(args):
    rates = load_rates(args.rates)
    ds = load_dataset(rates, args.dataset)
    return rates, ds


def _load_scenarios(directory, ds):
    directory = Path(directory)
    paths = sorted(directory.glob(_SCENARIO_GLOB))
    if not paths:
        raise InputError(f"no {_SCENARIO_GLOB} files under {directory}")
    return [load_scenario(p, expected_gene_ids=ds.gene_ids()) for p in paths]


def _cmd_fit(args) -> int:
    _, ds = _load_inputs(args)
    out_dir = Path(args.out_dir)
    scen_dir = out_dir / "scenarios"
    scen_dir.mkdir(parents=True, exist_ok=True)

    grid = np.geomspace(1.0, args.grid_max, args.grid_points)
    grid[0] = 1.0
    fhat = dpmix.npmle_fit(ds, grid=grid, tol=args.npmle_tol, max_iter=args.npmle_max_iter)
    base = dpmix.elicit_base_measure(
        fhat, total_mass=args.total_mass, spike_window=args.spike_window
    )
    states = list(
        dpmix.run_mcmc(
            ds, base, iters=args.iters, burnin=args.burnin, thin=args.thin,
            seed=args.seed,
        )
    )
    scenarios = dpmix.export_scenarios(states, ds, seed=args.seed)
    gene_ids = ds.gene_ids()
    for i, scn in enumerate(scenarios):
        save_scenario(scn, gene_ids, scen_dir / f"scenario_{i:06d}.csv")

    diag_rows = ["iteration,n_clusters,n_drivers,log_posterior"]
    for state in states:
        n_clusters, n_drivers, log_post = dpmix.state_diagnostics(state, ds, base)
        diag_rows.append(
            f"{state.iteration},{n_clusters},{n_drivers},{fmt_float(log_post)}"
        )
    (out_dir / "diagnostics.csv").write_text("\n".join(diag_rows) + "\n")

    summary_rows = [
        "spike_fraction,shape,rate,total_mass,spike_window,n_support,fhat_mean",
        ",".join(
            [
                fmt_float(base.spike_fraction),
                fmt_float(base.shape),
                fmt_float(base.rate),
                fmt_float(base.total_mass),
                fmt_float(args.spike_window),
                str(fhat.support.size),
                fmt_float(fhat.mean()),
            ]
        ),
    ]
    (out_dir / "fit_summary.csv").write_text("\n".join(summary_rows) + "\n")
    print(
        f"fit: {len(scenarios)} scenarios, spike_fraction="
        f"{base.spike_fraction:.4f}, shape={base.shape:.4g}, rate={base.rate:.4g}"
    )
    return 0


def _cmd_simulate(args) -> int:
    _, ds = _load_inputs(args)
    scenario = load_scenario(args.scenario, expected_gene_ids=ds.gene_ids())
    sim = simulate_dataset(scenario, ds, args.seed)
    save_dataset(sim, args.out)
    print(f"simulate: wrote {args.out}")
    return 0


def _cmd_score(args) -> int:
    _, ds = _load_inputs(args)
    if args.null_reps > 0:
        sample = scores.null_score_sample(
            ds, args.kind, args.null_reps, args.seed, mid_p=args.mid_p
        )
        rows = ["rep,gene_id,kind,value"]
        gene_ids = ds.gene_ids()
        g = len(gene_ids)
        for i, v in enumerate(sample.values):
            rows.append(
                f"{i // g},{gene_ids[i % g]},{args.kind},{fmt_float(v)}"
            )
        Path(args.out).write_text("\n".join(rows) + "\n")
        print(f"score: wrote {sample.values.size} null scores to {args.out}")
        return 0
    gene_scores = scores.score_dataset(ds, args.kind, mid_p=args.mid_p)
    scores.save_scores(gene_scores, args.out)
    print(f"score: wrote {len(gene_scores)} {args.kind} scores to {args.out}")
    return 0


def _load_null_file(path, kind):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != "rep,gene_id,kind,value":
        raise InputError("null score file must start with 'rep,gene_id,kind,value'")
    values = []
    reps = 0
    for ln in lines[1:]:
        rep, _, k, v = ln.split(",")
        if k != kind:
            raise InputError(f"null score file holds kind {k!r}, expected {kind!r}")
        reps = max(reps, int(rep) + 1)
        values.append(float(v))
    return scores.NullScoreSample(
        kind=kind, values=np.array(values), screened_in=(), reps=reps
    )


def _cmd_select(args) -> int:
    gene_scores = scores.load_scores(args.scores)
    if not gene_scores:
        raise InputError("score file is empty")
    kind = gene_scores[0].kind
    ids = [s.gene_id for s in gene_scores]
    values = np.array([s.value for s in gene_scores])
    if args.method in ("bh", "storey"):
        if kind in ("tailp_two_stage", "tailp_single_stage"):
            pvals = values
        else:
            if not args.null_scores:
                raise InputError(
                    f"method {args.method!r} on kind {kind!r} needs --null-scores"
                )
            null = _load_null_file(args.null_scores, kind)
            pvals = scores.mc_pvalues(values, null)
        pairs = list(zip(ids, pvals))
        if args.method == "bh":
            result = fdr.bh_select(pairs, args.alpha)
        else:
            result = fdr.storey_select(pairs, args.alpha, lambda_=args.storey_lambda)
    else:
        if not args.null_scores:
            raise InputError("method 'eb' needs --null-scores")
        null = _load_null_file(args.null_scores, kind)
        result = fdr.eb_select(
            list(zip(ids, values)),
            null.values,
            args.alpha,
            higher_is_extreme=scores.HIGHER_IS_EXTREME[kind],
        )
    fdr.save_selection(result, ids, args.out)
    print(
        f"select: {args.method} at alpha={args.alpha} rejected "
        f"{len(result.rejected)} of {len(ids)} genes"
    )
    return 0


def _cmd_bench(args) -> int:
    _, ds = _load_inputs(args)
    scenarios = _load_scenarios(args.scenario_dir, ds)
    oc = bench_mod.run_benchmark(
        scenarios,
        ds,
        methods=args.methods.split(","),
        kinds=args.kinds.split(","),
        alphas=[float(a) for a in args.alphas.split(",")],
        seed=args.seed,
        null_reps=args.null_reps,
        storey_lambda=args.storey_lambda,
        threads=args.threads,
    )
    bench_mod.save_oc_table(oc, args.out)
    print(f"bench: wrote {len(oc.rows)} rows to {args.out}")
    return 0


def _cmd_roc(args) -> int:
    _, ds = _load_inputs(args)
    scenarios = _load_scenarios(args.scenario_dir, ds)
    curve = bench_mod.roc_estimate(scenarios, ds, args.kind, seed=args.seed)
    bench_mod.save_roc(curve, args.out)
    print(f"roc: pauc_at_2pct={curve.pauc_at_2pct:.6g}, wrote {args.out}")
    return 0


def _cmd_bootstrap_check(args) -> int:
    _, ds = _load_inputs(args)
    scenario_sds = None
    if args.scenario_dir:
        scenarios = _load_scenarios(args.scenario_dir, ds)
        dist = bench_mod.fit_summary_distribution(scenarios, ds, seed=args.seed)
        scenario_sds = dist.sds
    result = bench_mod.bootstrap_variability(
        ds, reps=args.reps, seed=args.seed, scenario_sds=scenario_sds
    )
    rows = ["count,bootstrap_sd,scenario_sd,ratio"]
    for i, label in enumerate(result.labels):
        ssd = "" if scenario_sds is None else fmt_float(scenario_sds[i])
        ratio = "" if result.ratios is None else fmt_float(result.ratios[i])
        rows.append(f"{label},{fmt_float(result.sds[i])},{ssd},{ratio}")
    Path(args.out).write_text("\n".join(rows) + "\n")
    if result.fallbacks:
        print(f"bootstrap-check: intercept-only fallback for {result.fallbacks}")
    print(f"bootstrap-check: wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mutfdr",
        description="Two-stage mutation model, driver scores, and FDR benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the effect mixture and export scenarios")
    _add_common(p, "observed dataset file")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--iters", type=int, default=12000, help="total Gibbs sweeps")
    p.add_argument("--burnin", type=int, default=2000, help="burn-in sweeps")
    p.add_argument("--thin", type=int, default=10, help="thinning interval")
    p.add_argument("--total-mass", type=float, default=1.0,
                   help="base measure total mass (concentration)")
    p.add_argument("--spike-window", type=float, default=2.0,
                   help="upper effect bound treated as passenger mass when "
                        "eliciting the spike fraction")
    p.add_argument("--grid-points", type=int, default=200,
                   help="effect grid size for the mixing-distribution MLE")
    p.add_argument("--grid-max", type=float, default=1e3,
                   help="largest effect on the grid")
    p.add_argument("--npmle-tol", type=float, default=1e-8,
                   help="EM convergence tolerance")
    p.add_argument("--npmle-max-iter", type=int, default=2000,
                   help="EM iteration cap")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("simulate", help="simulate one dataset from a scenario")
    _add_common(p, "template dataset file (coverages reused)")
    p.add_argument("--scenario", required=True, help="scenario file")
    p.add_argument("--out", required=True, help="output dataset file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("score", help="score the genes of a dataset")
    _add_common(p)
    p.add_argument("--kind", required=True, choices=scores.SCORE_KINDS)
    p.add_argument("--out", required=True, help="output score file")
    p.add_argument("--mid-p", action="store_true",
                   help="mid-p variant of the tail p-values (diagnostic)")
    p.add_argument("--null-reps", type=int, default=0,
                   help="when > 0, write pooled all-passenger null scores "
                        "from this many simulated replicates instead")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("select", help="turn scores into a rejection set")
    p.add_argument("--scores", required=True, help="score file")
    p.add_argument("--method", required=True, choices=("bh", "storey", "eb"))
    p.add_argument("--alpha", type=float, required=True, help="target FDR level")
    p.add_argument("--storey-lambda", type=float, default=0.5,
                   help="tail cutoff for the null-proportion estimate")
    p.add_argument("--null-scores", default=None,
                   help="null score file (needed for eb and for step-up "
                        "methods on non-p-value kinds)")
    p.add_argument("--out", required=True, help="output selection file")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("bench", help="operating characteristics over scenarios")
    _add_common(p, "template dataset file")
    p.add_argument("--scenario-dir", required=True, help="directory of scenario files")
    p.add_argument("--methods", default="bh,storey,eb",
                   help="comma-separated selection methods")
    p.add_argument("--kinds", default="camp,tailp_two_stage,loglik_ratio",
                   help="comma-separated score kinds")
    p.add_argument("--alphas", default="0.1,0.2", help="comma-separated FDR levels")
    p.add_argument("--null-reps", type=int, default=30,
                   help="all-passenger replicates for null score samples")
    p.add_argument("--storey-lambda", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=1,
                   help="scenario-level worker threads (results identical "
                        "at any value)")
    p.add_argument("--out", required=True, help="output table file")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("roc", help="pooled ROC curve for one statistic")
    _add_common(p, "template dataset file")
    p.add_argument("--scenario-dir", required=True)
    p.add_argument("--kind", required=True, choices=scores.SCORE_KINDS)
    p.add_argument("--out", required=True, help="output fpr,tpr file")
    p.set_defaults(func=_cmd_roc)

    p = sub.add_parser("bootstrap-check",
                       help="bootstrap variability of the six summary counts")
    _add_common(p, "observed dataset file")
    p.add_argument("--reps", type=int, default=1000, help="bootstrap replicates")
    p.add_argument("--scenario-dir", default=None,
                   help="when given, also report scenario-vs-bootstrap SD ratios")
    p.add_argument("--out", required=True, help="output table file")
    p.set_defaults(func=_cmd_bootstrap_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass codes through
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"E_INPUT: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single-line machine-parseable error
        print(f"E_INTERNAL: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
