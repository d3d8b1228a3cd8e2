"""Command-line entrypoint: one binary, one subcommand per workflow.

Every command takes --seed and an optional --config JSON file (flags win),
echoes the effective configuration, and stamps output files with a comment
header carrying the config hash, so results are attributable and re-runnable.

Exit codes: 0 success, 2 usage or configuration error, 3 bad input data,
4 a fit failed to converge.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from typing import Any, Sequence

import numpy as np

from .cascades import CascadeError, read_cascades
from .conductance import (
    ConductanceConfig,
    ConductanceError,
    HomophilicConductance,
    TopologicalConductance,
    following_embeddings,
    lexical_embeddings,
    read_documents,
    read_embedding_cache,
    read_follower_graph,
)
from .engine import EngineError, score_corpus
from .metrics import MetricsError, Ranking, eval_report
from .ranking import (
    RankingError,
    bt_fit,
    read_comparison_log,
    write_comparison_log,
    write_ranking_csv,
)
from .runconfig import ConfigError, RunConfig
from .simulation import (
    SimulationError,
    accuracy_curve,
    budget_grid,
    empirical_accuracy,
    expected_accuracy,
    fit_noise,
    make_targets,
    sample_intensities,
    simulate_comparisons,
    transform_intensities,
)
from .util import format_score

USAGE_EXIT = 2
DATA_EXIT = 3
NONCONVERGED_EXIT = 4


class DataError(Exception):
    """Input file contents were invalid."""


class NonConvergence(Exception):
    """A fit ran out of iterations."""


def _echo_config(cfg: RunConfig, command: str) -> None:
    for line in cfg.header_lines(command):
        print(f"# {line}")


def _write_csv(path: str, header_lines: Sequence[str], columns: str, rows: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(columns + "\n")
        for row in rows:
            fh.write(row + "\n")


def _config_overrides(args: argparse.Namespace, keys: Sequence[str]) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return overrides


# ---------------------------------------------------------------- influence

def _build_conductance(cfg: RunConfig, args: argparse.Namespace):
    if cfg.lens == "none":
        return None
    beta = cfg.beta
    if cfg.lens == "topological":
        if not args.followers:
            raise ConfigError("lens 'topological' needs --followers CSV")
        graph = read_follower_graph(args.followers)
        return TopologicalConductance(ConductanceConfig("topological", beta), graph)
    if cfg.lens == "following":
        if not args.followers:
            raise ConfigError("lens 'following' needs --followers CSV")
        graph = read_follower_graph(args.followers)
        embeddings = following_embeddings(graph, top_k=cfg.top_k)
        return HomophilicConductance(ConductanceConfig("following", beta), embeddings)
    # lexical: either a prebuilt cache or raw documents
    if args.embedding_cache:
        _, embeddings = read_embedding_cache(args.embedding_cache)
    elif args.documents:
        embeddings = lexical_embeddings(read_documents(args.documents))
    else:
        raise ConfigError("lens 'lexical' needs --documents or --embedding-cache")
    return HomophilicConductance(ConductanceConfig("lexical", beta), embeddings)


def cmd_influence(args: argparse.Namespace) -> int:
    overrides = _config_overrides(
        args,
        ["kernel_type", "kernel_r", "kernel_c", "mark_exponent", "lens", "beta",
         "top_k", "max_events", "seed", "threads"],
    )
    if args.no_capital:
        overrides["alpha"] = None
    elif args.alpha is not None:
        overrides["alpha"] = args.alpha
    cfg = RunConfig.load(args.config, overrides)
    _echo_config(cfg, "influence")
    conductance = _build_conductance(cfg, args)

    header = cfg.header_lines("influence")
    per_tweet_fh = None
    if args.per_tweet:
        per_tweet_fh = open(args.per_tweet, "w", encoding="utf-8")
        for line in header:
            per_tweet_fh.write(f"# {line}\n")
        per_tweet_fh.write("cascade_id,index,user,score\n")

    def per_tweet(item) -> None:
        per_tweet_fh.write(
            f"{item.cascade_id},{item.index},{item.user_id},{format_score(item.score)}\n"
        )

    try:
        results = score_corpus(
            read_cascades(args.cascades, skip_bad=args.skip_bad),
            cfg.kernel(),
            cfg.marks(),
            conductance,
            cfg.policy(),
            threads=cfg.effective_threads(),
            max_events=cfg.max_events,
            per_tweet=per_tweet if per_tweet_fh else None,
        )
    except (CascadeError, EngineError) as exc:
        raise DataError(str(exc)) from exc
    finally:
        if per_tweet_fh:
            per_tweet_fh.close()

    ordered = sorted(results, key=lambda u: (-results[u].score, u))
    rows = [
        f"{u},{format_score(results[u].score)},{results[u].tweet_count}" for u in ordered
    ]
    _write_csv(args.out, header, "user,score,tweet_count", rows)
    print(f"# scored {len(rows)} users -> {args.out}")
    return 0


# ---------------------------------------------------------------- simulate

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(
        args.config,
        _config_overrides(args, ["n_targets", "budget", "noise", "exponent",
                                 "runs_cap", "normalization", "seed"]),
    )
    _echo_config(cfg, "simulate")
    raw = sample_intensities(cfg.n_targets, cfg.exponent, seed=cfg.seed)
    theta = make_targets(transform_intensities(raw, cfg.normalization))
    records, runs = simulate_comparisons(theta, cfg.noise, cfg.budget, seed=cfg.seed,
                                         runs_cap=cfg.runs_cap)
    model = bt_fit(records, cfg.noise)
    if not model.converged:
        raise NonConvergence(f"fit stopped after {model.iterations} iterations")
    pairs = [(r.left, r.right) for r in records]
    summary = {
        "n_targets": cfg.n_targets,
        "budget": cfg.budget,
        "noise": cfg.noise,
        "normalization": cfg.normalization,
        "comparisons": len(records),
        "runs": runs,
        "empirical_accuracy": empirical_accuracy(records, theta),
        "expected_accuracy": expected_accuracy(theta, pairs, cfg.noise),
        "fit_iterations": model.iterations,
    }
    from .metrics import kendall_tau, spearman

    summary["spearman"] = spearman(theta, {t: model.theta.get(t, 0.0) for t in theta})
    summary["kendall"] = kendall_tau(theta, {t: model.theta.get(t, 0.0) for t in theta})

    write_comparison_log(args.out_log, records)
    _write_csv(
        args.out_theta,
        cfg.header_lines("simulate"),
        "target,theta",
        [f"{t},{format_score(v)}" for t, v in sorted(theta.items())],
    )
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            json.dump({"config_hash": cfg.config_hash(), **summary}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    for key, value in summary.items():
        print(f"# {key}={value}")
    return 0


def cmd_budget_grid(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(
        args.config,
        _config_overrides(args, ["noise", "exponent", "runs_cap", "normalization",
                                 "seed", "threads"]),
    )
    _echo_config(cfg, "budget-grid")
    n_list = [int(x) for x in args.targets.split(",")]
    budget_list = [int(x) for x in args.budgets.split(",")]
    rows = budget_grid(
        n_list,
        budget_list,
        lam=cfg.noise,
        exponent=cfg.exponent,
        replications=args.replications,
        seed=cfg.seed,
        normalization=cfg.normalization,
        runs_cap=cfg.runs_cap,
        threads=cfg.effective_threads(),
    )
    _write_csv(
        args.out,
        cfg.header_lines("budget-grid"),
        "n,budget,mean_spearman,stddev,replications",
        [
            f"{r['n']},{r['budget']},{format_score(r['mean_spearman'])},"
            f"{format_score(r['stddev'])},{r['replications']}"
            for r in rows
        ],
    )
    print(f"# wrote {len(rows)} grid cells -> {args.out}")
    return 0


def cmd_build_embeddings(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(args.config, _config_overrides(args, ["top_k", "seed"]))
    _echo_config(cfg, "build-embeddings")
    from .conductance import LEXICAL_DIMENSION, write_embedding_cache

    if args.documents:
        dimension = args.dimension or LEXICAL_DIMENSION
        embeddings = lexical_embeddings(read_documents(args.documents), dimension)
        lens = "lexical"
    elif args.followers:
        graph = read_follower_graph(args.followers)
        embeddings = following_embeddings(graph, top_k=cfg.top_k)
        dimension = next(iter(embeddings.values())).dimension if embeddings else cfg.top_k
        lens = "following"
    else:
        raise ConfigError("build-embeddings needs --documents or --followers")
    write_embedding_cache(args.out, lens, dimension, embeddings)
    print(f"# wrote {len(embeddings)} {lens} embeddings (dimension {dimension}) -> {args.out}")
    return 0


def cmd_fit_noise(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(args.config, _config_overrides(args, ["seed"]))
    _echo_config(cfg, "fit-noise")
    records = read_comparison_log(args.log)
    if not records:
        raise DataError(f"{args.log}: no comparison records")
    theta = _read_theta_csv(args.theta)
    pairs = [(r.left, r.right) for r in records]
    observed = args.observed
    if observed is None:
        observed = empirical_accuracy(records, theta)
        print(f"# observed accuracy from log (empirical win rate): {observed:.6f}")
    lam = fit_noise(observed, theta, pairs)
    print(f"# fitted noise: {lam}")
    print(format_score(lam))
    return 0


def cmd_noise_curve(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(
        args.config,
        _config_overrides(args, ["n_targets", "exponent", "normalization", "seed"]),
    )
    _echo_config(cfg, "noise-curve")
    raw = sample_intensities(cfg.n_targets, cfg.exponent, seed=cfg.seed)
    theta = make_targets(transform_intensities(raw, cfg.normalization))
    ids = sorted(theta)
    rng = np.random.default_rng(cfg.seed)
    idx = rng.integers(0, len(ids), size=(args.pairs, 2))
    pairs = [(ids[i], ids[j]) for i, j in idx if i != j]
    lambdas = np.logspace(np.log10(args.lambda_min), np.log10(args.lambda_max), args.points)
    points = accuracy_curve(theta, pairs, lambdas)
    _write_csv(
        args.out,
        cfg.header_lines("noise-curve"),
        "lambda,expected_accuracy",
        [f"{format_score(p.lam)},{format_score(p.expected_accuracy)}" for p in points],
    )
    print(f"# wrote {len(points)} curve points -> {args.out}")
    return 0


def cmd_rank(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(args.config, _config_overrides(args, ["noise", "seed"]))
    _echo_config(cfg, "rank")
    if args.from_service_log:
        from .service.core import service_log_records

        records = service_log_records(args.log)
    else:
        records = read_comparison_log(args.log)
    if not records:
        raise DataError(f"{args.log}: no comparison records")
    model = bt_fit(records, cfg.noise)
    if not model.converged:
        raise NonConvergence(
            f"fit stopped at max-abs gradient {model.max_grad:.2e} after {model.iterations} iterations"
        )
    write_ranking_csv(args.out, model, cfg.header_lines("rank"))
    print(f"# ranked {len(model.theta)} targets from {len(records)} comparisons -> {args.out}")
    print(f"# fit converged in {model.iterations} iterations")
    return 0


def _read_theta_csv(path: str) -> dict[str, float]:
    theta: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("target,"):
                continue
            name, _, value = line.partition(",")
            try:
                theta[name] = float(value)
            except ValueError as exc:
                raise DataError(f"{path}: bad theta row {line!r}") from exc
    if not theta:
        raise DataError(f"{path}: no theta rows")
    return theta


def _read_ranking_file(path: str) -> Ranking:
    """target,score CSV (ranked by descending score) or one target id per line."""
    scores: dict[str, float] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("target"):
                continue
            name, sep, rest = line.partition(",")
            if sep:
                try:
                    scores[name] = float(rest.split(",")[0])
                    continue
                except ValueError:
                    pass
            order.append(name)
    try:
        if scores and order:
            raise DataError(f"{path}: mixes scored and unscored rows")
        return Ranking.from_scores(scores) if scores else Ranking(tuple(order))
    except MetricsError as exc:
        raise DataError(f"{path}: {exc}") from exc


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(args.config, _config_overrides(args, ["seed"]))
    _echo_config(cfg, "eval")
    estimate = _read_ranking_file(args.estimate)
    truth = _read_ranking_file(args.truth)
    try:
        report = eval_report(estimate, truth)
    except MetricsError as exc:
        raise DataError(str(exc)) from exc
    for key, value in report.items():
        print(f"{key}={format_score(value)}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"config_hash": cfg.config_hash(), **report}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.api import create_app
    from .service.core import AnnotationService, ServiceConfig

    config = ServiceConfig.load(args.service_config)
    service = AnnotationService(config)
    app = create_app(service)
    port = args.port
    if port == 0:
        probe = socket.socket()
        probe.bind((args.host, 0))
        port = probe.getsockname()[1]
        probe.close()
    print(f"# serving on http://{args.host}:{port}", flush=True)
    try:
        uvicorn.run(app, host=args.host, port=port, log_level="warning")
    finally:
        service.stop()
    return 0


# ---------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="influencekit",
        description="Cascade influence scoring and pairwise-comparison ranking tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; explicit flags override it")
        p.add_argument("--seed", type=int, help="seed for every random choice in the command")

    p = sub.add_parser("influence", help="score per-user influence from a cascade file")
    add_common(p)
    p.add_argument("--cascades", required=True, help="line-delimited cascade records")
    p.add_argument("--out", required=True, help="output CSV: user,score,tweet_count")
    p.add_argument("--per-tweet", help="optional CSV of per-tweet scores")
    p.add_argument("--kernel-type", choices=["exponential", "power_law"], dest="kernel_type",
                   help="time-decay kernel shape")
    p.add_argument("--r", type=float, dest="kernel_r", help="kernel decay rate (> 0)")
    p.add_argument("--c", type=float, dest="kernel_c", help="power-law cutoff (> 0)")
    p.add_argument("--b", type=float, dest="mark_exponent",
                   help="exponent on event marks; 0 ignores marks")
    p.add_argument("--conductance", dest="lens",
                   choices=["none", "topological", "following", "lexical"],
                   help="pairwise damping lens")
    p.add_argument("--beta", type=float, help="conductance floor in [0, 1]")
    p.add_argument("--top-k", type=int, dest="top_k",
                   help="anchor count for the following lens")
    p.add_argument("--alpha", type=float, help="capital share passed to the parent, in (0, 1)")
    p.add_argument("--no-capital", action="store_true",
                   help="disable the capital split (pure descendant counting)")
    p.add_argument("--followers", help="follower edge CSV (user,follower)")
    p.add_argument("--documents", help="line-delimited {user, text} records")
    p.add_argument("--embedding-cache", help="prebuilt embedding cache")
    p.add_argument("--max-events", type=int, dest="max_events",
                   help="reject cascades larger than this")
    p.add_argument("--threads", type=int, help="worker threads; 1 = sequential")
    p.add_argument("--skip-bad", action="store_true", help="skip malformed cascade lines")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("simulate", help="synthetic ranking experiment at a fixed noise")
    add_common(p)
    p.add_argument("--n", type=int, dest="n_targets", help="number of targets")
    p.add_argument("--budget", type=int, help="total comparisons to spend")
    p.add_argument("--noise", type=float, help="judge noise temperature")
    p.add_argument("--exponent", type=float, help="intensity power-law exponent (> 1)")
    p.add_argument("--runs-cap", type=int, dest="runs_cap", help="max quicksort runs")
    p.add_argument("--normalization", choices=["raw", "log", "percentile"],
                   help="intensity scale fed to judges")
    p.add_argument("--out-log", required=True, help="comparison log output")
    p.add_argument("--out-theta", required=True, help="true intensities CSV output")
    p.add_argument("--summary", help="optional JSON summary output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("budget-grid", help="rank quality across (targets, budget) cells")
    add_common(p)
    p.add_argument("--targets", required=True, help="comma-separated target counts")
    p.add_argument("--budgets", required=True, help="comma-separated budgets")
    p.add_argument("--noise", type=float, help="judge noise temperature")
    p.add_argument("--exponent", type=float, help="intensity power-law exponent")
    p.add_argument("--runs-cap", type=int, dest="runs_cap")
    p.add_argument("--normalization", choices=["raw", "log", "percentile"])
    p.add_argument("--replications", type=int, default=1, help="replications per cell")
    p.add_argument("--threads", type=int, help="cells run on a thread pool; 1 = sequential")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_budget_grid)

    p = sub.add_parser("build-embeddings", help="build and cache user embeddings")
    add_common(p)
    p.add_argument("--documents", help="line-delimited {user, text} records (lexical lens)")
    p.add_argument("--followers", help="follower edge CSV (following lens)")
    p.add_argument("--dimension", type=int, help="hash buckets for the lexical lens")
    p.add_argument("--top-k", type=int, dest="top_k", help="anchor users for the following lens")
    p.add_argument("--out", required=True, help="embedding cache output path")
    p.set_defaults(func=cmd_build_embeddings)

    p = sub.add_parser("fit-noise", help="invert mean accuracy into a noise level")
    add_common(p)
    p.add_argument("--log", required=True, help="comparison log to read pairs from")
    p.add_argument("--theta", required=True, help="CSV of target,proxy-intensity")
    p.add_argument("--observed", type=float,
                   help="observed mean accuracy; default: empirical rate from the log")
    p.set_defaults(func=cmd_fit_noise)

    p = sub.add_parser("noise-curve", help="expected accuracy as a function of noise")
    add_common(p)
    p.add_argument("--n", type=int, dest="n_targets")
    p.add_argument("--exponent", type=float)
    p.add_argument("--normalization", choices=["raw", "log", "percentile"])
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--pairs", type=int, default=20000, help="random pairs to average over")
    p.add_argument("--lambda-min", type=float, default=1e-2)
    p.add_argument("--lambda-max", type=float, default=1e3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_noise_curve)

    p = sub.add_parser("rank", help="fit intensities from a comparison log")
    add_common(p)
    p.add_argument("--log", required=True)
    p.add_argument("--noise", type=float, help="fixed noise temperature for the fit")
    p.add_argument("--from-service-log", action="store_true",
                   help="treat --log as an annotation-service event log")
    p.add_argument("--out", required=True, help="output CSV: target,theta,rank,percentile")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="compare an estimated ranking against a truth")
    add_common(p)
    p.add_argument("--estimate", required=True, help="target,score CSV or ordered id list")
    p.add_argument("--truth", required=True, help="target,score CSV or ordered id list")
    p.add_argument("--out", help="optional JSON report output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the live annotation service")
    p.add_argument("--service-config", required=True, help="service JSON config")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000, help="0 picks an ephemeral port")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SimulationError, RankingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except NonConvergence as exc:
        print(f"error: fit did not converge: {exc}", file=sys.stderr)
        return NONCONVERGED_EXIT
    except (DataError, CascadeError, ConductanceError, EngineError, MetricsError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
