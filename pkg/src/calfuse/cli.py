"""Command-line harness.

Subcommands: synth (generate a synthetic corpus), ingest (validate corpus
files), retrieve (dump raw per-query score lists), fuse (dump fused rankings
for one cell), eval (evaluate cells against the vector-only baseline),
sweep (grid evaluation with tune-winner selection), report (rebuild a CSV
report from saved records), stats (statistics utilities on plain counts).

Configuration comes from a JSON file plus flag overrides; every error exits
nonzero with a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .corpus import load_corpus, load_embeddings, load_queries, md5_split
from .fusion import STRATEGIES
from .graph import build_entity_graph, link_synonyms
from .stats import bootstrap_ci, mcnemar_exact, odds_ratio, wilson_ci
from .synth import SynthConfig, generate, regime_report


def _add_run_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config JSON file")
    parser.add_argument("--passages")
    parser.add_argument("--annotations")
    parser.add_argument("--queries")
    parser.add_argument("--embeddings")
    parser.add_argument("--entity-embeddings", dest="entity_embeddings")
    parser.add_argument("--tune-fraction", type=float, dest="tune_fraction")
    parser.add_argument("--split", choices=["tune", "test", "all"])
    parser.add_argument("--n-v", type=int, dest="n_v")
    parser.add_argument("--damping", type=float)
    parser.add_argument("--ppr-eps", type=float, dest="ppr_eps")
    parser.add_argument("--ppr-max-iter", type=int, dest="ppr_max_iter")
    parser.add_argument("--synonym-threshold", type=float, dest="synonym_threshold")
    parser.add_argument("--pair-k", type=int, dest="pair_k")
    parser.add_argument("--ks", type=int, nargs="+")
    parser.add_argument("--seed", type=int)


def _add_cell_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strategy", choices=list(STRATEGIES))
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument(
        "--dk",
        type=lambda s: None if s == "none" else int(s),
        default=argparse.SUPPRESS,
        help="graph-only pool cap; 'none' for uncapped",
    )
    parser.add_argument("--normalizer", choices=["pit", "minmax", "rawmax"])
    parser.add_argument(
        "--temperature", type=lambda s: s if s == "auto" else float(s)
    )
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--k", type=int)
    parser.add_argument("--rrf-k0", type=float, dest="rrf_k0")
    parser.add_argument("--power-p", type=float, dest="power_p")
    parser.add_argument("--tsallis-q", type=float, dest="tsallis_q")
    parser.add_argument(
        "--copula-theta",
        dest="copula_theta",
        type=lambda s: None if s == "auto" else float(s),
    )
    parser.add_argument("--t0", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--ising-j", type=float, dest="ising_j")
    parser.add_argument("--ising-t", type=float, dest="ising_t")
    parser.add_argument("--ising-blend", type=float, dest="ising_blend")


def _run_config(args) -> harness.RunConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "passages",
            "annotations",
            "queries",
            "embeddings",
            "entity_embeddings",
            "tune_fraction",
            "split",
            "n_v",
            "synonym_threshold",
            "pair_k",
            "seed",
        )
    }
    if getattr(args, "ks", None):
        overrides["ks"] = args.ks
    ppr_over = {
        "damping": getattr(args, "damping", None),
        "epsilon": getattr(args, "ppr_eps", None),
        "max_iterations": getattr(args, "ppr_max_iter", None),
    }
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        raw = {}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if any(v is not None for v in ppr_over.values()):
        base = raw.get("ppr", {})
        base.update({k: v for k, v in ppr_over.items() if v is not None})
        raw["ppr"] = base
    cell = _cell_from_args(args, raw)
    if cell is not None:
        raw["cells"] = [cell]
    return harness.RunConfig.from_dict(raw)


def _cell_from_args(args, raw_config: dict) -> dict | None:
    """Build a single cell dict from flags; None if no cell flag was given."""
    cell_keys = ("strategy", "alpha", "beta", "normalizer", "temperature", "epsilon")
    param_keys = ("rrf_k0", "power_p", "tsallis_q", "copula_theta", "t0", "gamma")
    given = {k: getattr(args, k, None) for k in cell_keys}
    params = {k: getattr(args, k, None) for k in param_keys}
    dk_given = hasattr(args, "dk")  # --dk uses SUPPRESS so 'none' stays distinguishable
    ising = {
        "coupling": getattr(args, "ising_j", None),
        "temperature": getattr(args, "ising_t", None),
        "blend": getattr(args, "ising_blend", None),
    }
    has_cell_flags = (
        any(v is not None for v in given.values())
        or any(v is not None for v in params.values())
        or any(v is not None for v in ising.values())
        or dk_given
    )
    if not has_cell_flags and "cells" in raw_config:
        return None
    base = dict(raw_config.get("cells", [{}])[0]) if raw_config.get("cells") else {}
    for k, v in given.items():
        if v is not None:
            base[k] = v
    if dk_given:
        base["dk"] = args.dk
    cell_params = dict(base.get("params", {}))
    for k, v in params.items():
        if v is not None:
            cell_params[k] = v
    if cell_params:
        base["params"] = cell_params
    if any(v is not None for v in ising.values()):
        base["ising"] = {k: v for k, v in ising.items() if v is not None}
    return base


def cmd_synth(args) -> int:
    if args.synth_config:
        config = SynthConfig.from_json(args.synth_config)
    else:
        config = SynthConfig(seed=args.seed if args.seed is not None else 0)
    dataset = generate(config)
    dataset.write(args.out)
    print(
        f"wrote synthetic corpus to {args.out}: "
        f"{len(dataset.corpus)} passages, {len(dataset.queries)} queries, "
        f"{len(dataset.entity_embeddings)} entity embeddings"
    )
    return 0


def cmd_ingest(args) -> int:
    corpus = load_corpus(args.passages, args.annotations)
    n_mentions = sum(len(p.entity_mentions) for p in corpus)
    print(f"passages: {len(corpus)}")
    print(f"entity mentions: {n_mentions}")
    if args.queries:
        queries = load_queries(args.queries, corpus)
        print(f"queries: {len(queries)}")
        split = md5_split(queries, args.tune_fraction if args.tune_fraction is not None else 0.5)
        n_tune = sum(1 for v in split.values() if v == "tune")
        print(f"split: {n_tune} tune / {len(split) - n_tune} test")
    if args.embeddings:
        store = load_embeddings(args.embeddings, expected_dimension=args.expected_dimension)
        print(f"embeddings: {len(store)} vectors, dimension {store.dimension}")
    graph = build_entity_graph(corpus)
    print(f"entities: {len(graph.entities)}")
    print(f"cooccurrence edges: {len(graph.cooccurrence)}")
    if args.synonym_threshold is not None and args.entity_embeddings:
        store = load_embeddings(args.entity_embeddings)
        linked = link_synonyms(graph, store, args.synonym_threshold)
        print(
            f"synonym linking at {args.synonym_threshold}: merged {linked.merged_entities}, "
            f"skipped {linked.skipped_entities} without embeddings"
        )
    return 0


def cmd_retrieve(args) -> int:
    config = _run_config(args)
    ctx = harness.RetrievalContext.load(config)
    qids = ctx.split_ids(config.split)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for qid in qids:
            v = ctx.vector_list(qid)
            g = ctx.graph_list(qid)
            fh.write(
                json.dumps(
                    {
                        "query_id": qid,
                        "vector": [[pid, s] for pid, s in v.entries],
                        "graph": [[pid, s] for pid, s in g.entries],
                        "seed_misses": ctx.seed_misses.get(qid, 0),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    print(f"wrote score lists for {len(qids)} queries to {out}")
    if args.regime_report:
        report = regime_report(
            [ctx.vector_list(q) for q in qids], [ctx.graph_list(q) for q in qids]
        )
        report.write_csv(args.regime_report)
        print(f"wrote regime report to {args.regime_report} (KS: {report.ks_to_uniform})")
    return 0


def cmd_fuse(args) -> int:
    config = _run_config(args)
    ctx = harness.RetrievalContext.load(config)
    cell = config.cells[0]
    qids = ctx.split_ids(config.split)
    k = max(config.ks)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for qid in qids:
            ranking = harness.fused_ranking_for_query(ctx, cell, qid, k)
            fh.write(
                json.dumps(
                    {
                        "query_id": qid,
                        "cell_id": cell.cell_id,
                        "ranking": [
                            {
                                "passage_id": e.passage_id,
                                "score": e.score,
                                "in_vector": e.in_vector,
                                "in_graph": e.in_graph,
                            }
                            for e in ranking.entries
                        ],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    print(f"wrote fused rankings ({cell.cell_id}) for {len(qids)} queries to {out}")
    return 0


def _write_reports(report: harness.EvalReport, outdir: Path, stem: str) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    harness.write_report_csv(report, outdir / f"{stem}.csv")
    harness.write_report_json(report, outdir / f"{stem}.json")
    harness.write_records_jsonl(report, outdir / f"{stem}_records.jsonl")
    harness.write_timings_csv(report, outdir / f"{stem}_timings.csv")


def cmd_eval(args) -> int:
    config = _run_config(args)
    report = harness.run_eval(config)
    outdir = Path(args.out)
    _write_reports(report, outdir, "report")
    n_failures = sum(len(v) for v in report.failures.values())
    print(f"evaluated {len(config.cells)} cell(s); config hash {report.config_hash}")
    if n_failures:
        print(f"excluded {n_failures} failed query evaluations (see report.json)")
    print(f"reports under {outdir}")
    return 0


def cmd_sweep(args) -> int:
    config = _run_config(args)
    grid = harness.GridSpec.from_json(args.grid) if args.grid else harness.GridSpec()
    result = harness.sweep(
        config,
        grid,
        cell_cap=args.cell_cap,
        confirm=args.confirm,
        winner_rule=args.winner_rule,
    )
    outdir = Path(args.out)
    _write_reports(result.tune_report, outdir, "sweep_tune")
    harness.write_tiers_csv(result.tiers, outdir / "sweep_tiers.csv")
    print(f"swept {grid.size()} cells; tune winner: {result.winner_cell_id}")
    if result.test_report is not None:
        _write_reports(result.test_report, outdir, "sweep_test")
        print("test split evaluated for the winner (confirm)")
    return 0


def cmd_report(args) -> int:
    # Rebuild aggregate CSV from saved records against a chosen baseline cell.
    records: dict[str, dict[str, dict]] = {}
    with open(args.records, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            records.setdefault(rec["cell_id"], {})[rec["query_id"]] = rec
    baseline_id = args.baseline
    if baseline_id not in records:
        raise ValueError(f"baseline cell {baseline_id!r} not present in records")
    base = records[baseline_id]
    k = str(args.pair_k)
    lines = ["cell_id,n,wins,losses,both,neither,p_value"]
    for cell_id in sorted(records):
        cell = records[cell_id]
        shared = sorted(set(cell) & set(base))
        wins = losses = both = neither = 0
        for qid in shared:
            m = cell[qid][args.pair_metric][k]
            b = base[qid][args.pair_metric][k]
            wins += m and not b
            losses += b and not m
            both += b and m
            neither += (not b) and (not m)
        p = mcnemar_exact(wins, losses)
        lines.append(f"{cell_id},{len(shared)},{wins},{losses},{both},{neither},{p!r}")
    text = "\n".join(lines) + "\n"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"wrote {args.out}")
    return 0


def cmd_stats(args) -> int:
    out: dict[str, object]
    if args.mcnemar:
        w, l = args.mcnemar
        out = {"wins": w, "losses": l, "p_value": mcnemar_exact(w, l)}
    elif args.wilson:
        s, n = args.wilson
        lo, hi = wilson_ci(s, n)
        out = {"successes": s, "n": n, "low": lo, "high": hi}
    elif args.odds:
        a, b, n = args.odds
        out = {"odds_ratio": odds_ratio(a, b, n)}
    elif args.bootstrap:
        values = [float(x) for x in Path(args.bootstrap).read_text().split()]
        lo, hi = bootstrap_ci(values, resamples=args.resamples, seed=args.seed or 0)
        out = {"n": len(values), "low": lo, "high": hi}
    else:
        raise ValueError("choose one of --mcnemar, --wilson, --odds, --bootstrap")
    print(json.dumps(out, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calfuse",
        description="Calibrated fusion of vector and graph retrieval scores",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-hop corpus")
    p.add_argument("--synth-config", dest="synth_config", help="SynthConfig JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ingest", help="validate corpus files and print a summary")
    p.add_argument("--passages", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--queries")
    p.add_argument("--embeddings")
    p.add_argument("--entity-embeddings", dest="entity_embeddings")
    p.add_argument("--expected-dimension", type=int, dest="expected_dimension")
    p.add_argument("--tune-fraction", type=float, dest="tune_fraction")
    p.add_argument("--synonym-threshold", type=float, dest="synonym_threshold")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("retrieve", help="dump raw vector/graph score lists")
    _add_run_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--regime-report", dest="regime_report")
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("fuse", help="dump fused rankings for one cell")
    _add_run_config_args(p)
    _add_cell_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("eval", help="evaluate cells vs. the vector-only baseline")
    _add_run_config_args(p)
    _add_cell_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="grid sweep with tune-winner selection")
    _add_run_config_args(p)
    p.add_argument("--grid", help="GridSpec JSON")
    p.add_argument("--cell-cap", type=int, default=1000, dest="cell_cap")
    p.add_argument("--confirm", action="store_true", help="evaluate the winner on test")
    p.add_argument("--winner-rule", choices=["max", "safe"], default="max", dest="winner_rule")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="rebuild a pairing CSV from saved records")
    p.add_argument("--records", required=True)
    p.add_argument("--baseline", default=harness.BASELINE_CELL_ID)
    p.add_argument("--pair-metric", default="lasthop", dest="pair_metric")
    p.add_argument("--pair-k", type=int, default=10, dest="pair_k")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("stats", help="statistics utilities on plain counts")
    p.add_argument("--mcnemar", nargs=2, type=int, metavar=("W", "L"))
    p.add_argument("--wilson", nargs=2, type=int, metavar=("SUCCESSES", "N"))
    p.add_argument("--odds", nargs=3, type=int, metavar=("A", "B", "N"))
    p.add_argument("--bootstrap", help="file of whitespace-separated values")
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
