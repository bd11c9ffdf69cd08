"""capstore: certified answer reuse over capability hypergraphs.

Exit codes: 0 success, 1 invalid input or configuration, 2 a demo assertion failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .baselines import demo_graph, unsound_demo
from .corpus import Corpus, load_corpus
from .errors import InputError, RefusalError
from .extraction import (
    Ontology, collect_stats, extract_hypergraph, ontology_for_domains, soundness_report,
)
from .harness import (
    COVERAGE, METHODS, OMISSION_COLUMNS, OMISSION_RATES, ExperimentConfig, hit_rate_bound_report,
    run_omission_experiment, run_simulation,
)
from .hypergraph import (
    ForbiddenSet, compositionality_defect, graph_stats, load_hypergraph,
    minimal_unsafe_antichain_bruteforce, save_hypergraph, split_witness,
)
from .multiwoz import load_multiwoz
from .report import csv_text, emit_report, format_summary, json_dump
from .session import CostModel
from .store import TemplateDb
from .synth import SynthParams, independence_world, synth_corpus, synth_world


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _cost(text: str) -> CostModel:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("cost model is rag,tier2,tier1 units, e.g. 1000,10,1")
    try:
        return CostModel(*(int(p) for p in parts))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cost model {text!r}") from None


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", type=Path, help="native corpus JSON")
    p.add_argument("--multiwoz", type=Path, help="MultiWOZ 2.2 root directory")
    p.add_argument("--split", default="test", help="MultiWOZ split (train, dev, test)")
    p.add_argument("--sessions", type=int, default=1000, help="synthetic corpus size when no corpus is given")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")


def _corpus(args, world) -> tuple[Corpus, dict]:
    if args.corpus and args.multiwoz:
        raise InputError("give either --corpus or --multiwoz, not both")
    if args.corpus:
        return load_corpus(args.corpus), {"corpus": args.corpus.name}
    if args.multiwoz:
        return load_multiwoz(args.multiwoz, args.split), {"multiwoz_split": args.split}
    params = SynthParams(n_sessions=args.sessions)
    return synth_corpus(world, params, args.seed), {"synthetic": params.to_dict()}


def _graph(args, world):
    if args.hypergraph:
        graph, forbidden = load_hypergraph(args.hypergraph)
        tdb = TemplateDb.load(args.templates) if args.templates else TemplateDb()
        return graph, forbidden, tdb
    tdb = TemplateDb.load(args.templates) if args.templates else world.templates
    return world.graph, world.forbidden, tdb


def cmd_extract(args) -> int:
    world = synth_world()
    corpus, source = _corpus(args, world)
    if args.ontology:
        ontology = Ontology.load(args.ontology)
    else:
        ontology = ontology_for_domains(world.domains, forbidden=("hotel-booked",))
    stats = collect_stats(corpus, ontology, args.horizon, args.max_subset)
    graph = extract_hypergraph(stats, ontology, args.theta, args.n_floor)
    forbidden = ForbiddenSet(frozenset(ontology.forbidden))
    args.out.mkdir(parents=True, exist_ok=True)
    save_hypergraph(args.out / "hypergraph.json", graph, forbidden)
    (args.out / "stats.json").write_text(stats.dumps(), encoding="utf-8")
    rows = soundness_report(graph, stats, args.theta, 0.15, args.soundness_floor)
    (args.out / "soundness.csv").write_text(
        csv_text(("arc_index", "sources", "target", "rate", "n_s", "bound", "flagged"),
                 [{**asdict(r), "sources": " ".join(r.sources)} for r in rows]),
        encoding="utf-8")
    defect = compositionality_defect(graph, forbidden)
    splits = {str(e): [sorted(s) for s in split_witness(graph, forbidden, e) or ()] for e, _, _ in defect.per_arc}
    emit_report(args.out, config={"command": "extract", "theta": args.theta, "horizon": args.horizon,
                                  "seed": args.seed, **source},
                extra={"graph_stats": graph_stats(graph),
                       "defect": {"total": defect.total, "mean": defect.mean,
                                  "per_arc": [list(r) for r in defect.per_arc], "splits": splits}})
    print(f"extracted {graph.n} nodes, {graph.m} arcs -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    world = synth_world()
    corpus, source = _corpus(args, world)
    graph, forbidden, tdb = _graph(args, world)
    methods = tuple(m for item in args.method for m in item.split(",") if m) if args.method else METHODS
    config = ExperimentConfig(seed=args.seed, methods=methods, coverage=args.coverage, tau=args.tau,
                              cost=args.cost_model, cas_scope=args.cas_scope)
    metrics = run_simulation(config, graph, forbidden, tdb, corpus)
    extra = {"graph_stats": graph_stats(graph)}
    if args.delta_star and "cas_pab" in methods:
        p = max(config.coverage)
        measured = metrics.summary("cas_pab", p).hit_rate
        extra["hit_rate_bound"] = hit_rate_bound_report(graph, forbidden, corpus, p, args.delta_star,
                                                        measured).to_dict()
    emit_report(args.out, metrics, config={"command": "simulate", **source}, extra=extra)
    print(format_summary(json.loads((args.out / "report.json").read_text())), end="")
    return 0


def cmd_omission(args) -> int:
    if args.independence:
        world, params = independence_world()
        params = SynthParams(**{**params.__dict__, "n_sessions": args.sessions})
        w_star = 2
    else:
        world, params, w_star = synth_world(), SynthParams(n_sessions=args.sessions), args.w_star
    if args.corpus or args.multiwoz:
        corpus, source = _corpus(args, world)
    else:
        corpus, source = synth_corpus(world, params, args.seed), {"synthetic": params.to_dict()}
    graph, forbidden, tdb = _graph(args, world)
    rows = run_omission_experiment(graph, forbidden, tdb, corpus, args.r, args.seed, w_star)
    data = [asdict(r) for r in rows]
    emit_report(args.out, config={"command": "omission", "seed": args.seed, **source},
                extra={"omission": data})
    (args.out / "omission.csv").write_text(csv_text(OMISSION_COLUMNS, data), encoding="utf-8")
    print(format_summary({"omission": data}), end="")
    return 0


def cmd_unsound_demo(args) -> int:
    status = 0
    reports = []
    for tau in args.tau:
        rep = unsound_demo(tau)
        reports.append(rep.to_dict())
        print(rep.to_text(), end="")
        print(f"result: {'PASS' if rep.ok else 'FAIL'}")
        if not rep.ok:
            status = 2
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "unsound_demo.json").write_text(json_dump({"runs": reports}), encoding="utf-8")
        (args.out / "unsound_demo.txt").write_text(
            "".join("\n".join(r["transcript"]) + "\n" for r in reports), encoding="utf-8")
    return status


def cmd_antichain(args) -> int:
    if args.hypergraph:
        graph, forbidden = load_hypergraph(args.hypergraph)
    else:
        graph, forbidden = demo_graph()
    try:
        sets = minimal_unsafe_antichain_bruteforce(graph, forbidden, args.max_n)
    except RefusalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    defect = compositionality_defect(graph, forbidden)
    doc = {
        "minimal_unsafe_sets": sorted(sorted(s) for s in sets),
        "defect": {"total": defect.total, "per_arc": [list(r) for r in defect.per_arc]},
        "splits": {str(e): [sorted(x) for x in split_witness(graph, forbidden, e) or ()]
                   for e, _, _ in defect.per_arc},
    }
    text = json_dump(doc)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "antichain.json").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_report(args) -> int:
    path = args.input / "report.json" if args.input.is_dir() else args.input
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read report {path}: {exc}") from exc
    print(format_summary(doc), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capstore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract a hypergraph from a corpus")
    _add_source(p)
    p.add_argument("--ontology", type=Path)
    p.add_argument("--theta", type=float, default=0.75)
    p.add_argument("--horizon", type=int, default=3)
    p.add_argument("--max-subset", type=int, default=5)
    p.add_argument("--n-floor", type=int, default=30)
    p.add_argument("--soundness-floor", type=int, default=100)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("simulate", help="replay a corpus under each caching method")
    _add_source(p)
    p.add_argument("--hypergraph", type=Path)
    p.add_argument("--templates", type=Path)
    p.add_argument("--coverage", type=_floats, default=COVERAGE)
    p.add_argument("--tau", type=float, default=0.85)
    p.add_argument("--method", action="append", help=f"one or more of {', '.join(METHODS)}")
    p.add_argument("--cost-model", type=_cost, default=CostModel())
    p.add_argument("--cas-scope", choices=("session", "run"), default="session")
    p.add_argument("--delta-star", type=int, default=0, help="evaluate the hit-rate bound at this witness size")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("omission", help="slot-omission robustness experiment")
    _add_source(p)
    p.add_argument("--hypergraph", type=Path)
    p.add_argument("--templates", type=Path)
    p.add_argument("--r", type=_floats, default=OMISSION_RATES)
    p.add_argument("--w-star", type=int)
    p.add_argument("--independence", action="store_true", help="use the independence-structured world")
    p.set_defaults(func=cmd_omission)

    p = sub.add_parser("unsound-demo", help="two-tenant similarity-cache counterexample")
    p.add_argument("--tau", type=_floats, default=(0.5, 0.85, 0.99))
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_unsound_demo)

    p = sub.add_parser("antichain", help="minimal unsafe sets and compositionality defect")
    p.add_argument("--hypergraph", type=Path)
    p.add_argument("--max-n", type=int, default=20)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_antichain)

    p = sub.add_parser("report", help="print a saved report")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
