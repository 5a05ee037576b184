"""Command-line interface: generation, analysis, bounds, verification, experiments.

Exit codes: 0 success, 1 domain error, 2 usage error, 3 verification failure.
All floating-point output is printed with 12 significant digits.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .bounds import (
    MixingConstants,
    build_message_matrix,
    min_depth_bound,
    min_weight_bound,
    mixing_bound,
    serialize_extended,
)
from .errors import SquashscopeError
from .experiments import TrainConfig, ablation, default_corpus
from .graphs import (
    NodePair,
    bfs_distances,
    components,
    diameter,
    generate,
    load,
    save,
    shortest_distance,
)
from .mpnn import random_model, verify_bound
from .spectral import commute_time_spectral, spectral_data

DEFAULT_CONSTANTS = {"omega": 0.0, "w": 1.0, "c1": 0.0, "c2": 1.0, "c2nd": 0.0, "c_sigma": 1.0}
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_VIOLATION = 3


def fmt(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:.12g}"


def _round_floats(obj):
    if isinstance(obj, float):
        return obj if math.isinf(obj) or math.isnan(obj) else float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_round_floats(obj))


def _parse_pair(text: str, parser) -> NodePair:
    try:
        v, u = (int(tok) for tok in text.split(","))
    except ValueError:
        parser.error(f"--pair expects 'v,u' with integers, got {text!r}")
    return NodePair(v, u)


def _load_constants(path: str | None, parser) -> MixingConstants:
    merged = dict(DEFAULT_CONSTANTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read constants file {path}: {exc}")
        if not isinstance(data, dict):
            parser.error(f"constants file {path} must hold a JSON object")
        merged.update(data)
    return MixingConstants.from_json_dict(merged)


def _thread_count(args) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("SQUASHSCOPE_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return 1


def _run_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def write_manifest(path: str, command: list[str], config: dict, seeds: dict) -> None:
    payload = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest(),
        "seeds": seeds,
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args, parser) -> int:
    params = {}
    if args.kind == "tree":
        params = {"arity": args.arity, "depth": args.depth}
    elif args.kind == "grid":
        params = {"width": args.width, "height": args.height}
    elif args.kind == "erdos_renyi":
        params = {"p": args.p}
    elif args.kind == "molecule_like":
        params = {"extra_cycles": args.extra_cycles}
    g = generate(args.kind, n=args.n, seed=args.seed, **params)
    fmt_name = args.format or ("json" if args.output.endswith(".json") else "edge_list")
    save(g, args.output, format=fmt_name)
    print(
        f"n={g.n} edges={g.edge_count} diameter={diameter(g)} "
        f"bipartite={'yes' if g.bipartite else 'no'} validated={'yes' if g.validated else 'no'}"
    )
    return 0


def cmd_analyze(args, parser) -> int:
    g = load(args.graph)
    if not g.connected:
        raise SquashscopeError(
            f"graph is disconnected; components: {components(g)}"
        )
    table = commute_time_spectral(g)
    spectrum = spectral_data(g, "normalized")
    lam1 = float(spectrum.eigenvalues[1])
    lam_max = float(spectrum.eigenvalues[-1])
    gamma = float(np.sqrt(g.degrees.max() / g.degrees.min()))
    if args.pairs == "all":
        pairs = [(v, u) for v in range(g.n) for u in range(v + 1, g.n)]
    else:
        pair = _parse_pair(args.pairs, parser)
        pair.check(g.n)
        pairs = [(pair.v, pair.u)]
    dist = {v: bfs_distances(g, v) for v in set(p[0] for p in pairs)}
    rows = [
        {
            "v": v,
            "u": u,
            "tau": float(table.tau[v, u]),
            "resistance": float(table.resistance[v, u]),
            "distance": int(dist[v][u]),
        }
        for v, u in pairs
    ]
    if args.format == "json":
        print(dumps({"lambda_1": lam1, "lambda_max": lam_max, "gamma": gamma, "pairs": rows}))
    else:
        print(f"# lambda_1={fmt(lam1)} lambda_max={fmt(lam_max)} gamma={fmt(gamma)}")
        print("row,col,tau,resistance,distance")
        for row in rows:
            print(
                f"{row['v']},{row['u']},{fmt(row['tau'])},{fmt(row['resistance'])},{row['distance']}"
            )
    return 0


def cmd_bound(args, parser) -> int:
    g = load(args.graph)
    constants = _load_constants(args.constants, parser)
    pair = _parse_pair(args.pair, parser)
    a = build_message_matrix(g, args.kind)
    report = mixing_bound(g, a, constants, args.depth, pair)
    payload = report.to_json_dict()
    if args.analytic == "tree":
        r = shortest_distance(g, pair)
        arity = int(g.degrees[0])
        payload["analytic_tree_osq"] = (
            constants.w ** (-r) * (arity + 1) ** (r - 1) if constants.w > 0 else math.inf
        )
        payload["analytic_tree_osq"] = serialize_extended(payload["analytic_tree_osq"])
    print(dumps(payload))
    return 0


def cmd_capacity(args, parser) -> int:
    g = load(args.graph)
    constants = _load_constants(args.constants, parser)
    pair = _parse_pair(args.pair, parser)
    if args.mode == "min-weight":
        result = min_weight_bound(g, pair, constants.c2, args.mixing, kind=args.kind)
        print(dumps({"mode": "min-weight", **result.to_json_dict()}))
    else:
        result = min_depth_bound(g, pair, constants, args.mixing)
        print(dumps({"mode": "min-depth", **result.to_json_dict()}))
    return 0


_GRAPH_SPEC_HELP = (
    "comma-separated kind tokens: path:N cycle:N complete:N tree:AxD grid:WxH "
    "er:N:P molecule:N:K"
)


def _parse_graph_spec(spec: str, seed: int):
    graphs = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        head, *rest = token.split(":")
        if head in ("path", "cycle", "complete"):
            graphs.append(generate(head, n=int(rest[0])))
        elif head == "tree":
            a, d = rest[0].split("x")
            graphs.append(generate("tree", arity=int(a), depth=int(d)))
        elif head == "grid":
            w, h = rest[0].split("x")
            graphs.append(generate("grid", width=int(w), height=int(h)))
        elif head == "er":
            graphs.append(generate("erdos_renyi", n=int(rest[0]), p=float(rest[1]), seed=seed))
        elif head == "molecule":
            graphs.append(
                generate("molecule_like", n=int(rest[0]), extra_cycles=int(rest[1]), seed=seed)
            )
        else:
            raise SquashscopeError(f"unknown graph token {token!r}; {_GRAPH_SPEC_HELP}")
    if not graphs:
        raise SquashscopeError("empty graph spec")
    return graphs


def cmd_verify(args, parser) -> int:
    if args.trials < 1:
        parser.error("--trials must be a positive integer")
    graphs = _parse_graph_spec(args.graphs, args.seed)
    constants = None
    if args.constants is not None:
        constants = _load_constants(args.constants, parser)
    families = {"linear": ["linear"], "gated": ["gated"], "both": ["linear", "gated"]}[
        args.model_family
    ]
    trial_seeds = np.random.SeedSequence(entropy=args.seed, spawn_key=(0x76,)).generate_state(
        args.trials, dtype=np.uint64
    )

    def run_trial(t: int) -> dict:
        rng = np.random.default_rng(int(trial_seeds[t]))
        g = graphs[int(rng.integers(len(graphs)))]
        family = families[int(rng.integers(len(families)))]
        kind = ["sym", "rw", "raw"][int(rng.integers(3))]
        width = int(rng.integers(1, 4))
        depth = int(rng.integers(1, 4))
        readout = ["sum", "mean"][int(rng.integers(2))]
        scale = float(rng.uniform(0.2, 1.0))
        model = random_model(
            width=width,
            depth=depth,
            family=family,
            activation="tanh",
            readout=readout,
            matrix_kind=kind,
            seed=int(rng.integers(2**62)),
            scale=scale,
        )
        nodes = rng.choice(g.n, size=2, replace=False)
        pair = NodePair(int(nodes[0]), int(nodes[1]))
        outcome = verify_bound(
            model, g, pair, input_box=(0.0, 1.0), samples=2, seed=int(rng.integers(2**62)),
            constants=constants,
        )
        outcome.update(
            {"trial": t, "graph_n": g.n, "family": family, "kind": kind, "width": width, "depth": depth}
        )
        return outcome

    outcomes = _run_ordered(run_trial, range(args.trials), _thread_count(args))
    violations = 0
    worst_slack = math.inf
    for outcome in outcomes:
        print(dumps(outcome))
        if not outcome["satisfied"]:
            violations += 1
        worst_slack = min(worst_slack, outcome["slack"])
    print(
        dumps(
            {
                "trials": args.trials,
                "violations": violations,
                "worst_slack": worst_slack,
            }
        )
    )
    return EXIT_VIOLATION if violations else 0


def cmd_experiment(args, parser) -> int:
    kind = {"commute": "commute_time", "depth": "depth", "mixing": "mixing"}[args.ablation]
    os.makedirs(args.out, exist_ok=True)
    corpus = default_corpus(args.seed, count=args.graph_count, n_range=(args.n_min, args.n_max))
    cfg = TrainConfig(
        depth=1,
        width=args.width,
        epochs=args.epochs,
        restarts=args.restarts,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    result = ablation(kind, cfg=cfg, seed=args.seed, corpus=corpus)
    csv_path = os.path.join(args.out, f"{kind}.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.to_csv())
    config = {
        "ablation": kind,
        "graph_count": args.graph_count,
        "n_min": args.n_min,
        "n_max": args.n_max,
        "train": cfg.to_json_dict(),
    }
    write_manifest(
        os.path.join(args.out, "manifest.json"),
        command=sys.argv,
        config=config,
        seeds={"seed": args.seed},
    )
    print(f"wrote {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="squashscope",
        description="Over-squashing measures, capacity bounds, and bound verification for MPNNs.",
    )
    parser.add_argument("--version", action="version", version=f"squashscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a graph and write it to a file")
    gen.add_argument(
        "--kind",
        required=True,
        choices=["path", "cycle", "complete", "tree", "grid", "erdos_renyi", "molecule"],
    )
    gen.add_argument("--n", type=int, help="node count (path/cycle/complete/erdos/molecule)")
    gen.add_argument("--seed", type=int, help="seed for randomized kinds")
    gen.add_argument("--arity", type=int, help="tree arity")
    gen.add_argument("--depth", type=int, help="tree depth (levels below the root)")
    gen.add_argument("--width", type=int, help="grid width")
    gen.add_argument("--height", type=int, help="grid height")
    gen.add_argument("--p", type=float, help="edge probability for erdos_renyi")
    gen.add_argument("--extra-cycles", type=int, default=1, help="chords for molecule graphs")
    gen.add_argument("-o", "--output", required=True)
    gen.add_argument("--format", choices=["edge_list", "json"])
    gen.set_defaults(fn=cmd_gen, kind_map=True)

    analyze = sub.add_parser("analyze", help="commute times, resistances, spectral summary")
    analyze.add_argument("graph")
    analyze.add_argument("--pairs", default="all", help="'all' or 'v,u'")
    analyze.add_argument("--format", choices=["csv", "json"], default="csv")
    analyze.set_defaults(fn=cmd_analyze)

    bound = sub.add_parser("bound", help="pairwise mixing bound and over-squashing score")
    bound.add_argument("graph")
    bound.add_argument("--pair", required=True)
    bound.add_argument("--depth", type=int, required=True)
    bound.add_argument("--constants", help="JSON file overriding the default constants")
    bound.add_argument("--kind", choices=["sym", "rw", "raw"], default="sym")
    bound.add_argument("--analytic", choices=["tree"], help="print a closed form alongside")
    bound.set_defaults(fn=cmd_bound)

    capacity = sub.add_parser("capacity", help="minimal weight norm or depth for a target mixing")
    capacity.add_argument("graph")
    capacity.add_argument("--pair", required=True)
    capacity.add_argument("--mixing", type=float, required=True)
    capacity.add_argument("--mode", choices=["min-weight", "min-depth"], required=True)
    capacity.add_argument("--constants")
    capacity.add_argument("--kind", choices=["sym", "rw", "raw"], default="sym")
    capacity.set_defaults(fn=cmd_capacity)

    verify = sub.add_parser("verify", help="empirical-vs-theoretical bound checks on random models")
    verify.add_argument("--trials", type=int, required=True)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument(
        "--graphs",
        default="path:5,cycle:5,complete:4,tree:2x2,grid:3x3,molecule:10:2",
        help=_GRAPH_SPEC_HELP,
    )
    verify.add_argument("--model-family", choices=["linear", "gated", "both"], default="both")
    verify.add_argument("--constants", help="override certified constants (testing the harness)")
    verify.add_argument("--threads", type=int)
    verify.set_defaults(fn=cmd_verify)

    experiment = sub.add_parser("experiment", help="run a trend ablation and write CSV + manifest")
    experiment.add_argument("--ablation", choices=["commute", "depth", "mixing"], required=True)
    experiment.add_argument("--out", required=True)
    experiment.add_argument("--seed", type=int, default=0)
    experiment.add_argument("--graph-count", type=int, default=200)
    experiment.add_argument("--n-min", type=int, default=22)
    experiment.add_argument("--n-max", type=int, default=30)
    experiment.add_argument("--width", type=int, default=32)
    experiment.add_argument("--epochs", type=int, default=200)
    experiment.add_argument("--restarts", type=int, default=3)
    experiment.add_argument("--batch-size", type=int, default=16)
    experiment.add_argument("--threads", type=int)
    experiment.set_defaults(fn=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "kind", None) == "molecule":
        args.kind = "molecule_like"
    try:
        return args.fn(args, parser)
    except SquashscopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
