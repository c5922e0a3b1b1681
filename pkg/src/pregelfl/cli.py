"""Command-line driver; every subcommand prints JSON-lines records."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import generators
from .errors import InfeasibleError, NonConvergenceError, PregelFLError, ValidationError
from .experiments import compare_costs, mis_rounds, sketch_errors
from .facloc import solve
from .graph import CostAssignment, Graph, load_edge_list, write_edge_list
from .oracles import OracleCache, evaluate_cost

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_STALLED = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


class _Emitter:
    def __init__(self, out: str | None):
        self.fh = open(out, "a") if out else sys.stdout

    def __call__(self, command: str, params: dict, metrics: dict) -> None:
        rec = {"command": command, "params": params, "metrics": metrics, "timestamp": time.time()}
        self.fh.write(json.dumps(rec, sort_keys=True, default=_plain) + "\n")
        self.fh.flush()

    def close(self) -> None:
        if self.fh is not sys.stdout:
            self.fh.close()


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _graph_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="edge list file (u v [w] per line)")
    src.add_argument("--ff", type=int, metavar="N", help="generate a Forest Fire graph on N vertices")
    p.add_argument("--graph-seed", type=int, default=0, help="seed for --ff")
    p.add_argument("--directed", action="store_true")
    p.add_argument("--weighted", action="store_true", help="read a third weight column")


def _cost_args(p: argparse.ArgumentParser) -> None:
    c = p.add_mutually_exclusive_group()
    c.add_argument("--costs", help="file of 'vertex cost' lines; listed vertices are facilities")
    c.add_argument("--uniform-cost", type=float, help="same opening cost at every vertex")


def _load_graph(a) -> tuple[Graph, str]:
    if a.graph:
        return load_edge_list(a.graph, directed=a.directed, weighted=a.weighted), a.graph
    g = generators.forest_fire(a.ff, seed=a.graph_seed, directed=a.directed)
    return g, f"ff:{a.ff}:{a.graph_seed}"


def _load_costs(a, g: Graph) -> CostAssignment:
    if getattr(a, "costs", None):
        return CostAssignment.from_file(a.costs, g.n)
    if getattr(a, "uniform_cost", None) is not None:
        return CostAssignment.uniform(g.n, a.uniform_cost)
    return CostAssignment.default_for(g)


def cmd_generate(a, emit) -> None:
    if a.kind == "ff":
        g = generators.forest_fire(a.n, a.p_fw, a.p_bw, seed=a.seed, directed=a.directed)
    elif a.kind == "rmat":
        g = generators.rmat(a.scale, a.edges, *a.probs, seed=a.seed, directed=a.directed)
    elif a.kind == "path":
        g = generators.path_graph(a.n, directed=a.directed)
    else:
        g = generators.star_graph(a.n - 1)
    if a.weights:
        g = generators.assign_uniform_weights(g, a.weights[0], a.weights[1], seed=a.seed)
    write_edge_list(g, a.graph_out)
    emit("generate", {"kind": a.kind, "seed": a.seed, "path": a.graph_out},
         {"n": g.n, "m": g.m, "directed": g.directed, "weighted": g.weighted,
          "digest": g.digest()})


def cmd_sketch_eval(a, emit) -> None:
    g, gid = _load_graph(a)
    for hs in range(a.hash_seeds):
        for k in a.k:
            seed = a.seed + hs
            t0 = time.perf_counter()
            recs = sketch_errors(g, k, seed, a.samples, a.distances, sample_seed=a.seed)
            took = time.perf_counter() - t0
            for r in recs:
                emit("sketch-eval", {"graph": gid, "k": k, "seed": seed, "distance": r["distance"],
                                     "samples": a.samples},
                     {"mean_error": r["mean_error"], "variance": r["variance"], "seconds": took})


def cmd_solve(a, emit) -> None:
    g, gid = _load_graph(a)
    costs = _load_costs(a, g)
    t0 = time.perf_counter()
    res = solve(g, costs, eps=a.epsilon, k=a.k, seed=a.seed, mode=a.mode, mis=a.mis,
                workers=a.workers, max_supersteps=a.max_supersteps)
    took = time.perf_counter() - t0
    audit = evaluate_cost(g, costs, res.opened, res.assignment, res.service)
    if audit.flagged or abs(audit.objective - res.objective) > 1e-9 * max(1.0, abs(audit.objective)):
        raise ValidationError("audit disagrees with the reported objective")
    if a.result:
        Path(a.result).write_text(res.to_json() + "\n")
    emit("solve", {"graph": gid, "eps": a.epsilon, "k": a.k, "seed": a.seed, "mode": a.mode,
                   "mis": a.mis},
         {"objective": res.objective, "audited_objective": audit.objective,
          "opening_cost": res.opening_cost, "service_cost": res.service_cost,
          "selected": len(res.opened), "seconds": took, **res.counters})


def cmd_compare(a, emit) -> None:
    g, gid = _load_graph(a)
    costs = _load_costs(a, g)
    cache = OracleCache(a.cache) if a.cache else None
    for r in compare_costs(g, costs, a.epsilon, a.k, a.seeds, mode=a.mode, cache=cache):
        params = {"graph": gid, "eps": r.pop("eps"), "seed": r.pop("seed"), "k": r.pop("k"),
                  "mode": a.mode}
        emit("compare", params, r)


def cmd_mis_bench(a, emit) -> None:
    for n in a.sizes:
        g = generators.forest_fire(n, seed=a.graph_seed)
        costs = CostAssignment.default_for(g)
        for seed in a.seeds:
            rec = mis_rounds(g, costs, a.epsilon, a.k, seed, runs=a.runs)
            emit("mis-bench", {"graph": f"ff:{n}:{a.graph_seed}", "eps": a.epsilon, "k": a.k,
                               "seed": seed, "runs": a.runs}, rec)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pregelfl", description=__doc__)
    p.add_argument("--out", help="append records to this file instead of stdout")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", help="write a synthetic graph as an edge list")
    s.add_argument("kind", choices=["ff", "rmat", "path", "star"])
    s.add_argument("graph_out", metavar="PATH")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--scale", type=int, default=10)
    s.add_argument("--edges", type=int, default=100_000)
    s.add_argument("--probs", type=_floats, default=[0.45, 0.15, 0.15, 0.25],
                   help="R-MAT quadrant probabilities a,b,c,d")
    s.add_argument("--p-fw", type=float, default=0.3)
    s.add_argument("--p-bw", type=float, default=0.4)
    s.add_argument("--weights", type=_floats, help="lo,hi for uniform random weights")
    s.add_argument("--directed", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("sketch-eval", help="relative error of sketch ball-size estimates")
    _graph_args(s)
    s.add_argument("--k", type=_ints, default=[20, 50, 100])
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--distances", type=_floats, help="distance ladder (default depends on weights)")
    s.add_argument("--hash-seeds", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sketch_eval)

    s = sub.add_parser("solve", help="run the facility location solver")
    _graph_args(s)
    _cost_args(s)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--k", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=["sketch", "exact"], default="sketch")
    s.add_argument("--mis", choices=["greedy", "luby"], default="greedy")
    s.add_argument("--max-supersteps", type=int, default=2_000_000)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--result", help="write the full result as JSON here")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("compare", help="cost relative to the local-search baseline")
    _graph_args(s)
    _cost_args(s)
    s.add_argument("--epsilon", type=_floats, default=[0.01, 0.1, 1.0])
    s.add_argument("--k", type=int, default=200)
    s.add_argument("--seeds", type=_ints, default=[0, 1, 2, 3, 4])
    s.add_argument("--mode", choices=["sketch", "exact"], default="sketch")
    s.add_argument("--cache", help="directory for cached baseline results")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("mis-bench", help="selection supersteps: greedy vs Luby on conflict graphs")
    s.add_argument("--sizes", type=_ints, default=[1000, 10000])
    s.add_argument("--seeds", type=_ints, default=[0])
    s.add_argument("--runs", type=int, default=3)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--k", type=int, default=200)
    s.add_argument("--graph-seed", type=int, default=0)
    s.set_defaults(func=cmd_mis_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    emit = _Emitter(a.out)
    try:
        a.func(a, emit)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_STALLED
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PregelFLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        emit.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
