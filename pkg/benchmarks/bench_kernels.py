"""Compare the numba and numpy backends of the hot kernels.

    python3 benchmarks/bench_kernels.py --steps 86400 --substations 19

Inputs (per-step demand and link supply) are built once from a metro
topology, then the buffer loop is timed on identical copies under each
backend. The script also checks that both backends leave the same state.
"""

import argparse
import statistics
import time
from dataclasses import replace

import numpy as np

from qkdgrid import _kernels
from qkdgrid.buffer import make_samplers
from qkdgrid.rng import stream
from qkdgrid.simulator import Experiment, SimulationConfig, compile_schedule, size_supply
from qkdgrid.supply import fed_csr
from qkdgrid.topology import build_metro
from qkdgrid.traffic import demand_matrix, load_classes


def build_inputs(n_sub: int, steps: int, sharing: str):
    top = replace(build_metro(n_sub, 60.0, 3, seed=0), sharing=sharing)
    exp = Experiment(top, load_classes(), config=SimulationConfig(horizon=steps + 1, warmup=1))
    exp = size_supply(exp, qkd_margin=1.05)
    top = exp.topology
    sched = compile_schedule(top, [], steps, exp.curves)
    demand = demand_matrix(make_samplers(top, exp.classes, 0, 1.0), steps, 1.0)
    bits = sched.chunk(0, steps, [stream(0, "pqc", lid) for lid in sched.link_ids])
    nodes = list(top.nodes.values())
    b_max = np.array([x.b_max for x in nodes])
    b_min = np.array([x.b_min for x in nodes])
    return dict(top=top, demand=demand, bits=bits, csr=fed_csr(top, sched.link_ids),
                b_max=b_max, b_min=b_min, phi=np.full(len(nodes), 0.9))


def run(inp, backend):
    n = len(inp["b_max"])
    B, chi, acc = inp["b_max"].copy(), np.zeros(n, bool), np.zeros((n, 2, _kernels.N_ACC))
    t = time.perf_counter()
    _kernels.run_chunk(B, chi, inp["demand"], inp["bits"], inp["csr"],
                       inp["top"].sharing == "shared", _kernels.MAXMIN, inp["phi"], inp["b_min"],
                       1.5 * inp["b_min"], inp["b_max"], 0, acc, None, backend)
    return time.perf_counter() - t, (B, chi, acc)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=86_400)
    ap.add_argument("--substations", type=int, default=19)
    ap.add_argument("--sharing", choices=["symmetric", "shared"], default="shared")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    inp = build_inputs(args.substations, args.steps, args.sharing)
    print(f"{len(inp['b_max'])} nodes, {args.steps} steps, {args.sharing} links; "
          f"default backend: {_kernels.BACKEND}")
    backends = ["numpy"] + (["numba"] if _kernels.BACKEND == "numba" else [])
    states, best = {}, {}
    for name in backends:
        arg = None if name == "numba" else name
        if name == "numba":
            run(inp, arg)  # compile (or load from cache) outside the timing
        times = []
        for _ in range(args.repeat):
            dt, states[name] = run(inp, arg)
            times.append(dt)
        best[name] = min(times)
        rate = args.steps * len(inp["b_max"]) / best[name]
        print(f"{name:>6}: best {best[name] * 1e3:9.1f} ms  median "
              f"{statistics.median(times) * 1e3:9.1f} ms  ({rate:,.0f} node-steps/s)")
    if len(states) == 2:
        same = all(np.array_equal(a, b) for a, b in zip(states["numpy"], states["numba"]))
        print(f"speed-up {best['numpy'] / best['numba']:.1f}x; identical state: {same}")

    rng = np.random.default_rng(0)
    req = rng.uniform(0, 1e4, 6)
    out = np.zeros(6)
    _kernels.maxmin_fill(2e4, req, out)
    t = time.perf_counter()
    for _ in range(100_000):
        _kernels.maxmin_fill(2e4, req, out)
    print(f"maxmin_fill ({_kernels.BACKEND}, 6 nodes): "
          f"{(time.perf_counter() - t) * 10:.2f} us per call")


if __name__ == "__main__":
    main()
