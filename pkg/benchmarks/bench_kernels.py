"""Time the compiled and pure-Python kernels on the same workloads.

    python3 benchmarks/bench_kernels.py [--slots N] [--sweeps N] [--repeat N]

The pure-Python backend is timed on the same slot count, so keep ``--slots``
modest; throughput is reported per slot (simulation) and per sweep (chain).
"""
import argparse
import time
from types import SimpleNamespace

import numpy as np

from aorelay import _pykernels, kernels
from aorelay.model import ChannelParams
from aorelay.simulator import SimConfig, run_sim

CHANNEL = ChannelParams(0.2, 0.8, 0.8)


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_simulate(mod, slots, repeat, policy):
    backend = SimpleNamespace(simulate=mod.simulate, chain_sweep=mod.chain_sweep)
    config = SimConfig(CHANNEL, 0.6, policy, slots, 0, 1, 1)
    return _best(lambda: run_sim(config, backend=backend), repeat)


def bench_chain(mod, cap, sweeps, repeat, kind):
    caps = (cap - 1, cap, cap)
    table = np.zeros((1, 1, 1), np.int8)

    def go():
        src = np.zeros((cap + 1,) * 3)
        dst = np.zeros_like(src)
        src[0, 0, 0] = 1.0
        dmax, scale = 0, 1.0
        for _ in range(sweeps):
            _, total, dmax = mod.chain_sweep(src, dst, kind, table, caps, 0.6, *CHANNEL.as_tuple(), dmax, 0.0, scale)
            src, dst = dst, src
            scale = 1.0 / total

    return _best(go, repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=200_000)
    ap.add_argument("--sweeps", type=int, default=60)
    ap.add_argument("--cap", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    compiled = kernels.compiled_module()
    backends = [("python", _pykernels)] + ([("cython", compiled)] if compiled is not None else [])
    if compiled is None:
        print("compiled kernels not built; timing the Python fallback only")

    print(f"{'workload':<28}{'backend':<9}{'seconds':>10}{'per unit':>14}{'speed-up':>10}")
    for label, run, units, unit in (
        ("simulate SP", lambda m: bench_simulate(m, args.slots, args.repeat, "SP"), args.slots, "slot"),
        ("simulate RP", lambda m: bench_simulate(m, args.slots, args.repeat, "RP"), args.slots, "slot"),
        (f"chain sweep RP cap {args.cap}", lambda m: bench_chain(m, args.cap, args.sweeps, args.repeat, kernels.KIND_RP),
         args.sweeps, "sweep"),
    ):
        base = None
        for name, mod in backends:
            secs = run(mod)
            base = base or secs
            print(f"{label:<28}{name:<9}{secs:>10.3f}{secs / units * 1e6:>10.2f} us/{unit:<5}{base / secs:>6.1f}x")


if __name__ == "__main__":
    main()
