"""Wall-clock comparison of the numba and numpy kernels.

Usage::

    python benchmarks/bench_backends.py [--repeat 3] [--L 64] [--lift 16000]

Each kernel is run once untimed so numba compilation is excluded.
"""

from __future__ import annotations

import argparse
import time

from sccs.density_evolution import ChannelParams, RegularEnsemble, StopRule, run_de
from sccs.ensemble import lift_protograph, make_coupled_protograph, make_regular_protograph
from sccs.lm2_decoder import gen_sparse_signal, lm2_decode, measure


def best_of(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--L", type=int, default=64, help="coupled chain length for the DE case")
    ap.add_argument("--lift", type=int, default=16000, help="lift size for the decoder case")
    args = ap.parse_args(argv)

    chain = make_coupled_protograph(4, 8, args.L)
    inst = lift_protograph(make_regular_protograph(4, 8), args.lift, seed=0,
                           entry_rule="continuous")
    x = gen_sparse_signal(inst.N, epsilon=0.2, seed=0)
    y = measure(inst, x)
    stop = StopRule(max_iterations=2000)

    cases = {
        "DE regular (4,8), eps=0.25": lambda b: run_de(RegularEnsemble(4, 8),
                                                       ChannelParams(0.25), backend=b),
        f"DE {chain.label}, eps=0.28, <= 2000 iters": lambda b: run_de(
            chain, ChannelParams(0.28), stop, backend=b),
        f"LM2 decode N={inst.N}, eps=0.2": lambda b: lm2_decode(inst, y, backend=b),
    }
    print(f"{'case':45s} {'numba [s]':>10s} {'numpy [s]':>10s} {'ratio':>7s}")
    for name, fn in cases.items():
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        print(f"{name:45s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:7.1f}")


if __name__ == "__main__":
    main()
