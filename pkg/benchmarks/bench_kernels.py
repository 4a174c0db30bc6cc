"""Time the numba kernels against their pure-numpy/Python fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best wall time of ``--repeat`` calls after one warm-up
call (so JIT compilation is excluded) and checks that both paths agree.
"""

import argparse
import time

import numpy as np

from smartcharge import _kernels
from smartcharge.signal import SynthSpec, synth_tone


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    x = synth_tone(50.0, 60.0, 20_000.0, SynthSpec(noise_sigma=1e-3, rng_seed=1)).samples
    yield "schmitt 60 s @ 20 kHz", _kernels.schmitt_crossings_numba, _kernels.schmitt_crossings_numpy, (x, 0.0, 0.005)
    rng = np.random.default_rng(0)
    f = 50.0 + 0.05 * rng.standard_normal(21 * 86_400)
    sim_args = (f, 1.0, 0.0213, 0.0115, 3, 50.0, 0.75, 0.80, 1.0, True, False)
    yield "simulate 21 d @ 1 s (band)", _kernels.simulate_numba, _kernels.simulate_python, sim_args
    eps = rng.standard_normal(21 * 86_400)
    yield "OU path 21 d @ 1 s", _kernels.ou_path_numba, _kernels.ou_path_numpy, (eps, 50.0, 50.0, 0.9967, 0.004)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba path unavailable (not installed or SMARTCHARGE_DISABLE_NUMBA set)")
    print(f"{'kernel':30s} {'numba [ms]':>11s} {'fallback [ms]':>14s} {'speedup':>8s}  agree")
    for name, fast, slow, fargs in cases():
        t_fast = best_of(fast, fargs, args.repeat)
        t_slow = best_of(slow, fargs, max(1, args.repeat // 2))
        a, b = fast(*fargs), slow(*fargs)
        a, b = (a, b) if isinstance(a, tuple) else ((a,), (b,))
        agree = all(np.allclose(np.asarray(p, float), np.asarray(q, float), rtol=0, atol=1e-9) for p, q in zip(a, b))
        print(f"{name:30s} {t_fast * 1e3:11.2f} {t_slow * 1e3:14.2f} {t_slow / t_fast:7.1f}x  {agree}")


if __name__ == "__main__":
    main()
