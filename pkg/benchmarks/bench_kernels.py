"""Timing comparison of the njit kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--steps N]

Times the full reservoir cycle (banded channel + presence mixing + thermal
step) over a long iteration at several truncation sizes, plus the dense
apply_map route for scale. The numba path must be importable; the fallback is
exercised directly through the *_numpy functions, so no re-import with
FOCKSTAB_NO_NUMBA is needed.
"""

import argparse
import math
import time

from fockstab import kernels
from fockstab.dynamics import make_params
from fockstab.fock import fock_density
from fockstab.kraus import analytic_kraus, apply_map, bands
from fockstab.thermal import cavity_thermal


def time_call(fn, repeat=3):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=5000, help="cycles per timing run")
    args = parser.parse_args()

    tp = cavity_thermal()
    print(f"active backend: {kernels.active_backend()}   steps per run: {args.steps}")
    print(f"{'nbar':>4} {'dim':>4} {'numba evolve':>14} {'numpy evolve':>14} {'speedup':>8} {'dense/step':>12}")

    for nbar in (1, 3, 8):
        dim = 9 * (nbar + 1)
        k = analytic_kraus(make_params(nbar, theta2=0.75 * math.pi / math.sqrt(nbar)), dim)
        g, e, m = bands(k)
        rho0 = fock_density(0, dim)
        gm, gp, pat = tp.gamma_minus, tp.gamma_plus, tp.p_at

        # first call includes jit compilation; time it separately
        kernels.evolve(g, e, m, rho0, gm, gp, pat, 2)

        t_jit = time_call(lambda: kernels.evolve(g, e, m, rho0, gm, gp, pat, args.steps))
        t_np = time_call(lambda: kernels.evolve_numpy(g, e, m, rho0, gm, gp, pat, args.steps))

        rho = rho0.copy()

        def dense_steps(n=50):
            nonlocal rho
            for _ in range(n):
                rho = apply_map(k, rho)

        t_dense = time_call(lambda: dense_steps()) / 50

        print(
            f"{nbar:>4} {dim:>4} {t_jit:>12.3f} s {t_np:>12.3f} s {t_np / t_jit:>7.1f}x {t_dense * 1e6:>9.1f} us"
        )

    if kernels.active_backend() != "numba":
        print("note: numba unavailable or disabled; both evolve columns ran the numpy path")


if __name__ == "__main__":
    main()
