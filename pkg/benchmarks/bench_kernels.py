"""Time the numba kernels against their numpy fallbacks on default-size inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Both implementations are called directly, so the QUICKDETECT_NO_NUMBA flag
does not matter here.  The first numba call (compilation) is excluded.
"""
import argparse
import time

import numpy as np

from quickdetect import kernels
from quickdetect.model import ModelParams
from quickdetect.lump import v0_analytic
from quickdetect.operators import QuadratureRule, jump_tables, time_grid


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--phi-points", type=int, default=551)
    ap.add_argument("--dt", type=float, default=0.1)
    args = ap.parse_args()

    params = ModelParams()
    phibar = 56.865
    rule = QuadratureRule.gauss_hermite(64)
    psi = np.linspace(0.0, phibar, args.phi_points)
    tg = time_grid(params, args.dt)
    A, B = jump_tables(tg, params, rule)
    vals = v0_analytic(psi, params)
    h = psi[1]
    ex = (A, B, rule.weights, psi, vals, h, phibar, psi[-1], True)

    kernels._expect_numba(*ex)  # compile
    t_nb, kw_nb = _best(lambda: kernels._expect_numba(*ex), args.repeat)
    t_np, kw_np = _best(lambda: kernels._expect_numpy(*ex), args.repeat)

    lm = (kw_nb, tg, psi, params.lam, (1 + params.lam / params.c) / params.lam, 1e-12)
    kernels._lump_min_numba(*lm)
    t_nb2, (v_nb, _) = _best(lambda: kernels._lump_min_numba(*lm), args.repeat)
    t_np2, (v_np, _) = _best(lambda: kernels._lump_min_numpy(*lm), args.repeat)

    rows = 410
    rng = np.random.default_rng(0)
    act = -rng.random((rows, psi.size))
    base = 0.01 * rng.standard_normal((rows, psi.size))
    capped = np.zeros((rows, psi.size), dtype=bool)
    capped[-1] = True
    sw = (act, base, 0.99, capped, 1e-12)
    kernels._sweep_numba(*sw)
    t_nb3, (b_nb, _) = _best(lambda: kernels._sweep_numba(*sw), args.repeat)
    t_np3, (b_np, _) = _best(lambda: kernels._sweep_numpy(*sw), args.repeat)

    print(f"{'kernel':<22}{'shape':>22}{'numba s':>11}{'numpy s':>11}{'speedup':>9}{'max |diff|':>12}")
    for name, shape, a, b, d in [
        ("expect_table", f"{A.shape[0]}x{psi.size}x{rule.order}", t_nb, t_np, np.abs(kw_nb - kw_np).max()),
        ("lump_minimize", f"{A.shape[0]}x{psi.size}", t_nb2, t_np2, np.abs(v_nb - v_np).max()),
        ("backward_sweep", f"{rows}x{psi.size}", t_nb3, t_np3, np.abs(b_nb - b_np).max()),
    ]:
        print(f"{name:<22}{shape:>22}{a:>11.4f}{b:>11.4f}{b / a:>9.1f}{d:>12.2e}")


if __name__ == "__main__":
    main()
