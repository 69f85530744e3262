"""Hot loops shared by the lump-sum and stochastic-arrival solvers.

Every kernel has a numba version and a vectorized numpy version with the
same summation order.  The public names dispatch on ``_accel.USE_NUMBA``.
Tables handed to the kernels live on a uniform odds grid starting at 0.
"""
import numpy as np

from . import _accel
from ._accel import njit, prange

_TIE_TOL = 1e-12


# -- table interpolation --------------------------------------------------

@njit(cache=True, inline="always")
def _interp_scalar(values, dphi, cap, end, q, linear):
    if q >= cap or q >= end:
        return 0.0
    f = q / dphi
    i = int(f)
    if linear:
        fr = f - i
        return values[i] + fr * (values[i + 1] - values[i])
    return values[i]


def _interp_numpy(values, dphi, cap, end, q, linear):
    out = np.zeros_like(q)
    ok = (q < cap) & (q < end)
    f = q[ok] / dphi
    i = f.astype(np.int64)
    if linear:
        fr = f - i
        out[ok] = values[i] + fr * (values[i + 1] - values[i])
    else:
        out[ok] = values[i]
    return out


# -- Gaussian expectation of a tabulated function after a jump -------------

@njit(cache=True, parallel=True)
def _expect_numba(A, B, weights, psi, values, dphi, cap, end, linear):
    nt, nz = A.shape
    npsi = psi.shape[0]
    out = np.zeros((nt, npsi))
    for m in prange(nt):
        for j in range(npsi):
            acc = 0.0
            for k in range(nz):
                q = A[m, k] * psi[j] + B[m, k]
                acc += weights[k] * _interp_scalar(values, dphi, cap, end, q, linear)
            out[m, j] = acc
    return out


def _expect_numpy(A, B, weights, psi, values, dphi, cap, end, linear):
    nt, nz = A.shape
    out = np.zeros((nt, psi.shape[0]))
    for k in range(nz):
        q = A[:, k, None] * psi[None, :] + B[:, k, None]
        out += weights[k] * _interp_numpy(values, dphi, cap, end, q, linear)
    return out


def expect_table(A, B, weights, psi, values, dphi, cap, end, linear=True):
    """``out[m, j] = sum_k weights[k] * w(A[m, k] * psi[j] + B[m, k])``.

    ``w`` is the table ``values`` on the grid ``0, dphi, 2 dphi, ...`` (last
    node ``end``), forced to 0 at and beyond ``cap``.
    """
    args = (np.ascontiguousarray(A, dtype=float), np.ascontiguousarray(B, dtype=float),
            np.ascontiguousarray(weights, dtype=float), np.ascontiguousarray(psi, dtype=float),
            np.ascontiguousarray(values, dtype=float), float(dphi), float(cap), float(end),
            bool(linear))
    if _accel.USE_NUMBA:
        return _expect_numba(*args)
    return _expect_numpy(*args)


# -- lump-sum minimization over a time grid --------------------------------

@njit(cache=True, parallel=True)
def _lump_min_numba(KW, tgrid, psi, lam, kcoef, tol):
    nt, npsi = KW.shape
    best = np.zeros(npsi)
    arg = np.zeros(npsi, dtype=np.int64)
    for j in prange(npsi):
        x = psi[j] + 1.0
        lo = 0.0
        for m in range(1, nt):
            t = tgrid[m]
            e = np.exp(-lam * t)
            v = x * t + kcoef * (e - 1.0) + e * KW[m, j]
            if v < lo:
                lo = v
        a = 0
        if lo < -tol:
            for m in range(1, nt):
                t = tgrid[m]
                e = np.exp(-lam * t)
                v = x * t + kcoef * (e - 1.0) + e * KW[m, j]
                if v <= lo + tol:
                    a = m
                    break
        best[j] = lo
        arg[j] = a
    return best, arg


def _lump_min_numpy(KW, tgrid, psi, lam, kcoef, tol):
    e = np.exp(-lam * tgrid)[:, None]
    J = (psi[None, :] + 1.0) * tgrid[:, None] + kcoef * (e - 1.0) + e * KW
    J[0, :] = 0.0
    lo = np.minimum(J[1:].min(axis=0), 0.0) if J.shape[0] > 1 else np.zeros(J.shape[1])
    arg = np.argmax(J <= lo[None, :] + tol, axis=0).astype(np.int64)
    arg[lo >= -tol] = 0
    return lo, arg


def lump_minimize(KW, tgrid, psi, lam, c, tol=_TIE_TOL):
    """Minimize ``J(t) = R(t, psi) + exp(-lam t) KW[t]`` over ``tgrid``.

    ``J(0) = 0`` by convention.  Returns the minimum and the index of the
    first grid time within ``tol`` of it.
    """
    kcoef = (1.0 + lam / c) / lam
    args = (np.ascontiguousarray(KW, dtype=float), np.ascontiguousarray(tgrid, dtype=float),
            np.ascontiguousarray(psi, dtype=float), float(lam), float(kcoef), float(tol))
    if _accel.USE_NUMBA:
        return _lump_min_numba(*args)
    return _lump_min_numpy(*args)


# -- backward sweep along flow lines --------------------------------------

@njit(cache=True, parallel=True)
def _sweep_numba(act, base, decay, capped, tol):
    ni, nj = act.shape
    best = np.zeros((ni, nj))
    when = np.zeros((ni, nj), dtype=np.int64)
    for j in prange(nj):
        for i in range(ni - 1, -1, -1):
            if capped[i, j] or i == ni - 1:
                best[i, j] = 0.0 if capped[i, j] else act[i, j]
                when[i, j] = i
                continue
            cont = base[i, j] + decay * best[i + 1, j]
            if act[i, j] <= cont + tol:
                best[i, j] = act[i, j]
                when[i, j] = i
            else:
                best[i, j] = cont
                when[i, j] = when[i + 1, j]
    return best, when


def _sweep_numpy(act, base, decay, capped, tol):
    ni, nj = act.shape
    best = np.zeros((ni, nj))
    when = np.zeros((ni, nj), dtype=np.int64)
    best[-1] = np.where(capped[-1], 0.0, act[-1])
    when[-1] = ni - 1
    for i in range(ni - 2, -1, -1):
        cont = base[i] + decay * best[i + 1]
        now = act[i] <= cont + tol
        best[i] = np.where(now, act[i], cont)
        when[i] = np.where(now, i, when[i + 1])
        cap = capped[i]
        best[i][cap] = 0.0
        when[i][cap] = i
    return best, when


def backward_sweep(act, base, decay, capped, tol=_TIE_TOL):
    """Solve ``best[i] = min(act[i], base[i] + decay * best[i + 1])`` backwards.

    Rows are elapsed-time steps, columns independent flow lines.  Capped
    cells are pinned to 0 with immediate action.  Returns the values and,
    per cell, the row index at which the action is taken (ties act first).
    """
    args = (np.ascontiguousarray(act, dtype=float), np.ascontiguousarray(base, dtype=float),
            float(decay), np.ascontiguousarray(capped, dtype=np.bool_), float(tol))
    if _accel.USE_NUMBA:
        return _sweep_numba(*args)
    return _sweep_numpy(*args)
