from dataclasses import replace
import math

import numpy as np
import pytest

import oracles
from quickdetect import DomainError, ConfigError, infinite_horizon_gap, io, jump_update, solve_lump
from quickdetect.arrival import (OBSERVE, STOP, FeasibleTable, j0_arrival, j0_arrival_min, j_e,
                                 j_e_min, j_plus, k_bold, solve_arrival)
from quickdetect.operators import j_op, running_cost, t_star_0

TOL = 1e-9


def const_table(value, phibar=60.0, lam=0.1):
    s = np.linspace(0.0, 50.0, 501)
    psi = np.linspace(0.0, phibar, 601)
    z = np.zeros((s.size, psi.size))
    return FeasibleTable(s, psi, z + value, z, z.astype(np.int8), phibar, lam)


def test_gap_bound_examples(params):
    p = params.with_mu(1.0)
    assert infinite_horizon_gap(p, 10) == pytest.approx(100 * (1 / 1.1) ** 11)
    assert infinite_horizon_gap(p, 10) == pytest.approx(35.05, abs=5e-3)
    bounds = [infinite_horizon_gap(p, n) for n in range(60)]
    assert all(a > b for a, b in zip(bounds, bounds[1:])) and bounds[-1] < 1.0
    assert infinite_horizon_gap(p.with_mu(0.1), 3) == pytest.approx(100 * 2.0**-4)
    with pytest.raises(DomainError):
        infinite_horizon_gap(params, 1)


def test_feasible_table_domain():
    w = const_table(-2.0)
    assert w(0.0, 3.0) == -2.0
    assert w(1.0, math.expm1(0.1)) == -2.0
    assert w(0.0, 61.0) == 0.0
    with pytest.raises(DomainError):
        w(1.0, 0.05)
    grid = w.on_grid([0.0, 10.0], [0.0, 5.0])
    assert np.isnan(grid[1, 0]) and grid[1, 1] == -2.0


def test_k_bold(params, lattices):
    assert k_bold(const_table(-3.0, phibar=1e6), 1.0, 2.0, params) == pytest.approx(-3.0, abs=1e-13)
    w = lattices[1.0].tables[(1, 0)]
    from quickdetect import k_op
    for t, phi in [(0.5, 0.0), (3.0, 8.0)]:
        assert k_bold(w, t, phi, params) == pytest.approx(k_op(w.slice0(), t, phi, params), abs=1e-12)
    z = np.random.default_rng(11).standard_normal(10**6)
    mean, se = oracles.mc_mean(w(0.0, jump_update(1.0, 2.0, z, params)))
    assert abs(k_bold(w, 1.0, 2.0, params) - mean) < 3 * se


def test_j0_arrival_examples(params, lattices, lump10):
    zero = const_table(0.0)
    assert j0_arrival(zero, 0.0, 0.0, 3.0, params, mu=1.0) == 0.0
    smooth = lambda y, phi: -50.0 / (1.0 + np.asarray(phi)) - 0.1 * np.asarray(y)
    for t in (0.7, 3.0, 12.0):
        ref = oracles.j0_arrival(smooth, t, 0.0, 1.0, 0.1, 0.01, 1.0)
        assert j0_arrival(smooth, t, 0.0, 1.0, params, mu=1.0) == pytest.approx(ref, abs=1e-8)
    # a right arrives almost at once: the value is the one-right table
    w = lattices[1.0].tables[(1, 0)]
    for phi in (0.0, 2.0, 5.0):
        val, _ = j0_arrival_min(w, 0.0, phi, params, mu=1e4)
        assert abs(val - lump10.value(1, phi)) < 1e-2
    with pytest.raises(DomainError):
        j0_arrival(zero, 1.0, 2.0, 0.1, params, mu=1.0)


def test_j_plus_examples(params, lattices):
    zero = const_table(0.0)
    assert j_plus(zero, zero, 0.0, 0.0, 2.0, params, mu=1.0) == 0.0
    lat = lattices[1.0]
    w1, w2 = lat.tables[(1, 1)], lat.tables[(1, 0)]
    for t, y, phi in [(0.0, 0.0, 0.0), (4.0, 0.0, 3.0), (2.0, 1.0, 2.0)]:
        slow = j_plus(w1, w2, t, y, phi, params, mu=1e-8)
        assert slow == pytest.approx(j_e(w1, t, y, phi, params), abs=1e-6)
    lower = replace(w1, values=w1.values - 5.0)
    for t, phi in [(1.0, 0.0), (5.0, 4.0)]:
        assert j_plus(lower, w2, t, 0.0, phi, params, mu=1.0) <= j_plus(w1, w2, t, 0.0, phi, params, mu=1.0)
    with pytest.raises(DomainError):
        j_plus(w1, w2, 1.0, 5.0, 0.0, params, mu=1.0)


def test_j_e_examples(params, lattices):
    w = lattices[1.0].tables[(1, 1)]
    for t, phi in [(0.5, 0.0), (10.0, 3.0), (30.0, 20.0)]:
        assert j_e(w, t, 0.0, phi, params) == pytest.approx(j_op(w.slice0(), t, phi, params), abs=1e-12)
    y, phi = 2.0, math.exp(0.2) * 2.0 - 1.0
    psi = math.exp(-0.1 * y) * (phi + 1) - 1
    assert j_e(w, 0.0, y, phi, params) == pytest.approx(k_bold(w, y, psi, params), abs=1e-12)
    zero = const_table(0.0)
    for y, phi in [(0.0, 0.0), (3.0, 4.0)]:
        val, ts = j_e_min(zero, y, phi, params)
        assert abs(ts - t_star_0(phi, params)) <= 0.1
        assert val == pytest.approx(running_cost(ts, phi, params), abs=1e-12)
        assert val <= running_cost(t_star_0(phi, params), phi, params) + 1e-3


@pytest.mark.parametrize("phi", [0.0, 5.0, 10.0])
def test_j0_convexity_small_odds(params, lattices, phi):
    w = lattices[1.0].tables[(1, 0)]
    tg = np.linspace(0.0, 60.0, 601)
    v = np.array([j0_arrival(w, t, 0.0, phi, params, mu=1.0) for t in tg])
    assert np.min(v[2:] - 2 * v[1:-1] + v[:-2]) > -1e-4


def test_j0_not_convex_at_large_odds(params, lattices):
    # recorded counterexample: starting above lam/c the map bends down first
    w = lattices[1.0].tables[(1, 0)]
    tg = np.linspace(0.0, 5.0, 51)
    v = np.array([j0_arrival(w, t, 0.0, 20.0, params, mu=1.0) for t in tg])
    assert np.min(v[2:] - 2 * v[1:-1] + v[:-2]) < -1e-2


def test_lattice_bounds_and_ordering(params, lattice2):
    t = lattice2.tables
    for tab in t.values():
        assert np.all(tab.values <= TOL) and np.all(tab.values >= -1 / params.c - TOL)
        assert np.all(tab.values[tab.capped] == 0.0)
    for (j, k) in t:
        if (j + 1, k) in t:
            assert np.all(t[(j + 1, k)].values <= t[(j, k)].values + TOL)
        if (j, k + 1) in t:
            assert np.all(t[(j, k)].values <= t[(j, k + 1)].values + TOL)


def test_lattice_reduces_to_lump(params, cont, lattice2):
    lump = solve_lump(params, 2, phibar=cont.phibar)
    for k in range(3):
        diff = np.abs(lattice2.tables[(2, k)].values[0] - lump.tables[2 - k].values)
        assert diff.max() < 1e-2


def test_sandwich_and_rate_monotonicity(lattices):
    prev = None
    for mu in (0.5, 1.0, 2.0, 8.0):
        t = lattices[mu].tables
        lo, mid, hi = t[(1, 0)].values[0], t[(0, 0)].values[0], t[(1, 1)].values[0]
        assert np.all(lo <= mid + TOL) and np.all(mid <= hi + TOL)
        if prev is not None:
            assert np.all(mid <= prev + TOL)
        prev = mid


def test_large_rate_matches_lump(params, cont, lump10):
    lat = solve_arrival(params.with_mu(1e4), 1, phibar=cont.phibar)
    small = lump10.phi_grid <= 10.0
    diff = np.abs(lat.tables[(0, 0)].values[0] - lump10.tables[1].values)
    assert diff[small].max() < 5e-2


def test_gap_bound_consistency(params, cont):
    p = params.with_mu(1.0)
    lats = [solve_arrival(p, n, phibar=cont.phibar) for n in (1, 2, 3)]
    for n, (a, b) in enumerate(zip(lats, lats[1:]), start=1):
        d = b.tables[(0, 0)].values[0] - a.tables[(0, 0)].values[0]
        assert np.all(d <= TOL) and np.all(d >= -infinite_horizon_gap(p, n))


def test_lattice_matches_operators(params, lattices):
    lat = lattices[1.0]
    t = lat.tables
    for phi in t[(1, 0)].psi_grid[[0, 48]]:  # grid nodes, so no interpolation
        val, _ = j_e_min(t[(1, 1)], 0.0, phi, params)
        assert val == pytest.approx(t[(1, 0)](0.0, phi), abs=1e-8)
        # decisions on the row grid versus continuous arrival times
        val0, _ = j0_arrival_min(t[(1, 0)], 0.0, phi, lat.params)
        assert abs(val0 - t[(0, 0)](0.0, phi)) < 0.05


def test_heuristic_against_exact(params, cont, lattices):
    exact = solve_arrival(params.with_mu(1.0), 1, phibar=cont.phibar, mode="exact")
    heur = lattices[1.0]
    assert exact.violations == []
    for key, tab in exact.tables.items():
        h = heur.tables[key]
        assert np.array_equal(tab.values[0], h.values[0])
        assert np.all(tab.values <= h.values + TOL)
    for v in heur.violations:
        assert set(v) == {"table", "cells", "max_gap", "worst_y", "worst_psi"}
        assert v["cells"] > 0 and v["max_gap"] > 0
    assert heur.diagnostics["violation_cells"] == sum(v["cells"] for v in heur.violations)


def test_action_tables(lattices):
    lat = lattices[1.0]
    for (j, k), tab in lat.tables.items():
        assert np.all(tab.action_time >= tab.s_grid[:, None] - 1e-12)
        kinds = set(np.unique(tab.action_kind))
        assert kinds <= {STOP, OBSERVE}
        if j == k:
            assert kinds == {STOP}
    assert set(lat.stop_times) == {(0, 0), (1, 1)}
    assert set(lat.observe_times) == {(1, 0)}


def test_bad_input(params):
    with pytest.raises(ConfigError):
        solve_arrival(params.with_mu(1.0), 0, phibar=50.0)
    with pytest.raises(ConfigError):
        solve_arrival(params.with_mu(1.0), 1, phibar=50.0, mode="greedy")
    with pytest.raises(DomainError):
        solve_arrival(params, 1, phibar=50.0)


def test_export(lattices, tmp_path):
    files = io.export_arrival(lattices[1.0], tmp_path, y_stride=10)
    assert sorted(files) == ["arrival_j0_k0.csv", "arrival_j1_k0.csv", "arrival_j1_k1.csv"]
    data = io.read_csv(tmp_path / "arrival_j1_k0.csv")
    assert list(data) == ["y", "phi", "value", "action_time", "action_kind"]
    assert set(data["action_kind"]) <= {"stop", "observe"}
