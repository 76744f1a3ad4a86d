import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import grid_squared_distance, polished_grid_minima, random_elements, torus_distance
from rescross.errors import DegenerateConfig, SmoothingFails
from rescross.geometry import (TwoOrbitConfig, _build_point, a_matrix, critical_points, crossing_orbit,
                               delta_h, displaced_minima, geometry_gradients, local_minima, min_distance,
                               refine_minimum, signed_distance)
from rescross.kepler import KeplerianElements, Orbit, elements_from_state, state_from_elements

PLANET = KeplerianElements(a=1.0, e=0.0, I=0.0, Omega=0.0, omega=0.0)


def crossing_config(e=0.4, I=0.3, ell_p=1.2, f0=1.0, planet=None):
    planet = planet or KeplerianElements(1.52, 0.09, 0.03, 0.86, 5.0)
    ast = crossing_orbit(planet, ell_p, e, I, f0)
    return TwoOrbitConfig(ast, planet, 3e-7)


def crossing_minimum(cfg):
    return min(local_minima(cfg), key=lambda m: m.d)


# -- critical points ------------------------------------------------------------

def test_concentric_coplanar_circles_degenerate():
    cfg = TwoOrbitConfig(KeplerianElements(1.0, 0.0, 0.0, 0, 0), KeplerianElements(2.0, 0.0, 0.0, 0, 0))
    with pytest.raises(DegenerateConfig):
        critical_points(cfg)


def test_inclined_circles_minima_at_nodes():
    cfg = TwoOrbitConfig(KeplerianElements(1.0, 0.0, math.radians(30), 0, 0), KeplerianElements(2.0, 0.0, 0.0, 0, 0))
    mins = local_minima(cfg)
    assert len(mins) == 2
    Vs = sorted(tuple(m.V) for m in mins)
    assert np.allclose(Vs[0], [0, 0], atol=1e-9) or np.allclose(torus_distance(Vs[0], [0, 0]), 0, atol=1e-9)
    assert np.allclose(torus_distance(Vs[1], [math.pi, math.pi]), 0, atol=1e-9)
    for m in mins:
        assert m.d == pytest.approx(1.0, abs=1e-12)
    # brute-force argmin on a 2048 x 2048 grid
    D2, ell = grid_squared_distance(cfg, 2048)
    i, j = np.unravel_index(np.argmin(D2), D2.shape)
    cell = 2 * math.pi / 2048
    best = min(np.max(torus_distance(m.V, [ell[i], ell[j]])) for m in mins)
    assert best <= cell


def test_crossing_pair_has_zero_minimum():
    cfg = crossing_config()
    mins = local_minima(cfg)
    assert sum(m.d < 1e-8 for m in mins) == 1


def test_critical_point_properties(rng):
    for _ in range(10):
        cfg = TwoOrbitConfig(random_elements(rng), random_elements(rng, e=(0, 0.3), I=(0, 0.3)))
        pts = critical_points(cfg)
        counts = [sum(p.morse_index == m for p in pts) for m in (0, 1, 2)]
        assert counts[0] - counts[1] + counts[2] == 0
        for p in pts:
            # gradient of d^2 in mean anomalies vanishes
            X, tau, _ = cfg.orbit.mean_derivs(p.V[0])
            P, taup, _ = cfg.planet_orbit.mean_derivs(p.V[1])
            D = P - X
            grad = 2 * np.array([-(D @ tau), D @ taup])
            assert np.max(np.abs(grad)) < 1e-10 * max(1.0, cfg.asteroid.a * cfg.planet.a)
            if p.morse_index == 0 and p.d > 0:
                assert abs(p.tau @ p.Delta) < 1e-9 * p.d * np.linalg.norm(p.tau)
                assert abs(p.tau_prime @ p.Delta) < 1e-9 * p.d * np.linalg.norm(p.tau_prime)
                assert abs(p.d_tilde) == p.d
                if p.nondegenerate:
                    assert np.all(np.linalg.eigvalsh(p.A) > 0)


def test_grid_completeness_few_configs(rng):
    cell = 2 * math.pi / 1024
    for _ in range(5):
        cfg = TwoOrbitConfig(random_elements(rng), random_elements(rng, e=(0, 0.3), I=(0, 0.3)))
        mins = local_minima(cfg)
        ref, raw = polished_grid_minima(cfg, 1024)
        assert len(ref) == len(mins)
        for m in mins:
            assert min(np.max(torus_distance(x, m.V)) for x in ref) < 1e-5
            # the grid sees every reported minimum within one cell
            assert np.min(np.max(torus_distance(raw, m.V), axis=1)) <= cell


def test_minima_sorted_and_deterministic():
    cfg = crossing_config()
    a = critical_points(cfg)
    b = critical_points(cfg)
    assert [tuple(p.V) for p in a] == [tuple(p.V) for p in b]
    d = [p.d for p in a if p.morse_index == 0]
    assert d == sorted(d)


# -- signed distance ------------------------------------------------------------

def test_signed_distance_zero_at_crossing():
    cfg = crossing_config()
    mp = crossing_minimum(cfg)
    assert abs(signed_distance(cfg, mp)) < 1e-8


def test_signed_distance_smooth_through_crossing():
    cfg0 = crossing_config()
    mp0 = crossing_minimum(cfg0)
    s = np.linspace(-2e-3, 2e-3, 41)
    dt, d = [], []
    for x in s:
        cfg = cfg0.with_asteroid(cfg0.asteroid.replace(Omega=cfg0.asteroid.Omega + x))
        mp = refine_minimum(cfg, mp0.V)
        dt.append(mp.d_tilde)
        d.append(mp.d)
    dt, d = np.array(dt), np.array(d)
    assert dt[0] * dt[-1] < 0
    h = s[1] - s[0]
    second_dt = np.max(np.abs(np.diff(dt, 2))) / h**2
    second_d = np.max(np.abs(np.diff(d, 2))) / h**2
    # |d| has a kink (second difference of order slope / h), d_tilde does not
    slope = abs(dt[-1] - dt[0]) / (s[-1] - s[0])
    assert second_d > 0.5 * slope / h
    assert second_dt < 1e-3 * slope / h


def test_signed_distance_mirror():
    planet = KeplerianElements(1.3, 0.1, 0.0, 0.0, 0.4)
    ast = KeplerianElements(1.6, 0.35, 0.5, 0.7, 1.9)
    cfg = TwoOrbitConfig(ast, planet)
    r, v = state_from_elements(ast)
    mirror = elements_from_state(r * [1, 1, -1], v * [1, 1, -1])
    cfg_m = TwoOrbitConfig(mirror, planet)
    a = sorted(local_minima(cfg), key=lambda m: m.d)
    b = sorted(local_minima(cfg_m), key=lambda m: m.d)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert y.d == pytest.approx(x.d, rel=1e-9)
        assert y.d_tilde == pytest.approx(-x.d_tilde, rel=1e-9)


def test_parallel_tangents_smoothing_fails():
    # ellipse touching the unit circle at perihelion, in the same plane
    cfg = TwoOrbitConfig(KeplerianElements(2.0, 0.5, 0.0, 0.0, 0.0), PLANET)
    mp = _build_point(cfg.orbit, cfg.planet_orbit, 0.0, 0.0)
    with pytest.raises(SmoothingFails):
        signed_distance(cfg, mp)
    # the quadratic form is flagged degenerate
    assert not mp.nondegenerate
    assert abs(mp.det_A) < 1e-12 * np.trace(mp.A) ** 2


# -- A matrix and approximated distance ---------------------------------------------

def test_a_matrix_is_half_hessian():
    for cfg in (crossing_config(), TwoOrbitConfig(KeplerianElements(2.2, 0.3, 0.4, 1, 2), PLANET)):
        for mp in local_minima(cfg):
            h = 1e-5
            f = cfg.squared_distance
            l, lp = mp.V
            H = np.empty((2, 2))
            H[0, 0] = (f(l + h, lp) - 2 * f(l, lp) + f(l - h, lp)) / h**2
            H[1, 1] = (f(l, lp + h) - 2 * f(l, lp) + f(l, lp - h)) / h**2
            H[0, 1] = H[1, 0] = (f(l + h, lp + h) - f(l + h, lp - h) - f(l - h, lp + h) + f(l - h, lp - h)) / (4 * h * h)
            assert np.allclose(a_matrix(cfg, mp), 0.5 * H, atol=1e-6)


def test_orthogonal_crossing_off_diagonal_zero():
    ast = KeplerianElements(1.0, 0.0, math.pi / 2, 0.0, 0.0)
    cfg = TwoOrbitConfig(ast, PLANET)
    mp = refine_minimum(cfg, [0.01, -0.01])
    assert mp.d < 1e-12
    assert abs(mp.A[0, 1]) < 1e-14


def test_delta_at_minimum_and_eigen_direction():
    cfg = crossing_config()
    mp = crossing_minimum(cfg)
    assert delta_h(cfg, mp, mp.V) == pytest.approx(mp.d, abs=1e-15)
    lam, U = np.linalg.eigh(mp.A)
    for k in range(2):
        u = 0.01 * U[:, k]
        assert delta_h(cfg, mp, mp.V + u) == pytest.approx(math.hypot(mp.d, math.sqrt(lam[k]) * 0.01), rel=1e-12)


def test_delta_rejects_saddle():
    cfg = crossing_config()
    saddle = next(p for p in critical_points(cfg) if p.morse_index == 1)
    with pytest.raises(DegenerateConfig):
        delta_h(cfg, saddle, saddle.V)


def test_taylor_remainder_cubic():
    cfg = crossing_config()
    mp = crossing_minimum(cfg)
    rng = np.random.default_rng(3)
    consts = []
    for r in (0.04, 0.02, 0.01):
        W = rng.normal(size=(200, 2))
        W *= r / np.linalg.norm(W, axis=1)[:, None]
        V = mp.V + W
        err = np.abs(delta_h(cfg, mp, V) ** 2 - cfg.squared_distance(V[:, 0], V[:, 1]))
        consts.append(np.max(err) / r**3)
    assert consts[-1] < 1.5 * consts[0] and consts[-1] > consts[0] / 1.5


def test_sandwich_estimates():
    cfg = crossing_config()
    mp = crossing_minimum(cfg)
    lam = np.linalg.eigvalsh(mp.A)
    rng = np.random.default_rng(5)
    ratios = {}
    for r in (0.2, 0.1):
        W = rng.uniform(-r, r, size=(2000, 2))
        V = mp.V + W
        q = delta_h(cfg, mp, V) ** 2 - mp.d**2
        n2 = np.sum(W * W, axis=1)
        assert np.all(lam[0] * n2 <= q * (1 + 1e-12)) and np.all(q <= lam[1] * n2 * (1 + 1e-12))
        rho = cfg.squared_distance(V[:, 0], V[:, 1]) / delta_h(cfg, mp, V) ** 2
        ratios[r] = (rho.min(), rho.max())
    # fitted c1, c2 stay bounded away from 0 and infinity as the neighbourhood shrinks
    for lo, hi in ratios.values():
        assert lo > 0.5 and hi < 2.0
    assert ratios[0.1][0] >= ratios[0.2][0] - 1e-9


# -- gradients -----------------------------------------------------------------------

def test_gradient_symmetry_rotation_invariant():
    # a circular planet in the reference plane makes everything independent of z
    cfg = TwoOrbitConfig(KeplerianElements(1.8, 0.4, 0.6, 1.0, 2.0), PLANET)
    for mp in local_minima(cfg):
        gg = geometry_gradients(cfg, mp)
        assert abs(gg.d_tilde[4]) < 1e-7
        assert abs(gg.inv_sqrt_det[4]) < 1e-7 * max(1.0, abs(1 / math.sqrt(mp.det_A)))


def test_gradient_matches_fourth_order():
    cfg = crossing_config()
    mp = crossing_minimum(cfg)
    second = geometry_gradients(cfg, mp)
    fourth = geometry_gradients(cfg, mp, displaced=displaced_minima(cfg, mp, rel_step=1e-4))
    assert np.allclose(second.d_tilde, fourth.d_tilde, rtol=1e-6, atol=1e-6 * np.max(np.abs(fourth.d_tilde)))


def test_anomaly_gradient_bounded_near_crossing():
    cfg0 = crossing_config()
    mp0 = crossing_minimum(cfg0)
    norms = []
    for x in np.linspace(-0.02, 0.02, 9):
        cfg = cfg0.with_asteroid(cfg0.asteroid.replace(Omega=cfg0.asteroid.Omega + x))
        mp = refine_minimum(cfg, mp0.V)
        norms.append(np.max(np.abs(geometry_gradients(cfg, mp).V)))
    assert max(norms) < 3 * min(norms)


# -- minimum distance ------------------------------------------------------------------

def test_min_distance_picks_closer_node():
    # nodes at perihelion r = 0.9 and aphelion r = 1.3 of a steep orbit
    ast = KeplerianElements(a=1.1, e=0.2 / 1.1, I=1.2, Omega=0.0, omega=0.0)
    cfg = TwoOrbitConfig(ast, PLANET)
    d, dt, h = min_distance(cfg)
    mins = local_minima(cfg)
    assert len(mins) == 2
    assert d == pytest.approx(0.1, abs=2e-3)
    others = [m.d for i, m in enumerate(mins) if i != h]
    assert others[0] == pytest.approx(0.3, abs=2e-2)
    D2, _ = grid_squared_distance(cfg, 1024)
    assert d == pytest.approx(math.sqrt(D2.min()), rel=1e-4)


def test_min_distance_crossing():
    d, dt, _ = min_distance(crossing_config())
    assert d < 1e-8 and abs(dt) < 1e-8


@given(st.floats(-0.01, 0.01))
def test_d_tilde_min_continuous_along_family(x):
    cfg0 = crossing_config()
    mp0 = crossing_minimum(cfg0)
    vals = []
    for step in (1e-4, 1e-5):
        c1 = cfg0.with_asteroid(cfg0.asteroid.replace(Omega=cfg0.asteroid.Omega + x))
        c2 = cfg0.with_asteroid(cfg0.asteroid.replace(Omega=cfg0.asteroid.Omega + x + step))
        vals.append(abs(refine_minimum(c2, mp0.V).d_tilde - refine_minimum(c1, mp0.V).d_tilde))
    assert vals[1] < 0.2 * vals[0] + 1e-14


def test_orbit_positions_consistent_with_config():
    cfg = crossing_config()
    mp = crossing_minimum(cfg)
    X = Orbit.from_elements(cfg.asteroid).position(np.array(mp.V[0]))
    P = Orbit.from_elements(cfg.planet).position(np.array(mp.V[1]))
    assert np.allclose(P - X, mp.Delta, atol=1e-14)
