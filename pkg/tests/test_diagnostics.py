import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rescross.diagnostics import (UnimodularChart, coefficients_one, coefficients_two, collision_bound,
                                  extended_gcd, jump_delta_scan, k_partial, kbar, kbar_fourier, partial_sum,
                                  torus_average)
from rescross.errors import Divergent
from rescross.geometry import TwoOrbitConfig, local_minima
from rescross.kepler import KeplerianElements, Orbit
from test_geometry import crossing_config

TWO_PI = 2 * math.pi
CHART = UnimodularChart.from_resonance(1, -3)


def separated_config():
    return TwoOrbitConfig(KeplerianElements(2.5, 0.3, 0.2, 0.7, 1.9), KeplerianElements(5.2, 0.05, 0.02, 1.7, 4.0))


def symmetric_config():
    return TwoOrbitConfig(KeplerianElements(2.5, 0.3, 0.2, 0.0, 0.0), KeplerianElements(5.2, 0.05, 0.0, 0.0, 0.0))


# -- chart -----------------------------------------------------------------------------

def test_earth_resonance_chart():
    ch = UnimodularChart.from_resonance(8, -5)
    assert ch.U[0] == (8, -5)
    assert round(np.linalg.det(ch.matrix)) == 1
    V = np.array([[0.3, 1.7], [2.0, -4.0]])
    assert np.allclose(ch.from_chart(ch.to_chart(V)), V, atol=1e-14)
    assert np.allclose(ch.inverse @ ch.matrix, np.eye(2))


def test_chart_rejects_bad_input():
    with pytest.raises(ValueError):
        UnimodularChart.from_resonance(2, -4)
    with pytest.raises(ValueError):
        UnimodularChart(((1, 0), (0, 2)))


@given(st.integers(-500, 500), st.integers(-500, 500))
def test_extended_gcd(a, b):
    g, x, y = extended_gcd(a, b)
    assert g == math.gcd(a, b)
    assert a * x + b * y == g


# -- kbar ----------------------------------------------------------------------------------

def kbar_brute(cfg, chart, sigma, n=4096):
    tau = np.arange(n) * TWO_PI / n
    V = chart.from_chart(np.stack([np.full(n, sigma), tau], axis=-1))
    X = Orbit.from_elements(cfg.asteroid).position(V[:, 0])
    P = Orbit.from_elements(cfg.planet).position(V[:, 1])
    return np.mean(1 / np.linalg.norm(X - P, axis=-1))


def test_kbar_against_fine_trapezoid():
    cfg = separated_config()
    for s in (0.0, 1.3, 4.4):
        assert kbar(s, cfg, CHART) == pytest.approx(kbar_brute(cfg, CHART, s), rel=1e-12)


def test_kbar_mean_is_torus_average():
    cfg = crossing_config()
    c = kbar_fourier(cfg, CHART, 0)
    assert c[0].real == pytest.approx(torus_average(cfg), rel=1e-9)


def test_kbar_symmetry():
    cfg = symmetric_config()
    s = np.array([0.4, 1.1, 2.9])
    assert np.allclose(kbar(s, cfg, CHART), kbar(-s, cfg, CHART), rtol=1e-12)


def test_kbar_diverges_towards_collision_angle():
    cfg = crossing_config()
    mp = min(local_minima(cfg), key=lambda m: m.d)
    sc = float(np.mod(mp.V[0] - 3 * mp.V[1], TWO_PI))
    for sgn in (1, -1):
        vals = [kbar(sc + sgn * 2.0**-k, cfg, CHART) for k in range(3, 11)]
        assert np.all(np.diff(vals) > 0)
    with pytest.raises(Divergent):
        kbar(sc, cfg, CHART)


def test_collision_bound_holds(rng):
    cfg = crossing_config()
    for mp in local_minima(cfg):
        Z = rng.normal(size=(500, 2))
        lhs, rhs = collision_bound(mp, CHART, Z)
        assert np.all(lhs >= rhs * (1 - 1e-12))


# -- procedures ----------------------------------------------------------------------------

def test_procedures_agree_separated():
    cfg = separated_config()
    c1 = coefficients_one(cfg, CHART, 6)
    c2 = coefficients_two(cfg, CHART, 6)
    assert np.abs(c1 - c2).max() < 1e-10
    s = np.linspace(0, TWO_PI, 13)
    for N in range(7):
        assert np.allclose(partial_sum(c1, s, N), partial_sum(c2, s, N), rtol=0, atol=1e-10)


def test_partial_sum_needs_enough_coefficients():
    with pytest.raises(ValueError):
        partial_sum(np.zeros(3, complex), 0.0, 3)


def test_k_partial_validation():
    cfg = separated_config()
    with pytest.raises(ValueError):
        k_partial(0.0, cfg, CHART, -1)
    with pytest.raises(ValueError):
        k_partial(0.0, cfg, CHART, 1, procedure="III")
    assert k_partial(0.5, cfg, CHART, 2, "I") == pytest.approx(k_partial(0.5, cfg, CHART, 2, "II"), rel=1e-10)


# -- jump profiles ---------------------------------------------------------------------------

def test_delta_scan_weak_limit():
    cfg = crossing_config()
    mp = min(local_minima(cfg), key=lambda m: m.d)
    Ns = [1, 4, 16, 32, 64]

    def bump(s):
        return np.exp(-(np.mod(s - sc + math.pi, TWO_PI) - math.pi) ** 2 / 0.5)

    def away(s):
        x = np.mod(s - sc + math.pi, TWO_PI) - math.pi
        return np.where(np.abs(x) > 1.0, np.sin(x) ** 2 * (np.abs(x) - 1.0) ** 3, 0.0)

    sc = float(np.mod(mp.V[0] - 3 * mp.V[1], TWO_PI))
    scan = jump_delta_scan(cfg, 1, Ns, CHART, {"one": lambda s: np.ones_like(s), "bump": bump, "away": away},
                           minimum=mp)
    assert scan.sigma_c == pytest.approx(sc)
    assert np.allclose(scan.integrals["one"], scan.factor, rtol=1e-12)
    assert abs(scan.integrals["bump"][Ns.index(32)] / scan.factor - 1) < 0.05
    aw = np.abs(scan.integrals["away"])
    assert aw[-1] < 0.01 * aw[0] and aw[-1] < 1e-3 * abs(scan.factor)
