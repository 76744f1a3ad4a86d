import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rescross.kepler import (GAUSS_K, KeplerianElements, DelaunayElements, Orbit, ResonanceSpec,
                             ResonantState, cartesian_state, delaunay_to_keplerian, delaunay_to_resonant,
                             elements_from_state, keplerian_to_delaunay, resonant_to_delaunay,
                             solve_kepler, state_from_elements)

elements = st.builds(
    KeplerianElements,
    a=st.floats(0.3, 40.0), e=st.floats(0.0, 0.95), I=st.floats(0.0, math.pi),
    Omega=st.floats(0, 2 * math.pi), omega=st.floats(0, 2 * math.pi), ell=st.floats(0, 2 * math.pi))


# -- Kepler's equation -------------------------------------------------------

def test_kepler_circular_identity():
    assert solve_kepler(0.0, 1.3) == pytest.approx(1.3, abs=1e-15)


def test_kepler_frozen_values():
    # 50-digit bisection on E - e sin E = M
    assert float(solve_kepler(0.2, math.pi / 2)) == pytest.approx(1.7669606079827387, abs=1e-14)
    assert float(solve_kepler(0.9, 0.05)) == pytest.approx(0.4027779386737874, abs=1e-14)


def test_kepler_residual_million(rng):
    e = rng.uniform(0, 0.99, 10**6)
    M = rng.uniform(-20, 20, 10**6)
    E = solve_kepler(e, M)
    assert np.max(np.abs(E - e * np.sin(E) - M)) < 1e-13
    # same 2pi branch as M
    assert np.all(np.abs(E - M) <= math.pi + 1e-12)


def test_kepler_rejects_hyperbolic():
    with pytest.raises(ValueError):
        solve_kepler(1.0, 0.3)


@given(st.floats(0, 0.999), st.floats(-100, 100))
def test_kepler_residual_property(e, M):
    E = float(solve_kepler(e, M))
    assert abs(E - e * math.sin(E) - M) < 1e-13 * max(1.0, abs(M))


# -- Cartesian embedding -----------------------------------------------------

def test_circular_epoch_at_node():
    X, _ = cartesian_state(KeplerianElements(1.0, 0.0, 0.0, 0.0, 0.0, 0.0))
    assert np.allclose(X, [1, 0, 0], atol=1e-15)


def test_perihelion_radius():
    X, _ = cartesian_state(KeplerianElements(2.0, 0.5, 0.4, 1.0, 2.0, 0.0))
    assert np.linalg.norm(X) == pytest.approx(1.0, rel=1e-14)


@given(elements)
def test_tangent_matches_fd(E):
    h = 1e-6
    _, tau = cartesian_state(E)
    Xp, _ = cartesian_state(E, E.ell + h)
    Xm, _ = cartesian_state(E, E.ell - h)
    assert np.max(np.abs(tau - (Xp - Xm) / (2 * h))) < 1e-8 * max(1.0, E.a)


@given(elements)
def test_radius_formula(E):
    X, _ = cartesian_state(E)
    Ecc = float(solve_kepler(E.e, E.ell))
    assert np.linalg.norm(X) == pytest.approx(E.a * (1 - E.e * math.cos(Ecc)), rel=1e-12)


@given(elements)
def test_state_elements_round_trip(E):
    if E.e < 1e-3 or math.sin(E.I) < 1e-3:
        return  # angles undefined
    r, v = state_from_elements(E)
    back = elements_from_state(r, v)
    assert back.a == pytest.approx(E.a, rel=1e-10)
    assert back.e == pytest.approx(E.e, abs=1e-10)
    for x, y in [(back.I, E.I), (back.Omega, E.Omega), (back.omega, E.omega), (back.ell, E.ell)]:
        assert abs(math.remainder(x - y, 2 * math.pi)) < 1e-7


# -- Delaunay and resonant charts ---------------------------------------------

def test_delaunay_simple_values():
    D = keplerian_to_delaunay(KeplerianElements(1.0, 0.3, 0.0, 0, 0, 0))
    assert D.L == pytest.approx(GAUSS_K, rel=1e-15)
    assert D.Z == pytest.approx(D.G, rel=1e-15)


@given(elements)
def test_delaunay_round_trip(E):
    D = keplerian_to_delaunay(E)
    back = keplerian_to_delaunay(delaunay_to_keplerian(D))
    for x, y in [(back.L, D.L), (back.G, D.G)]:
        assert x == pytest.approx(y, rel=1e-12)
    assert back.Z == pytest.approx(D.Z, rel=1e-12, abs=1e-12 * D.G)
    for x, y in [(back.ell, D.ell), (back.g, D.g), (back.z, D.z)]:
        assert abs(math.remainder(x - y, 2 * math.pi)) < 1e-12


@given(elements)
def test_keplerian_round_trip(E):
    back = delaunay_to_keplerian(keplerian_to_delaunay(E))
    assert back.a == pytest.approx(E.a, rel=1e-12)
    # e = sqrt(1 - G^2/L^2) carries an absolute error of order eps / e
    assert abs(back.e - E.e) < 1e-12 + 1e-15 / max(E.e, 1e-300)


def test_delaunay_inverse_rejects_invalid():
    with pytest.raises(ValueError):
        delaunay_to_keplerian(DelaunayElements(L=0.01, G=0.02, Z=0.0, ell=0, g=0, z=0))
    with pytest.raises(ValueError):
        delaunay_to_keplerian(DelaunayElements(L=0.02, G=0.01, Z=0.015, ell=0, g=0, z=0))


def test_resonant_simple_values():
    spec = ResonanceSpec(3, -1)
    D = DelaunayElements(L=3 * GAUSS_K, G=2 * GAUSS_K, Z=GAUSS_K, ell=0.0, g=0.1, z=0.2)
    R = delaunay_to_resonant(D, 0.0, spec)
    assert R.S == pytest.approx(GAUSS_K, rel=1e-15)
    assert R.sigma == 0.0


@given(elements, st.floats(0, 2 * math.pi), st.sampled_from([(1, -3), (8, -5), (3, -1), (2, -1)]))
def test_resonant_round_trip(E, ell5, hv):
    spec = ResonanceSpec(*hv)
    D = keplerian_to_delaunay(E)
    R = delaunay_to_resonant(D, ell5, spec)
    back = resonant_to_delaunay(R, ell5, spec, ell_ref=D.ell)
    assert back.L == pytest.approx(D.L, rel=1e-14)
    assert abs(math.remainder(back.ell - D.ell, 2 * math.pi)) < 1e-13
    assert (back.G, back.Z, back.g, back.z) == (D.G, D.Z, D.g, D.z)


def test_resonant_pairing():
    """Poisson brackets {sigma, S} = 1 and {sigma, S5} = 0 from the numerical Jacobian."""
    for h, h5 in [(1, -3), (8, -5), (3, -1)]:
        spec = ResonanceSpec(h, h5)
        x0 = np.array([0.7, 1.9, 0.03, 0.025])  # l, l5, L, L5

        def f(x):
            D = DelaunayElements(L=x[2], G=0.02, Z=0.01, ell=x[0], g=0.0, z=0.0)
            R = delaunay_to_resonant(D, x[1], spec, L5=x[3])
            return np.array([h * x[0] + h5 * x[1], R.S, R.S5])  # sigma unreduced

        J = np.empty((3, 4))
        for i in range(4):
            dx = np.zeros(4)
            dx[i] = 0.5  # the map is linear, so wide differences are exact
            J[:, i] = (f(x0 + dx) - f(x0 - dx)) / 1.0
        sig, S, S5 = J

        def bracket(u, w):
            return u[0] * w[2] + u[1] * w[3] - u[2] * w[0] - u[3] * w[1]
        assert bracket(sig, S) == pytest.approx(1.0, abs=1e-12)
        assert abs(bracket(sig, S5)) < 1e-12


def test_resonance_spec_validation():
    with pytest.raises(ValueError):
        ResonanceSpec(0, 0)
    with pytest.raises(ValueError):
        ResonanceSpec(2, -4)


def test_resonant_state_array_round_trip():
    R = ResonantState(0.1, 0.09, 0.05, 1.0, 2.0, 3.0, S5=0.4)
    assert ResonantState.from_array(R.to_array(), R.S5) == R


def test_action_partials_match_fd():
    o = Orbit(2.2, 0.3, 0.4, 1.0, 2.0)
    ell = np.array([0.3, 2.5])
    X, dX = o.action_partials(ell)
    D = keplerian_to_delaunay(KeplerianElements(2.2, 0.3, 0.4, 1.0, 2.0))
    y = np.array([D.L, D.G, D.Z, D.g, D.z])
    for i in range(5):
        h = 1e-7 * max(abs(y[i]), 1e-3)
        out = []
        for s in (1, -1):
            yy = y.copy()
            yy[i] += s * h
            E = delaunay_to_keplerian(DelaunayElements(L=yy[0], G=yy[1], Z=yy[2], ell=0, g=yy[3], z=yy[4]))
            out.append(Orbit.from_elements(E).position(ell))
        fd = (out[0] - out[1]) / (2 * h)
        assert np.allclose(dX[i], fd, rtol=1e-5, atol=1e-6 * np.abs(dX[i]).max())
