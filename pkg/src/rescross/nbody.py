"""Restricted N-body reference integration and the phase-shift ensemble.

The asteroid is massless and moves under the Sun and the planets, whose
heliocentric positions come from an ephemeris source. Several initial
conditions can be integrated together as one vectorised system (members
differ only in the phases of the asteroid and the planets).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import Collision, NumericalFailure
from .kepler import (GAUSS_K, TWO_PI, KeplerianElements, Orbit, ResonanceSpec, elements_from_state,
                     state_from_elements)

COLLISION_DISTANCE = 1e-8  # au


def full_rhs(r, v, t, planets, ephemeris, k=GAUSS_K, phase_shift=0.0):
    """Velocity and heliocentric acceleration of a massless body.

    ``planets`` are ephemeris indices; ``phase_shift`` is added to every
    planet mean anomaly (scalar, or one value per body when ``r`` has a
    leading member axis).
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    k2 = k * k
    rn = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(rn < COLLISION_DISTANCE):
        raise Collision(f"asteroid within {COLLISION_DISTANCE} au of the Sun at t = {t}")
    acc = -k2 * r / rn**3
    shift = np.asarray(phase_shift, dtype=float)
    if r.ndim == 1 and shift.ndim:
        raise ValueError("per-member phase shifts need a member axis on r")
    for j in planets:
        E = ephemeris.elements(j, t)
        ell = ephemeris.unwrapped_anomaly(j, t) + shift
        rj = Orbit.from_elements(E).position(np.asarray(ell))
        rj = np.broadcast_to(rj, r.shape)
        diff = rj - r
        dn = np.linalg.norm(diff, axis=-1, keepdims=True)
        if np.any(dn < COLLISION_DISTANCE):
            raise Collision(f"asteroid within {COLLISION_DISTANCE} au of {ephemeris.planets[j]} at t = {t}")
        rjn = np.linalg.norm(rj, axis=-1, keepdims=True)
        acc = acc + k2 * ephemeris.mu[j] * (diff / dn**3 - rj / rjn**3)
    return v, acc


@dataclass
class FullTrajectory:
    """Output of :func:`integrate_full`; arrays have a leading member axis.

    ``elements`` columns are ``(a, e, I, Omega, omega, ell)``; node and
    perihelion are unwrapped in time. ``sigma`` is the resonant angle (unwrapped) when a
    resonance was given.
    """

    t: np.ndarray
    r: np.ndarray
    v: np.ndarray
    elements: np.ndarray
    sigma: np.ndarray | None
    nfev: int = 0

    def member(self, m):
        return FullTrajectory(self.t, self.r[m], self.v[m], self.elements[m],
                              None if self.sigma is None else self.sigma[m], self.nfev)


def osculating_series(r, v, k=GAUSS_K):
    """``(a, e, I, Omega, omega, ell)`` along a sampled path.

    ``Omega`` and ``omega`` are unwrapped in time; ``ell`` stays in [0, 2pi)
    since output grids are usually too coarse to follow it.
    """
    out = np.array([elements_from_state(ri, vi, k).as_tuple() for ri, vi in zip(r, v)])
    out[:, 3:5] = np.unwrap(out[:, 3:5], axis=0)
    return out


def integrate_full(r0, v0, t0, t1, ephemeris, planets=None, tol=1e-10, t_out=None, k=GAUSS_K,
                   phase_shift=0.0, spec: ResonanceSpec | None = None, resonant=None,
                   method="DOP853"):
    """Integrate one or several asteroids from ``t0`` to ``t1`` (days).

    ``r0``, ``v0`` are ``(3,)`` or ``(m, 3)``; members share the output grid
    ``t_out`` (default: 101 uniform points). With ``spec`` and ``resonant``
    the angle ``sigma = h l + h' l'`` is emitted, built from the osculating
    asteroid anomaly and the (shifted) planet anomaly.
    """
    r0 = np.atleast_2d(np.asarray(r0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    m = r0.shape[0]
    if planets is None:
        planets = list(range(len(ephemeris.planets)))
    planets = [ephemeris.index(p) if isinstance(p, str) else int(p) for p in planets]
    shift = np.array(np.broadcast_to(np.asarray(phase_shift, dtype=float), (m,)))
    if t_out is None:
        t_out = np.linspace(t0, t1, 101)
    t_out = np.asarray(t_out, dtype=float)

    def rhs(t, u):
        U = u.reshape(m, 6)
        vel, acc = full_rhs(U[:, :3], U[:, 3:], t, planets, ephemeris, k, shift)
        return np.concatenate([vel, acc], axis=1).ravel()

    u0 = np.concatenate([r0, v0], axis=1).ravel()
    sol = solve_ivp(rhs, (t0, t1), u0, method=method, rtol=tol, atol=tol * 1e-3, t_eval=t_out)
    if sol.status != 0:
        raise NumericalFailure(f"full integration failed: {sol.message}")
    U = sol.y.T.reshape(len(t_out), m, 6).transpose(1, 0, 2)
    r, v = U[:, :, :3], U[:, :, 3:]
    els = np.array([osculating_series(r[i], v[i], k) for i in range(m)])
    sigma = None
    if spec is not None and resonant is not None:
        j = ephemeris.index(resonant) if isinstance(resonant, str) else int(resonant)
        ell5 = np.array([ephemeris.unwrapped_anomaly(j, t) for t in t_out])[None, :] + shift[:, None]
        sigma = spec.h_ast * els[:, :, 5] + spec.h_pl * ell5
        sigma = np.unwrap(sigma, axis=1)
    return FullTrajectory(t=t_out, r=r, v=v, elements=els, sigma=sigma, nfev=sol.nfev)


# --------------------------------------------------------------------------
# Ensemble protocol
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSpec:
    """``count`` members with planet phases shifted by ``k * phase_step``."""

    resonance: ResonanceSpec
    count: int = 64
    phase_step: float = math.pi / 64

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("ensemble count must be at least 1")
        if self.resonance.h_ast == 0:
            raise ValueError("ensemble phases need h_ast != 0")


@dataclass(frozen=True)
class EnsembleMember:
    index: int
    planet_shift: float
    asteroid: KeplerianElements


def ensemble_shifts(base: KeplerianElements, spec: EnsembleSpec):
    """Initial conditions keeping ``h l + h' l'`` fixed while phases move.

    Member ``k`` shifts every planet anomaly by ``k * phase_step`` and the
    asteroid anomaly by ``-(h'/h) k * phase_step``.
    """
    h, h5 = spec.resonance.h_ast, spec.resonance.h_pl
    out = []
    for i in range(spec.count):
        dp = i * spec.phase_step
        dl = -(h5 / h) * dp
        out.append(EnsembleMember(index=i, planet_shift=dp, asteroid=base.replace(ell=base.ell + dl)))
    return out


def resonant_phase_defect(base: KeplerianElements, member: EnsembleMember, spec: ResonanceSpec,
                          ell5: float = 0.0):
    """``h l(k) + h' l'(k) - (h l + h' l')`` reduced to (-pi, pi]."""
    x = (spec.h_ast * member.asteroid.ell + spec.h_pl * (ell5 + member.planet_shift)
         - (spec.h_ast * base.ell + spec.h_pl * ell5))
    return math.remainder(x, TWO_PI)


def integrate_ensemble(base: KeplerianElements, t0, t1, ephemeris, spec: EnsembleSpec, resonant,
                       planets=None, tol=1e-10, t_out=None, k=GAUSS_K, batch=None, workers=1):
    """Integrate all members on one output grid.

    Members are grouped in batches of ``batch`` that are integrated as one
    vectorised system (sharing step control); batches run on up to
    ``workers`` threads. Results depend on ``batch`` but not on ``workers``.
    """
    members = ensemble_shifts(base, spec)
    batch = batch or len(members)
    groups = [members[s:s + batch] for s in range(0, len(members), batch)]

    def run(group):
        rv = [state_from_elements(mm.asteroid, k) for mm in group]
        r0 = np.array([x[0] for x in rv])
        v0 = np.array([x[1] for x in rv])
        shifts = np.array([mm.planet_shift for mm in group])
        return integrate_full(r0, v0, t0, t1, ephemeris, planets, tol, t_out, k, shifts,
                              spec.resonance, resonant)

    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, groups))
    else:
        parts = [run(g) for g in groups]
    t = parts[0].t
    return FullTrajectory(t=t, r=np.concatenate([p.r for p in parts]),
                          v=np.concatenate([p.v for p in parts]),
                          elements=np.concatenate([p.elements for p in parts]),
                          sigma=np.concatenate([p.sigma for p in parts]),
                          nfev=sum(p.nfev for p in parts))


@dataclass
class EnsembleStats:
    """Per-time mean and standard deviation; columns ``(a, e, I, Omega, omega, sigma)``."""

    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray


ANGLE_COLUMNS = (3, 4, 5)


def _align_branch(x, ref):
    """Shift an unwrapped angle series by multiples of 2pi to start near ``ref``."""
    return x - TWO_PI * np.round((x[0] - ref) / TWO_PI)


def ensemble_stats(series, t=None) -> EnsembleStats:
    """Arithmetic mean and population standard deviation across members.

    ``series`` is a list of ``(n_t, 6)`` arrays ``(a, e, I, Omega, omega,
    sigma)`` (or one ``(m, n_t, 6)`` array). Angles are unwrapped in time and
    brought to the branch of the first member before averaging.
    """
    arrs = [np.asarray(s, dtype=float) for s in series]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValueError("ensemble members do not share the output grid")
    if t is not None and len(t) != shape[0]:
        raise ValueError("time grid does not match the series")
    X = np.array(arrs)
    for c in ANGLE_COLUMNS:
        col = np.unwrap(X[:, :, c], axis=1)
        ref = col[0, 0]
        X[:, :, c] = np.array([_align_branch(x, ref) for x in col])
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=0)
    return EnsembleStats(t=np.arange(shape[0]) if t is None else np.asarray(t), mean=mean, std=std)


def trajectory_table(traj: FullTrajectory):
    """Per-member ``(a, e, I, Omega, omega, sigma)`` arrays for :func:`ensemble_stats`."""
    out = []
    for i in range(traj.elements.shape[0]):
        el = traj.elements[i]
        sig = traj.sigma[i] if traj.sigma is not None else np.zeros(len(traj.t))
        out.append(np.column_stack([el[:, 0], el[:, 1], el[:, 2], el[:, 3], el[:, 4], sig]))
    return out


def band_coverage(values, stats: EnsembleStats, column: int, n_std: float = 1.0):
    """Fraction of output times where ``values`` lie within ``mean +- n_std * std``."""
    values = np.asarray(values, dtype=float)
    dev = np.abs(values - stats.mean[:, column])
    return float(np.mean(dev <= n_std * stats.std[:, column] + 1e-15 * np.abs(stats.mean[:, column])))
