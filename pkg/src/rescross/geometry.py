"""Distance geometry between two Keplerian trajectories.

Critical points of the squared distance ``d^2(V)`` on the torus of mean
anomalies ``V = (l, l')``, the signed local minimal distance, the quadratic
model ``delta_h`` and derivatives of these objects with respect to the
asteroid's trajectory coordinates ``y = (S, G, Z, g, z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BifurcationNearby, DegenerateConfig, NumericalFailure, SmoothingFails
from .kepler import (GAUSS_K, TWO_PI, KeplerianElements, Orbit, solve_kepler, trajectory_from_y,
                     trajectory_y, wrap_2pi, wrap_pi)

DET_REL_TOL = 1e-12
PARALLEL_TOL = 1e-8
DEDUP_TOL = 1e-7


@dataclass(frozen=True)
class TwoOrbitConfig:
    """Asteroid trajectory paired with one planet trajectory.

    Only the orbit shapes matter here; the ``ell`` fields are ignored.
    """

    asteroid: KeplerianElements
    planet: KeplerianElements
    mu_prime: float = 0.0

    @cached_property
    def orbit(self) -> Orbit:
        return Orbit.from_elements(self.asteroid)

    @cached_property
    def planet_orbit(self) -> Orbit:
        return Orbit.from_elements(self.planet)

    def with_asteroid(self, asteroid: KeplerianElements) -> "TwoOrbitConfig":
        return TwoOrbitConfig(asteroid, self.planet, self.mu_prime)

    def y(self, k=GAUSS_K, h_ast=1):
        return trajectory_y(self.asteroid, k, h_ast)

    def displaced(self, y, k=GAUSS_K, h_ast=1) -> "TwoOrbitConfig":
        return self.with_asteroid(trajectory_from_y(y, k, h_ast))

    def squared_distance(self, ell, ell_p):
        """d^2 on arrays of mean anomalies."""
        diff = self.planet_orbit.position(ell_p) - self.orbit.position(ell)
        return np.einsum("...i,...i->...", diff, diff)


@dataclass(frozen=True, eq=False)
class MinimumPoint:
    """A critical point of ``d^2`` on the torus of mean anomalies.

    ``A`` is half the Hessian of ``d^2`` in mean anomalies. For minima with
    non-parallel tangents ``d_tilde`` is the distance with the sign of
    ``(tau' x tau) . Delta``; it is ``nan`` when the tangents are parallel.
    """

    V: np.ndarray
    d: float
    d_tilde: float
    tau: np.ndarray
    tau_prime: np.ndarray
    Delta: np.ndarray
    A: np.ndarray
    morse_index: int
    nondegenerate: bool
    ecc: np.ndarray

    @property
    def det_A(self):
        return float(np.linalg.det(self.A))

    @property
    def is_minimum(self):
        return self.morse_index == 0

    @property
    def sin_angle(self):
        cross = np.cross(self.tau_prime, self.tau)
        return float(np.linalg.norm(cross) / (np.linalg.norm(self.tau) * np.linalg.norm(self.tau_prime)))


def _ecc_system(orbit: Orbit, porbit: Orbit, u, up):
    """Gradient and Hessian of d^2/2 in eccentric anomalies (vectorised)."""
    X, Xu, Xuu = orbit.ecc_derivs(u)
    P, Pu, Puu = porbit.ecc_derivs(up)
    D = P - X
    g = np.stack([-np.einsum("...i,...i", D, Xu), np.einsum("...i,...i", D, Pu)], axis=-1)
    h11 = np.einsum("...i,...i", Xu, Xu) - np.einsum("...i,...i", D, Xuu)
    h22 = np.einsum("...i,...i", Pu, Pu) + np.einsum("...i,...i", D, Puu)
    h12 = -np.einsum("...i,...i", Xu, Pu)
    return g, h11, h12, h22


def _newton(orbit, porbit, u, up, maxiter=60, max_step=0.5):
    u = np.array(u, dtype=float)
    up = np.array(up, dtype=float)
    step = np.full(u.shape, np.inf)
    for _ in range(maxiter):
        g, h11, h12, h22 = _ecc_system(orbit, porbit, u, up)
        det = h11 * h22 - h12 * h12
        scale = np.abs(h11) + np.abs(h22)
        ok = np.abs(det) > 1e-14 * scale**2
        safe = np.where(ok, det, 1.0)
        du = np.where(ok, -(h22 * g[..., 0] - h12 * g[..., 1]) / safe, -g[..., 0] / np.maximum(scale, 1e-300))
        dup = np.where(ok, -(h11 * g[..., 1] - h12 * g[..., 0]) / safe, -g[..., 1] / np.maximum(scale, 1e-300))
        norm = np.hypot(du, dup)
        damp = np.minimum(1.0, max_step / np.maximum(norm, 1e-300))
        u = u + damp * du
        up = up + damp * dup
        step = norm
        if np.all(step < 1e-13):
            break
    return u, up, step


def _build_point(orbit: Orbit, porbit: Orbit, u, up) -> MinimumPoint:
    ell = float(u - orbit.e * math.sin(u))
    ellp = float(up - porbit.e * math.sin(up))
    X, tau, Xll = orbit.mean_derivs_from_ecc(np.array(u))
    P, taup, Pll = porbit.mean_derivs_from_ecc(np.array(up))
    D = P - X
    d = float(np.linalg.norm(D))
    A11 = tau @ tau - D @ Xll
    A22 = taup @ taup + D @ Pll
    A12 = -(tau @ taup)
    A = np.array([[A11, A12], [A12, A22]])
    det = A11 * A22 - A12 * A12
    tr = A11 + A22
    nondeg = abs(det) >= DET_REL_TOL * tr * tr
    if det < 0:
        morse = 1
    else:
        morse = 0 if tr > 0 else 2
    cross = np.cross(taup, tau)
    cn = np.linalg.norm(cross)
    if cn < PARALLEL_TOL * np.linalg.norm(tau) * np.linalg.norm(taup):
        d_tilde = float("nan")
    else:
        proj = cross @ D
        d_tilde = d if proj >= 0 else -d
    return MinimumPoint(V=np.array([wrap_2pi(ell), wrap_2pi(ellp)]), d=d, d_tilde=d_tilde, tau=tau,
                        tau_prime=taup, Delta=D, A=A, morse_index=morse, nondegenerate=bool(nondeg),
                        ecc=np.array([wrap_2pi(u), wrap_2pi(up)]))


def _sort_key(mp: MinimumPoint):
    if mp.morse_index == 0:
        return (0, mp.d, mp.V[0], mp.V[1])
    return (mp.morse_index, mp.V[0], mp.V[1], 0.0)


def critical_points(cfg: TwoOrbitConfig, seeds: int = 64, max_seeds: int = 256) -> list:
    """All critical points of ``d^2``, Morse-classified.

    Minima come first sorted by distance, then saddles and maxima sorted by
    the asteroid anomaly. The seed grid is refined when the Morse count
    ``#min - #saddle + #max = 0`` fails.
    """
    orbit, porbit = cfg.orbit, cfg.planet_orbit
    n = seeds
    while True:
        grid = (np.arange(n) + 0.5) * TWO_PI / n
        U, UP = np.meshgrid(grid, grid, indexing="ij")
        u, up, step = _newton(orbit, porbit, U.ravel(), UP.ravel())
        conv = step < 1e-10
        if not conv.any():
            raise NumericalFailure("critical point search: Newton failed from every seed")
        u = wrap_2pi(u[conv])
        up = wrap_2pi(up[conv])
        # polish the survivors once more so duplicates coincide to round-off
        u, up, step = _newton(orbit, porbit, u, up, maxiter=3)
        u, up = wrap_2pi(u), wrap_2pi(up)
        order = np.lexsort((up, u))
        u, up = u[order], up[order]
        kept = []
        alive = np.ones(u.size, dtype=bool)
        while alive.any():
            i = int(np.argmax(alive))
            kept.append(i)
            near = (np.abs(wrap_pi(u - u[i])) < DEDUP_TOL) & (np.abs(wrap_pi(up - up[i])) < DEDUP_TOL)
            alive &= ~near
            if len(kept) > 40:
                break
        points = [_build_point(orbit, porbit, u[i], up[i]) for i in kept]
        degenerate = [p for p in points if not p.nondegenerate]
        if len(points) > 40 or len(degenerate) > 2:
            raise DegenerateConfig(
                f"continuum of critical points ({len(points)} found, {len(degenerate)} degenerate)")
        counts = [sum(p.morse_index == m for p in points) for m in (0, 1, 2)]
        if counts[0] - counts[1] + counts[2] == 0 or degenerate:
            break
        if n >= max_seeds:
            raise NumericalFailure(f"critical point search incomplete: Morse counts {counts}")
        n *= 2
    return sorted(points, key=_sort_key)


def local_minima(cfg: TwoOrbitConfig, **kw) -> list:
    return [p for p in critical_points(cfg, **kw) if p.morse_index == 0]


def refine_minimum(cfg: TwoOrbitConfig, V0, max_shift: float = 0.5) -> MinimumPoint:
    """Continue a local minimum from a nearby anomaly pair by Newton's method.

    Raises :class:`BifurcationNearby` when the iteration does not converge,
    moves farther than ``max_shift`` or lands on a non-minimum.
    """
    orbit, porbit = cfg.orbit, cfg.planet_orbit
    V0 = np.asarray(V0, dtype=float)
    u0 = float(solve_kepler(orbit.e, V0[0]))
    up0 = float(solve_kepler(porbit.e, V0[1]))
    u, up, step = _newton(orbit, porbit, np.array([u0]), np.array([up0]), max_step=0.1)
    if not step[0] < 1e-10:
        raise BifurcationNearby("minimum continuation did not converge")
    if max(abs(wrap_pi(u[0] - u0)), abs(wrap_pi(up[0] - up0))) > max_shift:
        raise BifurcationNearby("minimum continuation jumped to another critical point")
    mp = _build_point(orbit, porbit, u[0], up[0])
    if mp.morse_index != 0:
        raise BifurcationNearby("continued critical point is no longer a minimum")
    return mp


def signed_distance(cfg: TwoOrbitConfig, mp: MinimumPoint) -> float:
    """Local minimal distance with the sign of ``(tau' x tau) . Delta``."""
    if not math.isfinite(mp.d_tilde):
        raise SmoothingFails("tangent vectors at the minimum are parallel")
    return mp.d_tilde


def a_matrix(cfg: TwoOrbitConfig, mp: MinimumPoint) -> np.ndarray:
    """Half the Hessian of ``d^2`` at the critical point."""
    return mp.A.copy()


def check_definite(mp: MinimumPoint):
    if not mp.nondegenerate or mp.morse_index != 0:
        raise DegenerateConfig(
            f"quadratic form at V = {mp.V} is not positive definite (det = {mp.det_A:.3e})")


def delta_h(cfg: TwoOrbitConfig, mp: MinimumPoint, V) -> np.ndarray:
    """Approximated distance ``sqrt(d_h^2 + (V-V_h).A(V-V_h))``.

    ``V - V_h`` is reduced to ``(-pi, pi]^2``. Accepts ``V`` of shape ``(..., 2)``.
    """
    check_definite(mp)
    W = wrap_pi(np.asarray(V, dtype=float) - mp.V)
    q = np.einsum("...i,ij,...j->...", W, mp.A, W)
    return np.sqrt(mp.d**2 + q)


def min_distance(cfg: TwoOrbitConfig, minima=None):
    """``(d_min, d_tilde_min, h)``: the closest local minimum and its index."""
    minima = local_minima(cfg) if minima is None else minima
    if not minima:
        raise NumericalFailure("no local minimum found")
    h = min(range(len(minima)), key=lambda i: (minima[i].d, minima[i].V[0]))
    return minima[h].d, minima[h].d_tilde, h


# --------------------------------------------------------------------------
# Derivatives with respect to the asteroid trajectory
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometryGradients:
    """Partials of minimum-point quantities over ``y = (S, G, Z, g, z)``."""

    d_tilde: np.ndarray
    V: np.ndarray
    A: np.ndarray
    inv_sqrt_det: np.ndarray


def fd_steps(y, rel_step=1e-6):
    """Per-coordinate finite-difference steps for ``y = (S, G, Z, g, z)``."""
    G = abs(y[1])
    return rel_step * np.array([abs(y[0]), G, G, 1.0, 1.0])


def displaced_minima(cfg: TwoOrbitConfig, mp: MinimumPoint, k=GAUSS_K, h_ast=1,
                     rel_step=1e-6, offsets=(-2, -1, 1, 2)):
    """Re-solve the minimum at ``y + m h_i e_i`` for each coordinate and offset ``m``.

    Returns ``(steps, table)`` with ``table[i][m] = (config, minimum)``.
    """
    y = cfg.y(k, h_ast)
    steps = fd_steps(y, rel_step)
    table = []
    for i in range(5):
        row = {}
        for m in offsets:
            yd = y.copy()
            yd[i] += m * steps[i]
            cfg_d = cfg.displaced(yd, k, h_ast)
            row[m] = (cfg_d, refine_minimum(cfg_d, mp.V, max_shift=0.05))
        table.append(row)
    return steps, table


def richardson_central(values: dict, h: float):
    """Derivative from values at offsets -1, 1 (and -2, 2 if present, for fourth order)."""
    d1 = (values[1] - values[-1]) / (2 * h)
    if 2 not in values:
        return d1
    d2 = (values[2] - values[-2]) / (4 * h)
    return (4 * d1 - d2) / 3


def geometry_gradients(cfg: TwoOrbitConfig, mp: MinimumPoint, k=GAUSS_K, h_ast=1,
                       rel_step=1e-6, displaced=None) -> GeometryGradients:
    """Gradients of ``d_tilde``, ``V_h``, ``A_h`` and ``1/sqrt(det A_h)``.

    Central differences with Richardson extrapolation; the minimum is
    re-solved by warm Newton at each displaced configuration.
    """
    check_definite(mp)
    if not math.isfinite(mp.d_tilde):
        raise SmoothingFails("tangent vectors at the minimum are parallel")
    steps, table = displaced if displaced is not None else displaced_minima(
        cfg, mp, k, h_ast, rel_step)
    dd = np.empty(5)
    dV = np.empty((5, 2))
    dA = np.empty((5, 2, 2))
    dq = np.empty(5)
    for i in range(5):
        row = table[i]
        dd[i] = richardson_central({m: row[m][1].d_tilde for m in row}, steps[i])
        dV[i] = richardson_central({m: mp.V + wrap_pi(row[m][1].V - mp.V) for m in row}, steps[i])
        dA[i] = richardson_central({m: row[m][1].A for m in row}, steps[i])
        dq[i] = richardson_central({m: 1 / math.sqrt(row[m][1].det_A) for m in row}, steps[i])
    return GeometryGradients(d_tilde=dd, V=dV, A=dA, inv_sqrt_det=dq)


def crossing_orbit(planet: KeplerianElements, ell_p: float, e: float, I: float, f0: float,
                   branch: int = 0) -> KeplerianElements:
    """An asteroid orbit passing through the planet's position at mean anomaly ``ell_p``.

    The asteroid has eccentricity ``e``, inclination ``I`` and sits at true
    anomaly ``f0`` at the common point. ``branch`` (0 or 1) picks one of the
    two node longitudes that put the point in the orbit plane.
    """
    P = Orbit.from_elements(planet).position(np.array(ell_p))
    rho = math.hypot(P[0], P[1])
    phi = math.atan2(P[1], P[0])
    s = -P[2] / (math.tan(I) * rho)
    if abs(s) > 1:
        raise ValueError("inclination too small to reach the planet's point")
    x = math.asin(s)
    Omega = phi + (x if branch == 0 else math.pi - x)
    node = np.array([math.cos(Omega), math.sin(Omega), 0.0])
    normal = np.array([math.sin(I) * math.sin(Omega), -math.sin(I) * math.cos(Omega), math.cos(I)])
    m_hat = np.cross(normal, node)
    u = math.atan2(P @ m_hat, P @ node)
    r = float(np.linalg.norm(P))
    a = r * (1 + e * math.cos(f0)) / (1 - e * e)
    return KeplerianElements(a=a, e=e, I=I, Omega=Omega, omega=u - f0, ell=0.0)
