"""Coordinate charts for a Keplerian trajectory.

Keplerian elements, Delaunay elements and the resonant chart
``(S, G, Z, sigma, g, z)`` with ``S = L/h*`` and ``sigma = h* l + h5* l5``.
Positions are heliocentric, in au; times in days; ``k`` is Gauss's constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GAUSS_K = 0.01720209895
DAYS_PER_YEAR = 365.25
TWO_PI = 2.0 * math.pi


def wrap_2pi(x):
    """Reduce angles to [0, 2pi)."""
    return np.mod(x, TWO_PI)


def wrap_pi(x):
    """Reduce angles to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(y == -math.pi, math.pi, y)


# --------------------------------------------------------------------------
# Kepler's equation
# --------------------------------------------------------------------------

def _markley_start(M, e):
    # Markley (1995) cubic starter, valid for M in [-pi, pi].
    alpha = (3 * np.pi**2 + 1.6 * np.pi * (np.pi - np.abs(M)) / (1 + e)) / (np.pi**2 - 6)
    d = 3 * (1 - e) + alpha * e
    q = 2 * alpha * d * (1 - e) - M * M
    r = 3 * alpha * d * (d - 1 + e) * M + M**3
    w = (np.abs(r) + np.sqrt(q**3 + r * r)) ** (2.0 / 3.0)
    return (2 * r * w / (w * w + w * q + q * q) + M) / d


def solve_kepler(e, M, tol=1e-15, maxiter=50):
    """Eccentric anomaly ``E`` with ``E - e sin E = M``.

    Newton from a Markley starter, with a bisection fallback for entries
    that fail to converge. ``E - M`` is kept in ``(-pi, pi]``. Broadcasts
    over ``e`` and ``M``.
    """
    e = np.asarray(e, dtype=float)
    M = np.asarray(M, dtype=float)
    if np.any((e < 0) | (e >= 1)):
        raise ValueError("solve_kepler needs 0 <= e < 1")
    e, M = np.broadcast_arrays(e, M)
    Mr = wrap_pi(M)
    E = _markley_start(Mr, e)
    E = np.clip(E, -np.pi, np.pi)
    done = np.zeros(E.shape, dtype=bool)
    for _ in range(maxiter):
        f = E - e * np.sin(E) - Mr
        fp = 1 - e * np.cos(E)
        step = f / fp
        E = np.clip(E - step, -np.pi, np.pi)
        done = np.abs(step) <= tol * (1 + np.abs(E))
        if done.all():
            break
    if not done.all():
        # f(E) = E - e sin E - M is monotone on [-pi, pi]
        bad = ~done
        lo = np.full(np.count_nonzero(bad), -np.pi)
        hi = np.full_like(lo, np.pi)
        eb, Mb = e[bad], Mr[bad]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = mid - eb * np.sin(mid) - Mb
            lo = np.where(fm < 0, mid, lo)
            hi = np.where(fm < 0, hi, mid)
        E = E.copy()
        E[bad] = 0.5 * (lo + hi)
    return E + (M - Mr)


# --------------------------------------------------------------------------
# Element sets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KeplerianElements:
    """Osculating elements of a bound orbit; angles in radians.

    ``ell`` is the mean anomaly. Angles are reduced to ``[0, 2pi)``.
    """

    a: float
    e: float
    I: float
    Omega: float
    omega: float
    ell: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"semimajor axis must be positive, got {self.a}")
        if not 0 <= self.e < 1:
            raise ValueError(f"eccentricity must be in [0, 1), got {self.e}")
        for name in ("I", "Omega", "omega", "ell"):
            object.__setattr__(self, name, float(wrap_2pi(getattr(self, name))))
        if self.I > math.pi:
            raise ValueError("inclination must lie in [0, pi]")

    def replace(self, **changes) -> "KeplerianElements":
        values = dict(a=self.a, e=self.e, I=self.I, Omega=self.Omega,
                      omega=self.omega, ell=self.ell)
        values.update(changes)
        return KeplerianElements(**values)

    def as_tuple(self):
        return (self.a, self.e, self.I, self.Omega, self.omega, self.ell)


@dataclass(frozen=True)
class DelaunayElements:
    L: float
    G: float
    Z: float
    ell: float
    g: float
    z: float


@dataclass(frozen=True)
class ResonanceSpec:
    """Resonance ``h_ast * n + h_pl * n_planet = 0`` with planet ``planet_index``."""

    h_ast: int
    h_pl: int
    planet_index: int = 0

    def __post_init__(self):
        if self.h_ast == 0 and self.h_pl == 0:
            raise ValueError("resonance vector must be non-zero")
        if math.gcd(abs(self.h_ast), abs(self.h_pl)) != 1:
            raise ValueError("resonance vector must be primitive (gcd = 1)")

    @property
    def vector(self):
        return np.array([self.h_ast, self.h_pl], dtype=float)


@dataclass(frozen=True)
class ResonantState:
    """Asteroid state in the resonant chart. ``S5`` is a passive constant."""

    S: float
    G: float
    Z: float
    sigma: float
    g: float
    z: float
    S5: float = 0.0

    def to_array(self):
        return np.array([self.S, self.G, self.Z, self.sigma, self.g, self.z])

    @classmethod
    def from_array(cls, y, S5=0.0):
        return cls(*(float(v) for v in y[:6]), S5=S5)

    @property
    def y(self):
        """Trajectory coordinates (S, G, Z, g, z)."""
        return np.array([self.S, self.G, self.Z, self.g, self.z])


@dataclass(frozen=True)
class PhysicalConstants:
    k: float = GAUSS_K
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("Gauss constant must be positive")
        mu = np.asarray(self.mu, dtype=float)
        if np.any(mu < 0):
            raise ValueError("mass ratios must be non-negative")
        object.__setattr__(self, "mu", mu)


# --------------------------------------------------------------------------
# Chart conversions
# --------------------------------------------------------------------------

def keplerian_to_delaunay(E: KeplerianElements, k: float = GAUSS_K) -> DelaunayElements:
    L = k * math.sqrt(E.a)
    G = L * math.sqrt(1 - E.e**2)
    return DelaunayElements(L=L, G=G, Z=G * math.cos(E.I), ell=E.ell, g=E.omega, z=E.Omega)


def delaunay_to_keplerian(D: DelaunayElements, k: float = GAUSS_K) -> KeplerianElements:
    rtol = 1e-14
    if not (D.L > 0 and D.G > 0):
        raise ValueError("Delaunay actions L, G must be positive")
    if D.G > D.L * (1 + rtol) or abs(D.Z) > D.G * (1 + rtol):
        raise ValueError(f"Delaunay actions violate L >= G >= |Z|: {D}")
    ratio = min(D.G / D.L, 1.0)
    cosI = max(-1.0, min(1.0, D.Z / D.G))
    return KeplerianElements(a=(D.L / k) ** 2, e=math.sqrt(1 - ratio**2), I=math.acos(cosI),
                             Omega=D.z, omega=D.g, ell=D.ell)


def delaunay_to_resonant(D: DelaunayElements, ell5: float, spec: ResonanceSpec,
                         L5: float | None = None) -> ResonantState:
    """Apply ``sigma = h* l + h5* l5``, ``S = L/h*``, ``S5 = -h5* L + h* L5``.

    ``S5`` defaults to 0 when ``L5`` is not given; it never enters the
    vector field.
    """
    h, h5 = spec.h_ast, spec.h_pl
    if h == 0:
        raise ValueError("resonant chart needs h_ast != 0")
    sigma = float(wrap_2pi(h * D.ell + h5 * ell5))
    S5 = 0.0 if L5 is None else -h5 * D.L + h * L5
    return ResonantState(S=D.L / h, G=D.G, Z=D.Z, sigma=sigma, g=D.g, z=D.z, S5=S5)


def resonant_to_delaunay(R: ResonantState, ell5: float, spec: ResonanceSpec,
                         ell_ref: float | None = None) -> DelaunayElements:
    """Inverse of :func:`delaunay_to_resonant`.

    ``l`` is recovered modulo ``2pi/|h*|``; the branch closest to ``ell_ref``
    is returned when given.
    """
    h, h5 = spec.h_ast, spec.h_pl
    ell = (R.sigma - h5 * ell5) / h
    if ell_ref is not None:
        branch = TWO_PI / abs(h)
        ell = ell + branch * round((ell_ref - ell) / branch)
    return DelaunayElements(L=h * R.S, G=R.G, Z=R.Z, ell=float(wrap_2pi(ell)), g=R.g, z=R.z)


def resonant_to_keplerian(R: ResonantState, spec: ResonanceSpec, k: float = GAUSS_K,
                          ell: float = 0.0) -> KeplerianElements:
    """Trajectory elements of a resonant state (position along orbit ``ell``)."""
    return delaunay_to_keplerian(
        DelaunayElements(L=spec.h_ast * R.S, G=R.G, Z=R.Z, ell=ell, g=R.g, z=R.z), k)


def l5_from_s(S: float, S5: float, spec: ResonanceSpec) -> float:
    """Planet action ``L5 = S5/h* + h5* S``."""
    return S5 / spec.h_ast + spec.h_pl * S


# --------------------------------------------------------------------------
# Cartesian embedding
# --------------------------------------------------------------------------

def _frame(I, Omega, omega):
    cO, sO = math.cos(Omega), math.sin(Omega)
    co, so = math.cos(omega), math.sin(omega)
    cI, sI = math.cos(I), math.sin(I)
    p = np.array([cO * co - sO * so * cI, sO * co + cO * so * cI, so * sI])
    q = np.array([-cO * so - sO * co * cI, -sO * so + cO * co * cI, co * sI])
    dp_dI = np.array([sO * so * sI, -cO * so * sI, so * cI])
    dq_dI = np.array([sO * co * sI, -cO * co * sI, co * cI])
    return p, q, dp_dI, dq_dI


class Orbit:
    """Vectorised evaluation of a fixed Keplerian ellipse.

    All methods take mean anomalies (any shape) and return arrays with a
    trailing axis of length 3.
    """

    def __init__(self, a, e, I, Omega, omega):
        self.a, self.e, self.I, self.Omega, self.omega = (float(a), float(e), float(I),
                                                          float(Omega), float(omega))
        self.b = self.a * math.sqrt(1 - self.e**2)
        self.p, self.q, self.dp_dI, self.dq_dI = _frame(self.I, self.Omega, self.omega)

    @classmethod
    def from_elements(cls, E: KeplerianElements) -> "Orbit":
        return cls(E.a, E.e, E.I, E.Omega, E.omega)

    def _plane(self, x, y):
        return x[..., None] * self.p + y[..., None] * self.q

    def position(self, ell):
        Ecc = solve_kepler(self.e, ell)
        return self._plane(self.a * (np.cos(Ecc) - self.e), self.b * np.sin(Ecc))

    def position_ecc(self, Ecc):
        """Position as a function of the eccentric anomaly."""
        Ecc = np.asarray(Ecc, dtype=float)
        return self._plane(self.a * (np.cos(Ecc) - self.e), self.b * np.sin(Ecc))

    def ecc_derivs(self, Ecc):
        """Position and first two derivatives with respect to the eccentric anomaly."""
        Ecc = np.asarray(Ecc, dtype=float)
        c, s = np.cos(Ecc), np.sin(Ecc)
        X = self._plane(self.a * (c - self.e), self.b * s)
        X1 = self._plane(-self.a * s, self.b * c)
        X2 = self._plane(-self.a * c, -self.b * s)
        return X, X1, X2

    def mean_derivs(self, ell):
        """Position, dX/dl and d2X/dl2 at mean anomaly ``ell``."""
        Ecc = solve_kepler(self.e, ell)
        return self.mean_derivs_from_ecc(Ecc)

    def mean_derivs_from_ecc(self, Ecc):
        Ecc = np.asarray(Ecc, dtype=float)
        c, s = np.cos(Ecc), np.sin(Ecc)
        den = 1 - self.e * c
        E1 = 1.0 / den
        E2 = -self.e * s / den**3
        X = self._plane(self.a * (c - self.e), self.b * s)
        XE = self._plane(-self.a * s, self.b * c)
        XEE = self._plane(-self.a * c, -self.b * s)
        X1 = XE * E1[..., None]
        X2 = XEE * (E1**2)[..., None] + XE * E2[..., None]
        return X, X1, X2

    def element_partials(self, ell):
        """Position and its partials with respect to (a, e, I, Omega, omega) at fixed ``ell``.

        Returns ``X`` with shape ``(..., 3)`` and ``dX`` with shape ``(5, ..., 3)``.
        """
        Ecc = solve_kepler(self.e, ell)
        c, s = np.cos(Ecc), np.sin(Ecc)
        beta = self.b / self.a
        x = self.a * (c - self.e)
        y = self.b * s
        X = self._plane(x, y)
        E_e = s / (1 - self.e * c)
        x_e = self.a * (-s * E_e - 1)
        y_e = self.a * (-self.e / beta * s + beta * c * E_e)
        dX_a = X / self.a
        dX_e = self._plane(x_e, y_e)
        dX_I = x[..., None] * self.dp_dI + y[..., None] * self.dq_dI
        dX_Om = np.stack([-X[..., 1], X[..., 0], np.zeros_like(X[..., 0])], axis=-1)
        dX_om = x[..., None] * self.q - y[..., None] * self.p
        return X, np.stack([dX_a, dX_e, dX_I, dX_Om, dX_om])

    def action_partials(self, ell, k=GAUSS_K, h_ast=1):
        """Position and partials with respect to ``y = (S, G, Z, g, z)``.

        ``S = L/h_ast``; requires ``e > 0`` and ``sin I > 0``.
        """
        X, dK = self.element_partials(ell)
        L = k * math.sqrt(self.a)
        G = L * math.sqrt(1 - self.e**2)
        Z = G * math.cos(self.I)
        sI = math.sin(self.I)
        e = self.e
        if e <= 0 or sI <= 0:
            raise ValueError("action partials need e > 0 and 0 < I < pi")
        da_dL = 2 * L / k**2
        de_dL = G**2 / (e * L**3)
        de_dG = -G / (e * L**2)
        dI_dG = Z / (G**2 * sI)
        dI_dZ = -1.0 / (G * sI)
        dX_dS = h_ast * (da_dL * dK[0] + de_dL * dK[1])
        dX_dG = de_dG * dK[1] + dI_dG * dK[2]
        dX_dZ = dI_dZ * dK[2]
        return X, np.stack([dX_dS, dX_dG, dX_dZ, dK[4], dK[3]])


def cartesian_state(E: KeplerianElements, ell=None):
    """Heliocentric position and tangent ``dX/dl`` at mean anomaly ``ell``.

    ``ell`` defaults to the element set's own mean anomaly.
    """
    orbit = Orbit.from_elements(E)
    X, X1, _ = orbit.mean_derivs(E.ell if ell is None else ell)
    return X, X1


def elements_from_state(r, v, k=GAUSS_K) -> KeplerianElements:
    """Osculating heliocentric elements from position (au) and velocity (au/day)."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    mu = k * k
    rn = np.linalg.norm(r)
    hvec = np.cross(r, v)
    hn = np.linalg.norm(hvec)
    evec = np.cross(v, hvec) / mu - r / rn
    e = float(np.linalg.norm(evec))
    energy = 0.5 * v @ v - mu / rn
    if energy >= 0:
        raise ValueError("unbound orbit")
    a = -mu / (2 * energy)
    I = math.acos(max(-1.0, min(1.0, hvec[2] / hn)))
    Omega = math.atan2(hvec[0], -hvec[1])
    # perifocal frame from the node line and the eccentricity vector
    node = np.array([math.cos(Omega), math.sin(Omega), 0.0])
    w_hat = hvec / hn
    m_hat = np.cross(w_hat, node)
    omega = math.atan2(evec @ m_hat, evec @ node)
    # eccentric anomaly from r and radial velocity
    cosE = (1 - rn / a) / e
    sinE = (r @ v) / (e * math.sqrt(mu * a))
    Ecc = math.atan2(sinE, cosE)
    ell = Ecc - e * math.sin(Ecc)
    return KeplerianElements(a=a, e=e, I=I, Omega=Omega, omega=omega, ell=ell)


def state_from_elements(E: KeplerianElements, k=GAUSS_K):
    """Position (au) and velocity (au/day) of an element set."""
    X, X1 = cartesian_state(E)
    n = k / E.a**1.5
    return X, X1 * n


def trajectory_y(E: KeplerianElements, k: float = GAUSS_K, h_ast: int = 1):
    """Trajectory coordinates ``y = (S, G, Z, g, z)`` of an asteroid orbit."""
    D = keplerian_to_delaunay(E, k)
    return np.array([D.L / h_ast, D.G, D.Z, D.g, D.z])


def trajectory_from_y(y, k: float = GAUSS_K, h_ast: int = 1, ell: float = 0.0) -> KeplerianElements:
    """Inverse of :func:`trajectory_y`."""
    S, G, Z, g, z = (float(v) for v in y)
    return delaunay_to_keplerian(DelaunayElements(L=h_ast * S, G=G, Z=Z, ell=ell, g=g, z=z), k)
