"""Planet trajectories as functions of time.

Two sources share one interface: a tabulated element series read from CSV
and interpolated linearly, and an analytic model in which every angle
advances at a constant rate. Times are MJD (days).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EphemerisParseError, OutOfRange
from .kepler import GAUSS_K, KeplerianElements, Orbit

J2000_MJD = 51544.5
DEG = math.pi / 180.0
_CENTURY = 36525.0

# Sun/planet mass ratios (IAU nominal values)
PLANET_MU = {
    "Mercury": 1 / 6023600.0,
    "Venus": 1 / 408523.71,
    "Earth": 1 / 328900.56,
    "Mars": 1 / 3098708.0,
    "Jupiter": 1 / 1047.3486,
    "Saturn": 1 / 3497.898,
    "Uranus": 1 / 22902.98,
    "Neptune": 1 / 19412.24,
}

TABLE_COLUMNS = ("mjd", "planet", "a", "e", "i_deg", "Omega_deg", "omega_deg", "ell_deg")


def _canonical_name(name: str) -> str:
    key = name.strip().capitalize()
    if key not in PLANET_MU:
        raise KeyError(name)
    return key


class EphemerisSource:
    """Common interface: ``planets``, ``mu``, ``elements(j, t)``, ``mean_motion(j)``."""

    planets: tuple
    mu: np.ndarray

    def index(self, name: str) -> int:
        try:
            return self.planets.index(_canonical_name(name))
        except (KeyError, ValueError):
            raise KeyError(f"planet {name!r} not in ephemeris ({', '.join(self.planets)})") from None

    def elements(self, j: int, t: float) -> KeplerianElements:
        raise NotImplementedError

    def mean_motion(self, j: int) -> float:
        raise NotImplementedError

    def unwrapped_anomaly(self, j: int, t: float) -> float:
        """Mean anomaly without reduction modulo 2pi."""
        raise NotImplementedError

    def position(self, j: int, t: float):
        E = self.elements(j, t)
        return Orbit.from_elements(E).position(np.asarray(self.unwrapped_anomaly(j, t)))

    def contains(self, t: float) -> bool:
        return True


# --------------------------------------------------------------------------
# Tabulated ephemeris
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EphemerisTable(EphemerisSource):
    """Element series on a shared, strictly increasing epoch grid.

    ``values[i, j]`` holds ``(a, e, I, Omega, omega, ell)`` of planet ``j`` at
    ``epochs[i]`` with all angles unwrapped in time.
    """

    epochs: np.ndarray
    planets: tuple
    values: np.ndarray
    mu: np.ndarray = field(default=None)

    def __post_init__(self):
        epochs = np.asarray(self.epochs, dtype=float)
        if epochs.ndim != 1 or epochs.size < 2:
            raise ValueError("an ephemeris table needs at least two epochs")
        if np.any(np.diff(epochs) <= 0):
            raise ValueError("epochs must be strictly increasing")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (epochs.size, len(self.planets), 6):
            raise ValueError(f"values must have shape {(epochs.size, len(self.planets), 6)}")
        mu = self.mu
        if mu is None:
            mu = [PLANET_MU[p] for p in self.planets]
        mu = np.asarray(mu, dtype=float)
        if np.any(mu < 0):
            raise ValueError("mass ratios must be non-negative")
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "planets", tuple(self.planets))

    @property
    def span(self):
        return float(self.epochs[0]), float(self.epochs[-1])

    @property
    def step(self):
        steps = np.diff(self.epochs)
        return float(steps.min()), float(steps.max())

    def contains(self, t):
        return self.epochs[0] <= t <= self.epochs[-1]

    def _interp(self, j, t):
        t0, t1 = self.span
        if not t0 <= t <= t1:
            raise OutOfRange(f"t = {t} outside ephemeris span [{t0}, {t1}]")
        i = int(np.searchsorted(self.epochs, t, side="right")) - 1
        i = min(max(i, 0), self.epochs.size - 2)
        ta, tb = self.epochs[i], self.epochs[i + 1]
        w = (t - ta) / (tb - ta)
        if w == 0.0:
            return self.values[i, j].copy()
        if w == 1.0:
            return self.values[i + 1, j].copy()
        return (1 - w) * self.values[i, j] + w * self.values[i + 1, j]

    def elements(self, j, t):
        a, e, I, Om, om, ell = self._interp(j, t)
        return KeplerianElements(a=a, e=e, I=I, Omega=Om, omega=om, ell=ell)

    def unwrapped_anomaly(self, j, t):
        return float(self._interp(j, t)[5])

    def mean_motion(self, j):
        """Least-squares slope of the unwrapped mean anomaly (rad/day)."""
        slope, _ = np.polyfit(self.epochs - self.epochs[0], self.values[:, j, 5], 1)
        return float(slope)


def load_table(path) -> EphemerisTable:
    """Read a CSV element table.

    Columns: ``mjd, planet, a, e, i_deg, Omega_deg, omega_deg, ell_deg``.
    Every epoch must list every planet once. Angles are unwrapped per
    planet so that linear interpolation never crosses a 2pi jump.
    """
    path = Path(path)
    rows = {}
    planets = []
    last_epoch = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, raw in enumerate(reader, start=1):
            if not raw or raw[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in raw]
            if header is None:
                names = [c.split("[")[0].strip() for c in cells]
                if tuple(names) != TABLE_COLUMNS:
                    raise EphemerisParseError(
                        f"expected header {','.join(TABLE_COLUMNS)}, got {','.join(cells)}", lineno)
                header = names
                continue
            if len(cells) != len(TABLE_COLUMNS):
                raise EphemerisParseError(f"expected {len(TABLE_COLUMNS)} fields, got {len(cells)}",
                                          lineno)
            try:
                name = _canonical_name(cells[1])
            except KeyError:
                raise EphemerisParseError(f"unknown planet {cells[1]!r}", lineno) from None
            try:
                mjd = float(cells[0])
                a, e, i, Om, om, ell = (float(c) for c in cells[2:])
            except ValueError as exc:
                raise EphemerisParseError(f"non-numeric field ({exc})", lineno) from None
            if not (a > 0 and 0 <= e < 1) or not all(map(math.isfinite, (mjd, i, Om, om, ell))):
                raise EphemerisParseError("invalid elements", lineno)
            if name not in planets:
                planets.append(name)
            if rows and mjd != last_epoch:
                if mjd < last_epoch or mjd in rows:
                    raise EphemerisParseError(f"epoch {mjd} out of order", lineno)
            last_epoch = mjd
            epoch_rows = rows.setdefault(mjd, {})
            if name in epoch_rows:
                raise EphemerisParseError(f"duplicate row for {name} at {mjd}", lineno)
            epoch_rows[name] = (a, e, i * DEG, Om * DEG, om * DEG, ell * DEG, lineno)
    if header is None or not rows:
        raise EphemerisParseError("empty ephemeris file")
    epochs = sorted(rows)
    if len(epochs) < 2:
        raise EphemerisParseError("need at least two epochs")
    values = np.empty((len(epochs), len(planets), 6))
    for i, t in enumerate(epochs):
        missing = [p for p in planets if p not in rows[t]]
        if missing:
            line = max(r[6] for r in rows[t].values())
            raise EphemerisParseError(f"epoch {t} lacks planets {missing}", line)
        for j, p in enumerate(planets):
            values[i, j] = rows[t][p][:6]
    values[:, :, 2:5] = np.unwrap(values[:, :, 2:5], axis=0)
    # mean anomalies may advance by more than pi between rows: count
    # revolutions with the Keplerian mean motion as predictor
    n = GAUSS_K / values[:, :, 0] ** 1.5
    for i in range(1, len(epochs)):
        pred = values[i - 1, :, 5] + 0.5 * (n[i - 1] + n[i]) * (epochs[i] - epochs[i - 1])
        values[i, :, 5] += 2 * np.pi * np.round((pred - values[i, :, 5]) / (2 * np.pi))
    return EphemerisTable(epochs=np.array(epochs), planets=tuple(planets), values=values)


def write_table(path, source: EphemerisSource, epochs):
    """Sample a source on ``epochs`` and write it in the table format."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for t in epochs:
            for j, name in enumerate(source.planets):
                E = source.elements(j, t)
                w.writerow([repr(float(t)), name, repr(E.a), repr(E.e), repr(E.I / DEG),
                            repr(E.Omega / DEG), repr(E.omega / DEG), repr(E.ell / DEG)])


# --------------------------------------------------------------------------
# Analytic model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanetLine:
    """One planet of the analytic model; rates in rad/day, angles at ``t0``."""

    name: str
    a: float
    e: float
    I: float
    ell0: float
    omega0: float
    Omega0: float
    g_rate: float = 0.0
    s_rate: float = 0.0
    mu: float | None = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"{self.name}: a must be positive")


@dataclass(frozen=True)
class QuasiPeriodicModel(EphemerisSource):
    """Constant ``a, e, I``; ``l``, ``omega`` and ``Omega`` advance linearly.

    The mean motion is tied to the semimajor axis, ``n = k / a**1.5``.
    """

    lines: tuple
    t0: float = J2000_MJD
    k: float = GAUSS_K

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def planets(self):
        return tuple(p.name for p in self.lines)

    @property
    def mu(self):
        return np.array([PLANET_MU.get(p.name, 0.0) if p.mu is None else p.mu for p in self.lines])

    def mean_motion(self, j):
        return self.k / self.lines[j].a ** 1.5

    def unwrapped_anomaly(self, j, t):
        p = self.lines[j]
        return p.ell0 + self.mean_motion(j) * (t - self.t0)

    def elements(self, j, t):
        p = self.lines[j]
        dt = t - self.t0
        return KeplerianElements(a=p.a, e=p.e, I=p.I, Omega=p.Omega0 + p.s_rate * dt,
                                 omega=p.omega0 + p.g_rate * dt,
                                 ell=self.unwrapped_anomaly(j, t))

    def frozen(self) -> "QuasiPeriodicModel":
        """Same model with fixed orbit planes and perihelia."""
        return replace(self, lines=tuple(replace(p, g_rate=0.0, s_rate=0.0) for p in self.lines))

    def select(self, names) -> "QuasiPeriodicModel":
        keep = [_canonical_name(n) for n in names]
        return replace(self, lines=tuple(p for p in self.lines if p.name in keep))

    def with_mu(self, **mu) -> "QuasiPeriodicModel":
        return replace(self, lines=tuple(
            replace(p, mu=mu[p.name]) if p.name in mu else p for p in self.lines))


# Fixture data: J2000 ecliptic mean elements and their secular rates
# (Standish, "Keplerian elements for approximate positions of the major
# planets"). Columns: a, e, I, mean longitude, long. of perihelion, node
# (degrees), rates of the last two in degrees per century.
_J2000 = {
    "Venus": (0.72333566, 0.00677672, 3.39467605, 181.97909950, 131.60246718, 76.67984255,
              0.00268329, -0.27769418),
    "Earth": (1.00000261, 0.01671123, 0.00001531, 100.46457166, 102.93768193, 0.0,
              0.32327364, 0.0),
    "Mars": (1.52371034, 0.09339410, 1.84969142, -4.55343205, -23.94362959, 49.55953891,
             0.44441088, -0.29257343),
    "Jupiter": (5.20288700, 0.04838624, 1.30439695, 34.39644051, 14.72847983, 100.47390909,
                0.21252668, 0.20469106),
    "Saturn": (9.53667594, 0.05386179, 2.48599187, 49.95424423, 92.59887831, 113.66242448,
               -0.41897216, -0.28867794),
}


def default_model(names=("Venus", "Earth", "Mars", "Jupiter", "Saturn")) -> QuasiPeriodicModel:
    """Analytic Venus-to-Saturn model built from J2000 mean elements (fixture data)."""
    lines = []
    for name in names:
        name = _canonical_name(name)
        a, e, I, lam, varpi, node, dvarpi, dnode = _J2000[name]
        lines.append(PlanetLine(
            name=name, a=a, e=e, I=I * DEG, ell0=(lam - varpi) * DEG,
            omega0=(varpi - node) * DEG, Omega0=node * DEG,
            g_rate=(dvarpi - dnode) * DEG / _CENTURY, s_rate=dnode * DEG / _CENTURY))
    return QuasiPeriodicModel(lines=tuple(lines))


def planet_elements(source: EphemerisSource, j: int, t: float) -> KeplerianElements:
    """Elements of planet ``j`` at time ``t`` (MJD)."""
    return source.elements(j, t)


@dataclass(frozen=True)
class FrozenEphemeris(EphemerisSource):
    """Orbits of another source held fixed at epoch ``t_freeze``.

    Mean anomalies keep advancing at the source's mean motion.
    """

    source: EphemerisSource
    t_freeze: float

    @property
    def planets(self):
        return self.source.planets

    @property
    def mu(self):
        return self.source.mu

    def mean_motion(self, j):
        return self.source.mean_motion(j)

    def unwrapped_anomaly(self, j, t):
        return self.source.unwrapped_anomaly(j, self.t_freeze) + self.mean_motion(j) * (t - self.t_freeze)

    def elements(self, j, t):
        return self.source.elements(j, self.t_freeze).replace(ell=self.unwrapped_anomaly(j, t))
