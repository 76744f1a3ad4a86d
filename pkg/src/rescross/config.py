"""Run configuration: TOML sections, defaults, validation and model assembly.

Every field has a default; a config file only lists what it changes.
Angles are given in degrees and times in years (relative to ``t0_mjd``
where noted); the library works in radians and days.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, RescrossError
from .ephemeris import DEG, J2000_MJD, PLANET_MU, FrozenEphemeris, default_model, load_table
from .hamiltonian import NormalFormConfig
from .kepler import DAYS_PER_YEAR, GAUSS_K, KeplerianElements, ResonanceSpec
from .propagator import IntegratorConfig
from .quadrature import QuadratureConfig


@dataclass
class RunSection:
    output: str = "out"          # output directory (overridden by --out)
    seed: int = 0                # only used by synthetic fixtures


@dataclass
class ConstantsSection:
    k: float = GAUSS_K           # Gauss constant, au^1.5 / day


@dataclass
class EphemerisSection:
    table: str = ""              # CSV element table; empty selects the analytic model
    frozen: bool = False         # freeze planet orbit planes and perihelia at t0


@dataclass
class PlanetsSection:
    names: list = field(default_factory=lambda: ["Earth", "Mars", "Jupiter"])
    resonant: str = "Jupiter"
    mu: dict = field(default_factory=dict)   # mass-ratio overrides by planet name


@dataclass
class ResonanceSection:
    h: int = 1                   # asteroid coefficient
    h_prime: int = -3            # resonant-planet coefficient


@dataclass
class AsteroidSection:
    a: float = 2.5               # au
    e: float = 0.45
    i_deg: float = 8.0
    Omega_deg: float = 40.0
    omega_deg: float = 110.0
    ell_deg: float = 30.0        # mean anomaly at t0


@dataclass
class NormalFormSection:
    n_max: int = 3
    nodes: int = 128             # starting trapezoid size per dimension
    max_nodes: int = 1024
    tol: float = 1e-9            # relative agreement of successive doublings
    extraction_radius: float = 0.2
    switch_distance: float = 0.05   # au
    fd_step: float = 1e-6        # relative step of element finite differences


@dataclass
class IntegratorSection:
    t0_mjd: float = J2000_MJD
    span_yr: float = 100.0
    step_yr: float = 0.5
    min_step_yr: float = 1e-3
    stages: int = 2
    fp_tol: float = 1e-13
    output_step_yr: float = 1.0


@dataclass
class EnsembleSection:
    count: int = 64
    phase_step_deg: float = 180.0 / 64
    tol: float = 1e-10           # relative tolerance of the full integration
    batch: int = 16              # members integrated together as one system


@dataclass
class DiagnoseSection:
    planet: str = ""             # empty selects the resonant planet
    sigma_samples: int = 361
    N: list = field(default_factory=lambda: [0, 1, 3, 10])
    procedure: str = "II"
    jump_N: list = field(default_factory=lambda: [1, 3, 15])
    y_index: int = 1             # component of (S, G, Z, g, z) in the jump scan


SECTIONS = {
    "run": RunSection, "constants": ConstantsSection, "ephemeris": EphemerisSection,
    "planets": PlanetsSection, "resonance": ResonanceSection, "asteroid": AsteroidSection,
    "normal_form": NormalFormSection, "integrator": IntegratorSection,
    "ensemble": EnsembleSection, "diagnose": DiagnoseSection,
}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    constants: ConstantsSection = field(default_factory=ConstantsSection)
    ephemeris: EphemerisSection = field(default_factory=EphemerisSection)
    planets: PlanetsSection = field(default_factory=PlanetsSection)
    resonance: ResonanceSection = field(default_factory=ResonanceSection)
    asteroid: AsteroidSection = field(default_factory=AsteroidSection)
    normal_form: NormalFormSection = field(default_factory=NormalFormSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    diagnose: DiagnoseSection = field(default_factory=DiagnoseSection)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def as_dict(self):
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def content_hash(self, extra_files=()):
        """SHA-256 over the canonical config echo and the bytes of input files."""
        h = hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode())
        for p in extra_files:
            h.update(Path(p).read_bytes())
        return h.hexdigest()

    # derived objects -------------------------------------------------------
    @property
    def spec(self):
        return ResonanceSpec(self.resonance.h, self.resonance.h_prime)

    @property
    def t0(self):
        return float(self.integrator.t0_mjd)

    @property
    def t1(self):
        return self.t0 + self.integrator.span_yr * DAYS_PER_YEAR

    def table_path(self):
        if not self.ephemeris.table:
            return None
        p = Path(self.ephemeris.table)
        return p if p.is_absolute() else self.base_dir / p

    def quadrature(self):
        nf = self.normal_form
        return QuadratureConfig(nodes=nf.nodes, max_nodes=nf.max_nodes, tol=nf.tol,
                                extraction_radius=nf.extraction_radius,
                                switch_distance=nf.switch_distance)

    def normal_form_config(self):
        return NormalFormConfig(self.spec, n_max=self.normal_form.n_max, quad=self.quadrature(),
                                fd_step=self.normal_form.fd_step)

    def integrator_config(self):
        it = self.integrator
        return IntegratorConfig(step=it.step_yr * DAYS_PER_YEAR, min_step=it.min_step_yr * DAYS_PER_YEAR,
                                stages=it.stages, fp_tol=it.fp_tol)

    def asteroid_elements(self):
        a = self.asteroid
        return KeplerianElements(a=a.a, e=a.e, I=a.i_deg * DEG, Omega=a.Omega_deg * DEG,
                                 omega=a.omega_deg * DEG, ell=a.ell_deg * DEG)

    def ephemeris_source(self):
        path = self.table_path()
        if path is not None:
            src = load_table(path)
            if self.planets.mu:
                mu = src.mu.copy()
                for name, val in self.planets.mu.items():
                    mu[src.index(name)] = float(val)
                src = dataclasses.replace(src, mu=mu)
        else:
            src = default_model(tuple(self.planets.names))
            if self.planets.mu:
                src = src.with_mu(**{src.planets[src.index(n)]: float(v) for n, v in self.planets.mu.items()})
        if self.ephemeris.frozen:
            src = FrozenEphemeris(src, self.t0)
        return src

    def output_times(self, step_yr=None):
        step = (step_yr or self.integrator.output_step_yr) * DAYS_PER_YEAR
        n = int(math.floor((self.t1 - self.t0) / step + 1e-9))
        t = self.t0 + step * np.arange(n + 1)
        if self.t1 - t[-1] > 1e-9 * step:
            t = np.append(t, self.t1)
        return t


# --------------------------------------------------------------------------
# Loading and validation
# --------------------------------------------------------------------------

def _coerce(path, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return list(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a table, got {value!r}")
        return dict(value)
    return value


def from_dict(data: dict, base_dir=None) -> RunConfig:
    cfg = RunConfig(base_dir=Path(base_dir) if base_dir else Path.cwd())
    for name, section in data.items():
        if name not in SECTIONS:
            raise ConfigError(name, f"unknown section (known: {', '.join(SECTIONS)})")
        if not isinstance(section, dict):
            raise ConfigError(name, "expected a table")
        obj = getattr(cfg, name)
        known = {f.name: f for f in dataclasses.fields(obj)}
        for key, value in section.items():
            path = f"{name}.{key}"
            if key not in known:
                raise ConfigError(path, f"unknown key (known: {', '.join(known)})")
            setattr(obj, key, _coerce(path, getattr(obj, key), value))
    validate(cfg)
    return cfg


def load_config(path=None) -> RunConfig:
    """Parse and validate a TOML run configuration (defaults when ``path`` is None)."""
    if path is None:
        cfg = RunConfig()
        validate(cfg)
        return cfg
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("--config", f"file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"TOML syntax error: {exc}") from None
    return from_dict(data, base_dir=path.parent)


def _require(cond, path, message):
    if not cond:
        raise ConfigError(path, message)


def validate(cfg: RunConfig):
    """Check ranges and cross-references; raises :class:`ConfigError`."""
    _require(cfg.constants.k > 0, "constants.k", "must be positive")
    names = cfg.planets.names
    _require(len(names) > 0, "planets.names", "at least one planet is needed")
    _require(len(set(n.capitalize() for n in names)) == len(names), "planets.names", "duplicate planet")
    canon = [n.capitalize() for n in names]
    _require(cfg.planets.resonant.capitalize() in canon, "planets.resonant",
             f"{cfg.planets.resonant!r} is not among planets.names {names}")
    for n, v in cfg.planets.mu.items():
        _require(n.capitalize() in canon, f"planets.mu.{n}", "planet is not among planets.names")
        _require(isinstance(v, (int, float)) and v >= 0, f"planets.mu.{n}", "mass ratio must be >= 0")
    r = cfg.resonance
    _require(r.h != 0, "resonance.h", "must be non-zero")
    _require(math.gcd(abs(r.h), abs(r.h_prime)) == 1, "resonance", "(h, h_prime) must be coprime")
    _require(r.h * r.h_prime < 0, "resonance.h_prime", "must have the opposite sign of resonance.h")
    a = cfg.asteroid
    _require(a.a > 0, "asteroid.a", "must be positive")
    _require(0 <= a.e < 1, "asteroid.e", "must lie in [0, 1)")
    _require(0 <= a.i_deg <= 180, "asteroid.i_deg", "must lie in [0, 180]")
    nf = cfg.normal_form
    _require(nf.n_max >= 0, "normal_form.n_max", "must be >= 0")
    _require(nf.nodes >= 8 and nf.nodes % 2 == 0, "normal_form.nodes", "must be an even integer >= 8")
    _require(nf.max_nodes >= nf.nodes, "normal_form.max_nodes", "must be >= normal_form.nodes")
    _require(0 < nf.extraction_radius <= 1, "normal_form.extraction_radius", "must lie in (0, 1]")
    _require(nf.switch_distance > 0, "normal_form.switch_distance", "must be positive")
    _require(nf.tol > 0, "normal_form.tol", "must be positive")
    it = cfg.integrator
    _require(it.span_yr > 0, "integrator.span_yr", "must be positive")
    _require(it.step_yr > 0, "integrator.step_yr", "must be positive")
    _require(0 < it.min_step_yr <= it.step_yr, "integrator.min_step_yr", "must lie in (0, step_yr]")
    _require(it.stages >= 1, "integrator.stages", "must be >= 1")
    _require(it.output_step_yr > 0, "integrator.output_step_yr", "must be positive")
    en = cfg.ensemble
    _require(en.count >= 1, "ensemble.count", "must be >= 1")
    _require(en.batch >= 1, "ensemble.batch", "must be >= 1")
    _require(en.tol > 0, "ensemble.tol", "must be positive")
    dg = cfg.diagnose
    _require(not dg.planet or dg.planet.capitalize() in canon, "diagnose.planet",
             f"{dg.planet!r} is not among planets.names")
    _require(dg.sigma_samples >= 2, "diagnose.sigma_samples", "must be >= 2")
    _require(all(isinstance(n, int) and n >= 0 for n in dg.N), "diagnose.N", "entries must be integers >= 0")
    _require(all(isinstance(n, int) and n >= 0 for n in dg.jump_N), "diagnose.jump_N",
             "entries must be integers >= 0")
    _require(dg.procedure.upper() in ("I", "II"), "diagnose.procedure", "must be 'I' or 'II'")
    _require(0 <= dg.y_index < 5, "diagnose.y_index", "must index (S, G, Z, g, z)")
    # ephemeris cross-checks
    path = cfg.table_path()
    if path is None:
        for n in names:
            _require(n.capitalize() in PLANET_MU and n.capitalize() != "Mercury", "planets.names",
                     f"{n!r} is not in the analytic model (Venus to Saturn)")
        return
    _require(path.exists(), "ephemeris.table", f"file {path} not found")
    try:
        src = load_table(path)
    except RescrossError as exc:
        raise ConfigError("ephemeris.table", str(exc)) from None
    for n in names:
        _require(n.capitalize() in src.planets, "planets.names", f"{n!r} is not in the ephemeris table")
    lo, hi = src.span
    _require(lo <= cfg.t0 <= hi, "integrator.t0_mjd", f"outside the ephemeris span [{lo}, {hi}]")
    _require(cfg.t1 <= hi, "integrator.span_yr", f"run ends at MJD {cfg.t1} past the ephemeris end {hi}")


# --------------------------------------------------------------------------
# Reference output
# --------------------------------------------------------------------------

_DOC = {
    "run": "output directory and synthetic-fixture seed",
    "constants": "physical constants",
    "ephemeris": "planet source: CSV table (mjd, planet, a, e, i_deg, Omega_deg, omega_deg, ell_deg) "
                 "or the built-in analytic model",
    "planets": "perturbing planets, the resonant one and optional mass-ratio overrides",
    "resonance": "h n + h_prime n_planet = 0",
    "asteroid": "osculating elements at integrator.t0_mjd (au, degrees)",
    "normal_form": "truncation and quadrature of the averaged Hamiltonian",
    "integrator": "Gauss collocation propagation (years unless noted)",
    "ensemble": "phase-shifted full integrations used by 'compare'",
    "diagnose": "resonant averages and jump scans written by 'diagnose'",
}


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + "}"
    return str(v)


def _field_comments(cls):
    """Trailing ``# ...`` comments of the section dataclass source lines."""
    import inspect
    out = {}
    try:
        src = inspect.getsource(cls)
    except OSError:
        return out
    for line in src.splitlines():
        s = line.strip()
        if ":" in s and "#" in s and not s.startswith("#"):
            out[s.split(":", 1)[0].strip()] = s.split("#", 1)[1].strip()
    return out


def reference_text() -> str:
    """All sections with their defaults, as a commented TOML document."""
    cfg = RunConfig()
    lines = ["# rescross run configuration: every key with its default value", ""]
    for name, cls in SECTIONS.items():
        lines.append(f"# {_DOC[name]}")
        lines.append(f"[{name}]")
        comments = _field_comments(cls)
        for f in dataclasses.fields(cls):
            val = _toml_value(getattr(getattr(cfg, name), f.name))
            c = comments.get(f.name)
            lines.append(f"{f.name} = {val}" + (f"    # {c}" if c else ""))
        lines.append("")
    return "\n".join(lines)
