"""Constructed test scenarios: resonant asteroids placed near an orbit crossing.

A crossing orbit is built through a point of the planet's trajectory, then
moved backwards along the secular vector field so that forward propagation
meets the crossing after a chosen lead time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ephemeris import J2000_MJD, FrozenEphemeris, default_model
from .geometry import crossing_orbit
from .hamiltonian import NormalFormConfig
from .kepler import (DAYS_PER_YEAR, GAUSS_K, KeplerianElements, ResonanceSpec, ResonantState,
                     delaunay_to_resonant, keplerian_to_delaunay)
from .propagator import SecularField


def resonant_semimajor_axis(a_planet: float, spec: ResonanceSpec) -> float:
    """Nominal ``a`` with ``h n + h' n' = 0``."""
    ratio = -spec.h_pl / spec.h_ast     # n / n'
    if ratio <= 0:
        raise ValueError("resonance needs opposite-sign integers")
    return a_planet * ratio ** (-2.0 / 3.0)


def crossing_orbit_with_a(planet: KeplerianElements, ell_p: float, a: float, e: float, I: float,
                          branch: int = 0, outbound: bool = True) -> KeplerianElements:
    """Orbit of semimajor axis ``a`` through the planet's point at mean anomaly ``ell_p``."""
    from .kepler import Orbit
    r = float(np.linalg.norm(Orbit.from_elements(planet).position(np.array(ell_p))))
    c = (a * (1 - e * e) / r - 1) / e
    if abs(c) > 1:
        raise ValueError(f"no orbit with a = {a}, e = {e} reaches r = {r:.4f} au")
    f0 = math.acos(c) * (1 if outbound else -1)
    return crossing_orbit(planet, ell_p, e, I, f0, branch)


def state_from_elements(E: KeplerianElements, ell5: float, spec: ResonanceSpec, k=GAUSS_K) -> ResonantState:
    return delaunay_to_resonant(keplerian_to_delaunay(E, k), ell5, spec)


@dataclass
class Scenario:
    """Field, initial state and time span of a constructed run (times in days)."""

    field: SecularField
    initial: ResonantState
    t0: float
    t_cross: float
    crossing_state: ResonantState

    @property
    def spec(self):
        return self.field.nf.spec


def backward_start(field: SecularField, state: ResonantState, t_c: float, lead: float):
    """Linear backward extrapolation ``Y(t_c) - lead * Y'(t_c)``.

    The field is evaluated at the crossing configuration itself; either
    extension gives a start whose forward flow reaches the crossing after
    about ``lead`` days.
    """
    y = state.to_array()
    field.refresh(t_c, y)
    f = field.rhs(t_c, y)
    y0 = y - lead * f
    return ResonantState.from_array(y0, state.S5), t_c - lead


def crossing_scenario(kind: str = "mars", lead_years: float = 2.0, n_max: int = 3, frozen: bool = True,
                      planets=None, e: float = 0.45, I: float = 0.15, ell_p: float = 1.0,
                      sigma: float = 1.0, quad=None) -> Scenario:
    """Resonant asteroid that crosses a planet orbit ``lead_years`` after start.

    ``kind="mars"``: 3:1 resonance with Jupiter, crossing the orbit of Mars
    (non-resonant crossing). ``kind="earth"``: 5:8 resonance with the Earth,
    crossing the orbit of the Earth (resonant crossing).
    """
    if kind == "mars":
        names = planets or ("Mars", "Jupiter")
        resonant, crossed, spec = "Jupiter", "Mars", ResonanceSpec(1, -3)
    elif kind == "earth":
        names = planets or ("Earth", "Mars", "Jupiter")
        resonant, crossed, spec = "Earth", "Earth", ResonanceSpec(8, -5)
    else:
        raise ValueError(f"unknown scenario kind {kind!r}")
    model = default_model(tuple(names))
    eph = FrozenEphemeris(model, J2000_MJD) if frozen else model
    kw = {} if quad is None else {"quad": quad}
    nf = NormalFormConfig(spec, n_max=n_max, **kw)
    field = SecularField(nf, eph, names, resonant)
    t_c = J2000_MJD + lead_years * DAYS_PER_YEAR
    jr = eph.index(resonant)
    a = resonant_semimajor_axis(eph.elements(jr, t_c).a, spec)
    jc = eph.index(crossed)
    E = crossing_orbit_with_a(eph.elements(jc, t_c), ell_p, a, e, I)
    # put sigma at the requested value by choosing the asteroid anomaly
    ell5 = eph.elements(jr, t_c).ell
    E = E.replace(ell=(sigma - spec.h_pl * ell5) / spec.h_ast)
    st = state_from_elements(E, ell5, spec)
    y0, t0 = backward_start(field, st, t_c, lead_years * DAYS_PER_YEAR)
    return Scenario(field=field, initial=y0, t0=t0, t_cross=t_c, crossing_state=st)
