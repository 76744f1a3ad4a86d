"""Gauss collocation integration of the normal form through orbit crossings.

Steps are implicit Runge-Kutta-Gauss collocation steps with fixed-point
stage iteration. Local minima of the orbit distance are tracked along the
solution; when a signed distance changes sign inside a step the step is
shortened to land on the crossing time, the event is logged together with
the jump of the gradient, and the integration continues with the extension
of the vector field from the other side.

Times are in days, as everywhere in the library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly
from scipy.optimize import brentq

from .errors import (BifurcationNearby, CrossingDegenerate, EventAccumulation, NumericalFailure,
                     SmoothingFails)
from .geometry import TwoOrbitConfig, local_minima, refine_minimum
from .hamiltonian import (NormalFormConfig, PlanetContext, critical_phase, gradient_extended,
                          hamiltonian, jump_nonresonant, jump_resonant)
from .kepler import DAYS_PER_YEAR, GAUSS_K, ResonantState, resonant_to_keplerian, wrap_pi
from .quadrature import pair_integrals

# --------------------------------------------------------------------------
# Gauss collocation tableaux
# --------------------------------------------------------------------------


class GaussTableau:
    """Collocation coefficients of the ``s``-stage Gauss method on [0, 1]."""

    def __init__(self, stages: int = 2):
        if stages < 1:
            raise ValueError("at least one stage is needed")
        x, _ = npleg.leggauss(stages)
        self.s = stages
        self.c = 0.5 * (x + 1.0)
        # Lagrange basis on the nodes, as power-series coefficients in theta
        self._basis = []
        for j in range(stages):
            others = np.delete(self.c, j)
            p = nppoly.polyfromroots(others) / np.prod(self.c[j] - others)
            self._basis.append(p)
        self._integrals = [nppoly.polyint(p) for p in self._basis]
        self.A = np.array([[nppoly.polyval(ci, P) for P in self._integrals] for ci in self.c])
        self.b = np.array([nppoly.polyval(1.0, P) for P in self._integrals])

    def weights(self, theta):
        """``B_j(theta)`` with ``u(t + theta dt) = y + dt sum_j B_j K_j``."""
        return np.array([nppoly.polyval(theta, P) for P in self._integrals])

    def dweights(self, theta):
        """Lagrange basis values, giving ``u'(t + theta dt) = sum_j l_j K_j``."""
        return np.array([nppoly.polyval(theta, p) for p in self._basis])


_TABLEAUX = {}


def tableau(stages: int) -> GaussTableau:
    if stages not in _TABLEAUX:
        _TABLEAUX[stages] = GaussTableau(stages)
    return _TABLEAUX[stages]


def _scale(y):
    # actions relative to their size, angles absolute
    sc = np.ones_like(y)
    sc[:3] = np.maximum(np.abs(y[:3]), 1e-12)
    return sc


def rkg_step(f, t, y, dt, stages=2, tol=1e-13, max_iter=50, guess=None):
    """One Gauss collocation step of ``y' = f(t, y)``.

    Stage equations are solved by fixed-point iteration until the stage
    increments change by less than ``tol`` (relative for actions, absolute
    for angles). Returns ``(y_new, K, iterations)`` with ``K`` the stage
    derivatives. Raises :class:`NumericalFailure` after ``max_iter``
    iterations; the caller halves the step.
    """
    tab = tableau(stages)
    y = np.asarray(y, dtype=float)
    if guess is None:
        f0 = np.asarray(f(t, y), dtype=float)
        K = np.tile(f0, (tab.s, 1))
    else:
        K = np.array(guess, dtype=float)
    sc = _scale(y)
    for it in range(1, max_iter + 1):
        Y = y + dt * tab.A @ K
        K_new = np.array([f(t + ci * dt, Yi) for ci, Yi in zip(tab.c, Y)])
        err = np.max(np.abs(dt * (K_new - K)) / sc)
        K = K_new
        if err < tol:
            return y + dt * tab.b @ K, K, it
    raise NumericalFailure(f"stage iteration did not converge in {max_iter} iterations "
                           f"(t = {t / DAYS_PER_YEAR:.6g} yr, dt = {dt / DAYS_PER_YEAR:.3g} yr)")


# --------------------------------------------------------------------------
# Solution containers
# --------------------------------------------------------------------------

@dataclass
class StepRecord:
    """One accepted step and its collocation polynomial."""

    t: float
    dt: float
    y0: np.ndarray
    K: np.ndarray
    stages: int = 2

    @property
    def t1(self):
        return self.t + self.dt

    def state(self, t):
        theta = (t - self.t) / self.dt
        return self.y0 + self.dt * tableau(self.stages).weights(theta) @ self.K

    def derivative(self, t):
        theta = (t - self.t) / self.dt
        return tableau(self.stages).dweights(theta) @ self.K


@dataclass
class CrossingEvent:
    """An orbit crossing met by the solution."""

    t_c: float
    planet: str
    h: int
    sigma_c: float | None
    diff: np.ndarray
    state_at_crossing: ResonantState
    side_before: int
    planet_index: int = 0
    V: np.ndarray | None = None

    @property
    def side_after(self):
        return -self.side_before

    def rate_gap(self):
        """Expected jump (after minus before) of ``(S, G, Z, sigma, g, z)'``.

        ``diff`` is minus-side minus plus-side of ``dH/dy``; crossing from the
        plus side swaps to the minus field, and vice versa.
        """
        dS, dG, dZ, dg, dz = self.diff
        gap = np.array([0.0, -dg, -dz, dS, dG, dZ])
        return gap if self.side_before > 0 else -gap


@dataclass
class GeneralizedSolution:
    """Dense generalized solution: steps, samples and crossing events."""

    steps: list
    events: list
    spec: object
    S5: float = 0.0
    minima_keys: dict = field(default_factory=dict)

    @property
    def t(self):
        return np.array([self.steps[0].t] + [s.t1 for s in self.steps]) if self.steps else np.zeros(0)

    @property
    def y(self):
        if not self.steps:
            return np.zeros((0, 6))
        return np.array([self.steps[0].y0] + [s.state(s.t1) for s in self.steps])

    @property
    def samples(self):
        return [(t, ResonantState.from_array(y, self.S5)) for t, y in zip(self.t, self.y)]

    def _step(self, t, side):
        ends = np.array([s.t1 for s in self.steps])
        if not self.steps[0].t <= t <= ends[-1]:
            raise ValueError(f"t = {t} outside the solution span")
        i = int(np.searchsorted(ends, t, side="left" if side == "left" else "right"))
        return self.steps[min(i, len(self.steps) - 1)]

    def __call__(self, t, side="left"):
        """State at ``t``; at step boundaries ``side`` picks the adjacent step."""
        return self._step(t, side).state(t)

    def derivative(self, t, side="left"):
        return self._step(t, side).derivative(t)


# --------------------------------------------------------------------------
# Vector field with minimum tracking
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegratorConfig:
    """Step control of the generalized propagation (days unless noted)."""

    step: float = 0.5 * DAYS_PER_YEAR
    min_step: float = 1e-3 * DAYS_PER_YEAR
    stages: int = 2
    fp_tol: float = 1e-13
    max_iter: int = 50
    crossing_tol: float = 1e-10        # au
    monitor_distance: float = 0.3      # au; minima closer than this are watched
    approach_steps: int = 4            # short steps before a crossing
    stage_correction: bool = True
    accumulation_factor: float = 10.0

    def __post_init__(self):
        if not 0 < self.min_step <= self.step:
            raise ValueError("need 0 < min_step <= step")


def _vdist(V1, V2):
    return float(np.max(np.abs(wrap_pi(np.asarray(V1) - np.asarray(V2)))))


class SecularField:
    """Hamiltonian vector field of the normal form with tracked minima.

    ``ephemeris`` supplies the planet orbits, ``planets`` names the
    perturbers and ``resonant`` the planet of the resonance. Minima of each
    planet are carried from step to step under persistent integer keys.
    """

    def __init__(self, nf: NormalFormConfig, ephemeris, planets, resonant, k=GAUSS_K):
        self.nf = nf
        self.eph = ephemeris
        self.names = [ephemeris.planets[ephemeris.index(p)] for p in planets]
        self.idx = [ephemeris.index(p) for p in planets]
        res_idx = ephemeris.index(resonant)
        if res_idx not in self.idx:
            raise ValueError(f"resonant planet {resonant} is not among the perturbers")
        self.res_pos = self.idx.index(res_idx)
        self.k = k
        self.tracked = [dict() for _ in self.idx]   # key -> MinimumPoint
        self._next_key = [0 for _ in self.idx]
        self.nodes = [None for _ in self.idx]
        self.evaluations = 0

    # planets ---------------------------------------------------------------
    def planets_at(self, t, frozen_nodes=True):
        out = []
        for pos, j in enumerate(self.idx):
            quad = None
            if frozen_nodes and self.nodes[pos] is not None:
                quad = replace(self.nf.quad, nodes=self.nodes[pos], adaptive=False)
            out.append(PlanetContext(elements=self.eph.elements(j, t), mu=float(self.eph.mu[j]),
                                     resonant=pos == self.res_pos,
                                     mean_motion=self.eph.mean_motion(j), name=self.names[pos],
                                     quad=quad))
        return out

    def state(self, y, S5=0.0):
        return ResonantState.from_array(y, S5)

    def config(self, pos, t, y):
        st = self.state(y)
        E = resonant_to_keplerian(st, self.nf.spec, self.k)
        j = self.idx[pos]
        return TwoOrbitConfig(E, self.eph.elements(j, t), float(self.eph.mu[j]))

    # minima ----------------------------------------------------------------
    def refresh(self, t, y):
        """Full critical-point search; keys of continued minima are kept."""
        for pos in range(len(self.idx)):
            cfg = self.config(pos, t, y)
            found = local_minima(cfg)
            old = self.tracked[pos]
            new = {}
            free = list(range(len(found)))
            for key, mp in sorted(old.items(), key=lambda kv: kv[0]):
                if not free:
                    break
                dist = [_vdist(found[i].V, mp.V) for i in free]
                i = int(np.argmin(dist))
                if dist[i] < 0.3:
                    new[key] = found[free.pop(i)]
            for i in free:
                new[self._next_key[pos]] = found[i]
                self._next_key[pos] += 1
            self.tracked[pos] = dict(sorted(new.items()))
            # freeze the far-grid size for the step
            harm = self.nf.harmonics(pos == self.res_pos)
            res = pair_integrals(cfg, harm, self.nf.quad, minima=list(self.tracked[pos].values()),
                                 k=self.k, h_ast=self.nf.spec.h_ast)
            self.nodes[pos] = res.layout.nodes

    def minima_at(self, t, y):
        """Tracked minima continued to ``(t, y)``: list of ``{key: MinimumPoint}``."""
        out = []
        for pos in range(len(self.idx)):
            cfg = self.config(pos, t, y)
            cur = {}
            for key, mp in self.tracked[pos].items():
                cur[key] = refine_minimum(cfg, mp.V, max_shift=0.5)
            out.append(cur)
        return out

    # field -------------------------------------------------------------------
    def gradient(self, t, y, sides=None, corrections=None, minima=None):
        """``dH/d(S, G, Z, sigma, g, z)`` on the requested sides.

        ``sides`` maps ``(pos, key)`` to +1/-1 for active minima (missing keys
        follow the sign of ``d_tilde``). ``corrections`` maps ``(pos, key)`` to
        the side just left: the field is evaluated on that side and shifted
        by the jump, as in the stage correction of the crossing step.
        """
        sides = sides or {}
        corrections = corrections or {}
        self.evaluations += 1
        state = self.state(y)
        planets = self.planets_at(t)
        mins = minima if minima is not None else self.minima_at(t, y)
        lists, side_pos = [], {}
        for pos, cur in enumerate(mins):
            keys = list(cur)
            lists.append([cur[k] for k in keys])
            for i, key in enumerate(keys):
                s = corrections.get((pos, key), sides.get((pos, key)))
                if s is not None:
                    side_pos[(pos, i)] = s
        sample, terms = gradient_extended(state, planets, self.nf, side=side_pos, k=self.k,
                                          minima=lists, details=True)
        grad = sample.value.copy()
        for (pos, key), s_old in corrections.items():
            term = terms[pos]
            if term is None:
                continue
            i = list(mins[pos]).index(key)
            item = next((it for it in term.model if it["h"] == i), None)
            if item is None:
                continue
            diff = self.jump(pos, t, y, item["minimum"], item["geometry"])
            # extension of the side left, moved to the other side
            grad[[0, 1, 2, 4, 5]] += diff if s_old > 0 else -diff
        return grad

    def jump(self, pos, t, y, mp, gradients=None):
        """Minus-side minus plus-side of ``dH/dy`` at a minimum of planet ``pos``."""
        cfg = self.config(pos, t, y)
        spec = self.nf.spec
        if pos == self.res_pos:
            return jump_resonant(cfg, y[3], mp, self.nf.n_max, spec, self.k, gradients=gradients)
        return jump_nonresonant(cfg, mp, self.k, spec.h_ast, gradients=gradients)

    def rhs(self, t, y, sides=None, corrections=None):
        g = self.gradient(t, y, sides, corrections)
        return np.array([-g[3], -g[4], -g[5], g[0], g[1], g[2]])

    def energy(self, t, y):
        planets = self.planets_at(t, frozen_nodes=False)
        return hamiltonian(self.state(y), planets, self.nf, self.k)


# --------------------------------------------------------------------------
# Crossing detection
# --------------------------------------------------------------------------

def detect_crossing(step: StepRecord, field: SecularField, start_minima, end_minima,
                    tol=1e-10, monitor=0.3):
    """Earliest sign change of a tracked ``d_tilde`` inside ``step``.

    Returns ``(t_c, pos, key)`` or ``None``. The crossing time is located on
    the dense output by bracketed root finding.
    """
    best = None
    for pos, (m0, m1) in enumerate(zip(start_minima, end_minima)):
        for key, a in m0.items():
            b = m1.get(key)
            if b is None or min(abs(a.d), abs(b.d)) > monitor:
                continue
            da, db = a.d_tilde, b.d_tilde
            if not (math.isfinite(da) and math.isfinite(db)):
                raise CrossingDegenerate(f"planet {field.names[pos]}: parallel tangents near crossing")
            if abs(da) < 10 * tol or da * db > 0:
                continue
            guess = {"V": a.V}

            def g(theta, pos=pos, guess=guess):
                tt = step.t + theta * step.dt
                cfg = field.config(pos, tt, step.state(tt))
                mp = refine_minimum(cfg, guess["V"], max_shift=0.5)
                guess["V"] = mp.V
                return mp.d_tilde

            try:
                theta = brentq(g, 0.0, 1.0, xtol=1e-15, maxiter=200)
                t_c = step.t + theta * step.dt
            except (ValueError, RuntimeError, BifurcationNearby) as exc:
                raise NumericalFailure(f"crossing root finding failed: {exc}") from exc
            if best is None or t_c < best[0]:
                best = (t_c, pos, key)
    return best


def linear_crossing(t0, d0, t1, d1):
    """Root of the line through ``(t0, d0)`` and ``(t1, d1)``, or None."""
    if d0 * d1 > 0:
        return None
    return t0 - d0 * (t1 - t0) / (d1 - d0)


# --------------------------------------------------------------------------
# Generalized propagation
# --------------------------------------------------------------------------

def _sign(x):
    return 1 if x >= 0 else -1


def propagate_generalized(field: SecularField, initial: ResonantState, t0: float, t1: float,
                          config: IntegratorConfig = IntegratorConfig(), callback=None) -> GeneralizedSolution:
    """Generalized solution of the normal form from ``t0`` to ``t1`` (days, ``t1 > t0``).

    Between crossings this is a plain collocation integration. A step that
    contains a sign change of a tracked ``d_tilde`` is rejected; the
    integration approaches the crossing with short steps, lands on it and
    continues with the extension from the opposite side.
    """
    if not t1 > t0:
        raise ValueError("propagation needs t1 > t0")
    cf = config
    tab = tableau(cf.stages)
    y = initial.to_array()
    t = float(t0)
    field.refresh(t, y)
    mins = field.minima_at(t, y)
    for pos, cur in enumerate(mins):
        for mp in cur.values():
            if abs(mp.d) < cf.crossing_tol:
                raise ValueError(f"initial configuration lies on a crossing with {field.names[pos]}")
    sol = GeneralizedSolution(steps=[], events=[], spec=field.nf.spec, S5=initial.S5)
    sides = {}
    corrections = {}
    dt = cf.step
    last_event = -math.inf
    guess_poly, guess_shift = None, None

    while t < t1 - 1e-9 * cf.min_step:
        # sides of active minima: sign of d_tilde, or the stored side right at a crossing
        for pos, cur in enumerate(mins):
            for key, mp in cur.items():
                if abs(mp.d) <= field.nf.switch_distance and (
                        abs(mp.d_tilde) > 10 * cf.crossing_tol or (pos, key) not in sides):
                    sides[(pos, key)] = _sign(mp.d_tilde)
        cur_sides = dict(sides)
        corr = dict(corrections)

        def f(tt, yy):
            return field.rhs(tt, yy, cur_sides, corr)

        def attempt(h):
            guess = None
            if guess_poly is not None:
                guess = np.array([guess_poly.derivative(t + ci * h) for ci in tab.c])
                if guess_shift is not None:
                    guess = guess + guess_shift
            while True:
                try:
                    y_new, K, _ = rkg_step(f, t, y, h, cf.stages, cf.fp_tol, cf.max_iter, guess)
                    return StepRecord(t=t, dt=h, y0=y.copy(), K=K, stages=cf.stages), y_new
                except (NumericalFailure, BifurcationNearby):
                    h *= 0.5
                    guess = None
                    if h < 0.5 * cf.min_step:
                        raise

        h = min(dt, t1 - t)
        rec, y_new = attempt(h)
        try:
            end_mins = field.minima_at(rec.t1, y_new)
        except BifurcationNearby:
            field.refresh(rec.t1, y_new)
            end_mins = field.minima_at(rec.t1, y_new)
        found = detect_crossing(rec, field, mins, end_mins, cf.crossing_tol, cf.monitor_distance)
        event = None
        if found is not None:
            t_c, pos, key = found
            approach = cf.approach_steps * cf.min_step
            if t_c - t > 1.5 * approach:
                dt = t_c - approach - t
                continue
            rec, y_new = attempt(t_c - t)
            rec, y_new, mp = _land(field, rec, y_new, pos, key, mins[pos][key].V, f, cf)
            end_mins = field.minima_at(rec.t1, y_new)
            event = (pos, key, mp)

        sol.steps.append(rec)
        t, y = rec.t1, y_new
        guess_poly, guess_shift = rec, None
        corrections = {}
        field.refresh(t, y)
        mins = field.minima_at(t, y)
        if event is None:
            dt = min(cf.step, 2 * rec.dt)
            continue
        pos, key, mp = event
        if t - last_event < cf.accumulation_factor * cf.min_step:
            raise EventAccumulation(f"crossings at t = {last_event / DAYS_PER_YEAR:.6f} and "
                                    f"{t / DAYS_PER_YEAR:.6f} yr")
        ev = _make_event(field, t, y, pos, key, mp, sides, sol.S5)
        sol.events.append(ev)
        if callback is not None:
            callback(ev)
        sides[(pos, key)] = ev.side_after
        if cf.stage_correction:
            corrections = {(pos, key): ev.side_before}
        guess_shift = ev.rate_gap()
        last_event = t
        dt = cf.min_step
    sol.minima_keys = {field.names[p]: dict(field.tracked[p]) for p in range(len(field.idx))}
    return sol


def propagate_plain(field: SecularField, initial: ResonantState, t0: float, t1: float, steps: int,
                    config: IntegratorConfig = IntegratorConfig()):
    """Fixed-step collocation run on a crossing-free arc, in either time direction.

    Returns ``(t, y)`` arrays with ``steps + 1`` rows. Raises
    :class:`NumericalFailure` if the ``d_tilde`` of a minimum closer than
    ``config.monitor_distance`` changes sign, since the arc then meets a crossing and needs :func:`propagate_generalized`.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    h = (t1 - t0) / steps
    y = initial.to_array()
    t = float(t0)
    field.refresh(t, y)
    mins = field.minima_at(t, y)
    ts, ys = [t], [y.copy()]
    K = None
    for i in range(steps):
        y, K, _ = rkg_step(field.rhs, t, y, h, config.stages, config.fp_tol, config.max_iter, K)
        t = t0 + (i + 1) * h
        field.refresh(t, y)
        new = field.minima_at(t, y)
        for pos, (m0, m1) in enumerate(zip(mins, new)):
            for key, a in m0.items():
                b = m1.get(key)
                # far minima flip sign where the tangents turn parallel; only near ones are crossings
                if b is None or min(a.d, b.d) > config.monitor_distance:
                    continue
                if a.d_tilde * b.d_tilde < 0:
                    raise NumericalFailure(f"crossing with {field.names[pos]} inside a plain arc "
                                           f"near t = {t / DAYS_PER_YEAR:.6f} yr")
        mins = new
        ts.append(t)
        ys.append(y.copy())
    return np.array(ts), np.array(ys)


def _land(field, rec, y_new, pos, key, V0, f, cf):
    """Adjust the last step length by Newton's method until ``|d_tilde| < crossing_tol``."""
    cfg = field.config(pos, rec.t1, y_new)
    mp = refine_minimum(cfg, V0, max_shift=0.5)
    for _ in range(10):
        if abs(mp.d_tilde) < cf.crossing_tol:
            return rec, y_new, mp
        eps = 1e-4 * rec.dt
        vals = []
        for tt in (rec.t1 - eps, rec.t1 - 2 * eps):
            c = field.config(pos, tt, rec.state(tt))
            vals.append(refine_minimum(c, mp.V, max_shift=0.5).d_tilde)
        slope = (3 * mp.d_tilde - 4 * vals[0] + vals[1]) / (2 * eps)
        if slope == 0 or not math.isfinite(slope):
            break
        h = rec.dt - mp.d_tilde / slope
        y_new, K, _ = rkg_step(f, rec.t, rec.y0, h, cf.stages, cf.fp_tol, cf.max_iter, rec.K)
        rec = StepRecord(t=rec.t, dt=h, y0=rec.y0, K=K, stages=cf.stages)
        mp = refine_minimum(field.config(pos, rec.t1, y_new), mp.V, max_shift=0.5)
    if abs(mp.d_tilde) >= cf.crossing_tol:
        raise NumericalFailure(f"could not land on the crossing: |d_tilde| = {abs(mp.d_tilde):.2e} au")
    return rec, y_new, mp


def _make_event(field, t, y, pos, key, mp, sides, S5):
    if not mp.nondegenerate:
        raise CrossingDegenerate(f"degenerate crossing with {field.names[pos]} at t = "
                                 f"{t / DAYS_PER_YEAR:.6f} yr")
    try:
        diff = field.jump(pos, t, y, mp)
    except SmoothingFails as exc:
        raise CrossingDegenerate(str(exc)) from exc
    side_before = sides.get((pos, key))
    if side_before is None:
        raise NumericalFailure("crossing of a minimum outside the switch distance")
    sigma_c = critical_phase(mp, field.nf.spec) if pos == field.res_pos else None
    return CrossingEvent(t_c=t, planet=field.names[pos], h=key, sigma_c=sigma_c, diff=diff,
                         state_at_crossing=ResonantState.from_array(y, S5), side_before=side_before,
                         planet_index=pos, V=mp.V.copy())


# --------------------------------------------------------------------------
# Distance monitoring
# --------------------------------------------------------------------------

@dataclass
class DistanceHistory:
    """Signed distance of one tracked minimum along a solution."""

    t: np.ndarray
    d_tilde: np.ndarray
    event_times: np.ndarray
    left_rate: np.ndarray
    right_rate: np.ndarray
    truncated: bool = False


def _onesided(f, t, delta, side):
    """Second-order one-sided difference of ``f`` at ``t``; ``side`` = -1 left, +1 right."""
    s = side
    return s * (-3 * f(t) + 4 * f(t + s * delta) - f(t + 2 * s * delta)) / (2 * delta)


def distance_history(sol: GeneralizedSolution, field: SecularField, planet, key=None, times=None,
                     fd_fraction=0.05):
    """``d_tilde`` of minimum ``key`` of ``planet`` sampled on the dense output.

    At each event of that minimum the left and right time derivatives are
    estimated by one-sided differences inside the adjacent steps.
    """
    pos = field.names.index(planet) if isinstance(planet, str) else int(planet)
    if key is None:
        evs = [e for e in sol.events if e.planet_index == pos]
        key = evs[0].h if evs else 0
    if times is None:
        times = sol.t
    V = None
    for ev in sol.events:
        if ev.planet_index == pos and ev.h == key:
            V = ev.V
            break
    if V is None:
        cur = field.tracked[pos].get(key)
        V = cur.V if cur is not None else np.array([0.0, 0.0])

    truncated = False
    guess = np.array(V, dtype=float)

    def dist_at(t, side="left", V0=None):
        cfg = field.config(pos, t, sol(t, side))
        return refine_minimum(cfg, guess if V0 is None else V0, max_shift=0.5)

    # walk outwards from the reference point so that the continuation follows one branch
    order = np.argsort(np.abs(np.asarray(times) - (sol.events[0].t_c if sol.events else times[0])))
    vals = np.full(len(times), np.nan)
    for i in order:
        try:
            mp = dist_at(times[i])
            vals[i] = mp.d_tilde
        except BifurcationNearby:
            truncated = True
    ev_t, left, right = [], [], []
    for ev in sol.events:
        if ev.planet_index != pos or ev.h != key:
            continue
        before = sol._step(ev.t_c, "left")
        after = sol._step(ev.t_c, "right")
        dl = fd_fraction * before.dt
        dr = fd_fraction * after.dt

        def fl(t):
            return dist_at(t, "left", ev.V).d_tilde

        def fr(t):
            return dist_at(t, "right", ev.V).d_tilde
        ev_t.append(ev.t_c)
        left.append(_onesided(fl, ev.t_c, dl, -1))
        right.append(_onesided(fr, ev.t_c, dr, +1))
    return DistanceHistory(t=np.asarray(times, float), d_tilde=vals, event_times=np.array(ev_t),
                           left_rate=np.array(left), right_rate=np.array(right), truncated=truncated)


def state_rates(sol: GeneralizedSolution, t_c: float):
    """Left and right derivatives of the state at ``t_c`` from the collocation polynomials."""
    return sol.derivative(t_c, "left"), sol.derivative(t_c, "right")
