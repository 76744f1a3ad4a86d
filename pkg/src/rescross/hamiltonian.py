"""Resonant normal form of the averaged Hamiltonian and its gradient.

``H = H0(S) + sum_j c_j J_j + 2 c_5 sum_{n>=1} Re(conj(K_n) exp(i n sigma))``

with ``c_j = -k^2 mu_j / (2 pi)^2``, ``J_j`` the torus integral of ``1/d_j``
and ``K_n = I^c_n + i I^s_n`` the resonant coefficients of the resonant
planet (direct plus indirect part). Gradients are ordered like the state,
``(S, G, Z, sigma, g, z)``.

Near an orbit crossing the ``y``-derivatives of ``J`` and ``K_n`` are
replaced by two Lipschitz extensions (``plus`` continues the branch valid
for ``d_tilde > 0``, ``minus`` the one valid for ``d_tilde < 0``). They are
assembled from a smooth remainder, differentiated numerically, plus the
closed-form disc integral of the quadratic model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BifurcationNearby, ContractViolation
from .geometry import (GeometryGradients, TwoOrbitConfig, fd_steps, geometry_gradients, local_minima,
                       refine_minimum, richardson_central)
from .kepler import (GAUSS_K, TWO_PI, KeplerianElements, ResonanceSpec, ResonantState,
                     resonant_to_keplerian)
from .quadrature import (SCALAR, Harmonics, QuadratureConfig, extraction_gradient_sided,
                         extraction_integral, indirect_integrals, pair_integrals)

SIDES = {"plus": 1, "minus": -1, 1: 1, -1: -1}


def dirichlet_kernel(N, x):
    """``sin((N + 1/2) x) / sin(x/2)``, equal to ``2N + 1`` at multiples of 2pi."""
    N = np.asarray(N)
    x = np.asarray(x, dtype=float)
    xr = np.mod(x + math.pi, TWO_PI) - math.pi
    half = np.sin(0.5 * xr)
    small = np.abs(xr) < 1e-6
    safe = np.where(small, 1.0, half)
    regular = np.sin((N + 0.5) * xr) / safe
    # series about x = 0 (even in x)
    M = N * (N + 1)
    series = (2 * N + 1) * (1 - M * xr**2 / 6)
    out = np.where(small, series, regular)
    return out if out.ndim else float(out)


def dirichlet_bracket(N, x):
    """``sum_{n=1}^N cos(n x) + 1/2`` by direct summation."""
    n = np.arange(1, int(N) + 1)
    x = np.asarray(x, dtype=float)
    return np.cos(np.multiply.outer(x, n)).sum(axis=-1) + 0.5


@dataclass(frozen=True)
class PlanetContext:
    """A perturbing planet at the evaluation time."""

    elements: KeplerianElements
    mu: float
    resonant: bool = False
    mean_motion: float = 0.0
    name: str = ""
    quad: QuadratureConfig | None = None


@dataclass(frozen=True)
class NormalFormConfig:
    """Truncation and quadrature settings of the normal form."""

    spec: ResonanceSpec
    n_max: int = 3
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    fd_step: float = 1e-6
    fd_offsets: tuple = (-1, 1)

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")

    @property
    def switch_distance(self):
        return self.quad.switch_distance

    @property
    def extraction_radius(self):
        return self.quad.extraction_radius

    def harmonics(self, resonant: bool) -> Harmonics:
        if not resonant:
            return SCALAR
        return Harmonics(self.spec.h_ast, self.spec.h_pl, self.n_max)


@dataclass(frozen=True)
class GradientSample:
    """Gradient of the normal form, ordered ``(S, G, Z, sigma, g, z)``."""

    value: np.ndarray
    side: str
    active_crossings: list


def h0_value_and_gradient(state: ResonantState, spec: ResonanceSpec, n5: float, k=GAUSS_K):
    """Keplerian part ``-k^4/(2 (h S)^2) + n5 (h5 S + S5/h)`` and its S-derivative."""
    if not state.S > 0:
        raise ValueError(f"S must be positive, got {state.S}")
    h, h5 = spec.h_ast, spec.h_pl
    L = h * state.S
    value = -k**4 / (2 * L * L) + n5 * (h5 * state.S + state.S5 / h)
    return value, h * k**4 / L**3 + n5 * h5


def _config(state: ResonantState, planet: PlanetContext, spec, k) -> TwoOrbitConfig:
    return TwoOrbitConfig(resonant_to_keplerian(state, spec, k), planet.elements, planet.mu)


def averaged_term(cfg: TwoOrbitConfig, quad: QuadratureConfig = QuadratureConfig(), minima=None):
    """``(1/(2 pi)^2) * integral of 1/d`` over the torus of anomalies."""
    res = pair_integrals(cfg, SCALAR, quad, minima=minima)
    return float(res.values[0].real) / TWO_PI**2


def resonant_coeffs_all(cfg: TwoOrbitConfig, spec: ResonanceSpec, n_max: int,
                        quad: QuadratureConfig = QuadratureConfig(), minima=None, k=GAUSS_K):
    """``(I_c, I_s)`` arrays for ``n = 1..n_max`` including the indirect part."""
    harm = Harmonics(spec.h_ast, spec.h_pl, n_max)
    res = pair_integrals(cfg, harm, quad, minima=minima, k=k, h_ast=spec.h_ast)
    ind, _ = indirect_integrals(cfg, harm, quad, k=k, h_ast=spec.h_ast)
    K = res.values + ind
    return K.real[1:].copy(), K.imag[1:].copy()


def resonant_coeffs(cfg: TwoOrbitConfig, spec: ResonanceSpec, n: int,
                    quad: QuadratureConfig = QuadratureConfig(), minima=None, k=GAUSS_K):
    """``(I_c, I_s)`` of harmonic ``n >= 1``."""
    if n < 1:
        raise ValueError("harmonic index must be >= 1")
    Ic, Is = resonant_coeffs_all(cfg, spec, n, quad, minima, k)
    return float(Ic[-1]), float(Is[-1])


def _assemble_value(state, planets, nf, k, coeffs):
    """Energy from per-planet integrals ``coeffs[j] = K`` (complex, n = 0..)."""
    n5 = next((p.mean_motion for p in planets if p.resonant), 0.0)
    H, _ = h0_value_and_gradient(state, nf.spec, n5, k)
    for p, K in zip(planets, coeffs):
        c = -k * k * p.mu / TWO_PI**2
        H += c * K[0].real
        if p.resonant and nf.n_max > 0:
            n = np.arange(1, nf.n_max + 1)
            H += 2 * c * np.sum((np.conj(K[1:]) * np.exp(1j * n * state.sigma)).real)
    return float(H)


def hamiltonian(state: ResonantState, planets, nf: NormalFormConfig, k=GAUSS_K, minima=None):
    """Value of the truncated normal form."""
    coeffs = []
    for j, p in enumerate(planets):
        cfg = _config(state, p, nf.spec, k)
        harm = nf.harmonics(p.resonant)
        res = pair_integrals(cfg, harm, _quad(p, nf), minima=None if minima is None else minima[j],
                             k=k, h_ast=nf.spec.h_ast)
        K = res.values.copy()
        if p.resonant:
            K += indirect_integrals(cfg, harm, _quad(p, nf), k=k, h_ast=nf.spec.h_ast)[0]
        coeffs.append(K)
    return _assemble_value(state, planets, nf, k, coeffs)


def _assemble_gradient(state, planets, nf, k, coeffs, grads):
    n5 = next((p.mean_motion for p in planets if p.resonant), 0.0)
    _, dS = h0_value_and_gradient(state, nf.spec, n5, k)
    dy = np.zeros(5)
    dsigma = 0.0
    for p, K, dK in zip(planets, coeffs, grads):
        c = -k * k * p.mu / TWO_PI**2
        dy += c * dK[:, 0].real
        if p.resonant and nf.n_max > 0:
            n = np.arange(1, nf.n_max + 1)
            e = np.exp(1j * n * state.sigma)
            dy += 2 * c * (np.conj(dK[:, 1:]) * e).real.sum(axis=1)
            dsigma += 2 * c * np.sum((1j * n * np.conj(K[1:]) * e).real)
    grad = np.empty(6)
    grad[0] = dS + dy[0]
    grad[1], grad[2] = dy[1], dy[2]
    grad[3] = dsigma
    grad[4], grad[5] = dy[3], dy[4]
    return grad


def _minima_for(cfg, minima, j):
    if minima is None or minima[j] is None:
        return local_minima(cfg)
    return minima[j]


def _quad(p, nf):
    return nf.quad if p.quad is None else p.quad


def _regular_planet(cfg, p, nf, k, mins):
    harm = nf.harmonics(p.resonant)
    h_ast = nf.spec.h_ast
    res = pair_integrals(cfg, harm, _quad(p, nf), minima=mins, gradient=True, k=k, h_ast=h_ast,
                         extract_below=-1.0)
    K, dK = res.values.copy(), res.grad.copy()
    if p.resonant:
        iv, ig = indirect_integrals(cfg, harm, _quad(p, nf), gradient=True, k=k, h_ast=h_ast)
        K += iv
        dK += ig
    return K, dK


def active_minima(mins, switch_distance):
    return [i for i, mp in enumerate(mins) if abs(mp.d) <= switch_distance]


def gradient_regular(state: ResonantState, planets, nf: NormalFormConfig, k=GAUSS_K,
                     minima=None, check=True) -> np.ndarray:
    """Gradient by differentiation under the integral sign.

    Valid away from crossings; raises :class:`ContractViolation` when a
    local minimum of some planet lies within the switch distance (unless
    ``check`` is false, which the oracle tests use).
    """
    coeffs, grads = [], []
    for j, p in enumerate(planets):
        cfg = _config(state, p, nf.spec, k)
        mins = _minima_for(cfg, minima, j)
        if check and active_minima(mins, nf.switch_distance):
            raise ContractViolation(
                f"planet {p.name or j}: orbit distance {min(m.d for m in mins):.3e} au "
                f"within switch distance {nf.switch_distance} au")
        K, dK = _regular_planet(cfg, p, nf, k, mins)
        coeffs.append(K)
        grads.append(dK)
    return _assemble_gradient(state, planets, nf, k, coeffs, grads)


# --------------------------------------------------------------------------
# Extensions through the crossing set
# --------------------------------------------------------------------------

@dataclass
class ExtendedPlanetTerm:
    """Pieces of the extended gradient of one planet's integrals."""

    values: np.ndarray            # K_n at the configuration
    grad_remainder: np.ndarray    # (5, m) derivative of the smooth remainder
    model: list                   # per active minimum: dict of model-term data
    indirect: np.ndarray | None

    def gradient(self, sides) -> np.ndarray:
        g = self.grad_remainder.copy()
        for item, side in zip(self.model, sides):
            g += item["dfh"] * item["Phi"] + np.outer(item["dPhi"][side], item["fh"])
        if self.indirect is not None:
            g += self.indirect
        return g


def _extended_planet(cfg: TwoOrbitConfig, p: PlanetContext, nf: NormalFormConfig, k, mins, active):
    harm = nf.harmonics(p.resonant)
    h_ast = nf.spec.h_ast
    quad = _quad(p, nf)
    base = pair_integrals(cfg, harm, quad, minima=mins, k=k, h_ast=h_ast,
                          extract_below=nf.switch_distance)
    y = cfg.y(k, h_ast)
    steps = fd_steps(y, nf.fd_step)
    rem = {}
    tables = []
    for i in range(5):
        row = {}
        rrow = {}
        for m in nf.fd_offsets:
            yd = y.copy()
            yd[i] += m * steps[i]
            cfg_d = cfg.displaced(yd, k, h_ast)
            mins_d = [refine_minimum(cfg_d, mp.V, max_shift=0.05) for mp in mins]
            for a, b in zip(mins, mins_d):
                if (abs(a.d) <= nf.switch_distance) != (abs(b.d) <= nf.switch_distance) and \
                        abs(abs(a.d) - nf.switch_distance) > 1e-3 * nf.switch_distance:
                    raise BifurcationNearby("active set changed inside the stencil")
            r = pair_integrals(cfg_d, harm, quad, minima=mins_d, layout=base.layout, k=k,
                               h_ast=h_ast)
            rrow[m] = r.remainder
            row[m] = (cfg_d, mins_d)
        rem[i] = rrow
        tables.append(row)
    grad_rem = np.array([richardson_central(rem[i], steps[i]) for i in range(5)])
    model = []
    orders = harm.orders
    for h in base.extracted:
        mp = mins[h]
        shape = base.layout.shapes[h]
        table = [{m: (row[m][0], row[m][1][h]) for m in row} for row in tables]
        gg = geometry_gradients(cfg, mp, k, h_ast, displaced=(steps, table))
        fh = harm.factors(mp.V)
        dphase = harm.h * gg.V[:, 0] + harm.h_prime * gg.V[:, 1]
        dfh = np.outer(dphase, 1j * orders * fh)
        Phi = extraction_integral(mp.d, mp.det_A, shape.r)
        dPhi = {s: extraction_gradient_sided(mp.d_tilde, mp.det_A, shape.r, s, gg.d_tilde,
                                             gg.inv_sqrt_det) for s in (1, -1)}
        model.append(dict(h=h, fh=fh, dfh=dfh, Phi=Phi, dPhi=dPhi, geometry=gg, minimum=mp, r=shape.r))
    ind = None
    values = base.values.copy()
    if p.resonant:
        iv, ind = indirect_integrals(cfg, harm, quad, gradient=True, k=k, h_ast=h_ast)
        values += iv
    return ExtendedPlanetTerm(values=values, grad_remainder=grad_rem, model=model, indirect=ind)


def _resolve_side(side, j, h, mp):
    if isinstance(side, dict):
        side = side.get((j, h), None)
        if side is None:
            side = 1 if mp.d_tilde >= 0 else -1
    elif callable(side):
        side = side(j, h)
    return SIDES[side]


def gradient_extended(state: ResonantState, planets, nf: NormalFormConfig, side="plus", k=GAUSS_K,
                      minima=None, details=False):
    """Lipschitz extension of the gradient near crossings.

    ``side`` is ``"plus"``/``"minus"`` for every active crossing, or a dict
    ``{(planet position, minimum index): side}`` (missing keys follow the
    sign of ``d_tilde``). Planets without a minimum inside the switch
    distance contribute their regular gradient.
    """
    coeffs, grads, active, terms = [], [], [], []
    for j, p in enumerate(planets):
        cfg = _config(state, p, nf.spec, k)
        mins = _minima_for(cfg, minima, j)
        act = active_minima(mins, nf.switch_distance)
        if not act:
            K, dK = _regular_planet(cfg, p, nf, k, mins)
            terms.append(None)
        else:
            term = _extended_planet(cfg, p, nf, k, mins, act)
            sides = [_resolve_side(side, j, item["h"], item["minimum"]) for item in term.model]
            K, dK = term.values, term.gradient(sides)
            active.extend((j, item["h"]) for item in term.model)
            terms.append(term)
        coeffs.append(K)
        grads.append(dK)
    value = _assemble_gradient(state, planets, nf, k, coeffs, grads)
    label = side if isinstance(side, str) else "mixed"
    sample = GradientSample(value=value, side=label if active else "regular", active_crossings=active)
    if details:
        return sample, terms
    return sample


# --------------------------------------------------------------------------
# Jump formulas
# --------------------------------------------------------------------------

def _bracket(mp, gg: GeometryGradients):
    return gg.inv_sqrt_det * mp.d_tilde + gg.d_tilde / math.sqrt(mp.det_A)


def _minimum(cfg, h):
    if isinstance(h, (int, np.integer)):
        return local_minima(cfg)[h]
    return h


def jump_nonresonant(cfg: TwoOrbitConfig, h, k=GAUSS_K, h_ast=1, gradients=None) -> np.ndarray:
    """Minus-side minus plus-side extension of ``dH/dy`` for a non-resonant planet.

    ``h`` is a minimum index of ``cfg`` or a :class:`MinimumPoint`.
    """
    mp = _minimum(cfg, h)
    gg = gradients if gradients is not None else geometry_gradients(cfg, mp, k, h_ast)
    return -(cfg.mu_prime * k * k / math.pi) * _bracket(mp, gg)


def critical_phase(mp, spec: ResonanceSpec) -> float:
    """``sigma_c = h l_h + h' l'_h`` at a minimum point."""
    return float(np.mod(spec.h_ast * mp.V[0] + spec.h_pl * mp.V[1], TWO_PI))


def jump_resonant(cfg: TwoOrbitConfig, sigma: float, h, n_max: int, spec: ResonanceSpec, k=GAUSS_K,
                  gradients=None) -> np.ndarray:
    """Jump of ``dH/dy`` for the resonant planet, with the Dirichlet factor."""
    mp = _minimum(cfg, h)
    gg = gradients if gradients is not None else geometry_gradients(cfg, mp, k, spec.h_ast)
    factor = float(dirichlet_bracket(n_max, sigma - critical_phase(mp, spec)))
    return -(2 * cfg.mu_prime * k * k / math.pi) * factor * _bracket(mp, gg)
