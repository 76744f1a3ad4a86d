"""Resonant averaging of ``1/d`` and the collision-protection checks.

With ``W = U V`` for a unimodular ``U`` whose first row is ``(h, h')``,
``kbar(sigma)`` averages ``1/d`` over the fast angle ``tau`` at fixed
``sigma = h l + h' l'``. Partial Fourier sums in ``sigma`` are formed two
ways: by smoothing ``kbar`` with the Dirichlet kernel (procedure I) and
from the two-dimensional resonant Fourier coefficients of ``1/d``
(procedure II). The two routes share no quadrature code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import Divergent, NumericalFailure
from .geometry import TwoOrbitConfig, geometry_gradients, local_minima
from .hamiltonian import dirichlet_bracket
from .kepler import GAUSS_K, TWO_PI, ResonanceSpec
from .quadrature import Harmonics, QuadratureConfig, pair_integrals

GRADING_DISTANCE = 0.6   # au; closer minima get graded panels
MAX_PANEL = 0.5          # rad


def extended_gcd(a: int, b: int):
    """``(g, x, y)`` with ``a x + b y = g = gcd(a, b) >= 0``."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        a, x0, y0 = -a, -x0, -y0
    return a, x0, y0


@dataclass(frozen=True)
class UnimodularChart:
    """Integer matrix ``U`` with first row ``(h, h')`` and ``det U = 1``."""

    U: tuple

    def __post_init__(self):
        U = np.array(self.U, dtype=np.int64)
        if U.shape != (2, 2):
            raise ValueError("U must be 2x2")
        if int(U[0, 0] * U[1, 1] - U[0, 1] * U[1, 0]) != 1:
            raise ValueError(f"U = {U.tolist()} is not unimodular with det 1")

    @classmethod
    def from_resonance(cls, h: int, h_prime: int) -> "UnimodularChart":
        g, x, y = extended_gcd(h, h_prime)
        if g != 1:
            raise ValueError(f"gcd({h}, {h_prime}) = {g}; the resonance vector must be primitive")
        # h x + h' y = 1, so the second row (-y, x) gives det = 1
        return cls(((h, h_prime), (-y, x)))

    @property
    def matrix(self):
        return np.array(self.U, dtype=float)

    @property
    def inverse(self):
        (a, b), (c, d) = self.U
        return np.array([[d, -b], [-c, a]], dtype=float)

    @property
    def resonance(self):
        return tuple(self.U[0])

    def to_chart(self, V):
        """``W = (sigma, tau) = U V``."""
        return np.asarray(V, dtype=float) @ self.matrix.T

    def from_chart(self, W):
        return np.asarray(W, dtype=float) @ self.inverse.T

    def metric(self, A):
        """``B = U^-T A U^-1``."""
        Ui = self.inverse
        return Ui.T @ A @ Ui


def _chart(chart):
    if isinstance(chart, UnimodularChart):
        return chart
    if isinstance(chart, ResonanceSpec):
        return UnimodularChart.from_resonance(chart.h_ast, chart.h_pl)
    return UnimodularChart.from_resonance(*chart)


def collision_bound(mp, chart: UnimodularChart, Z):
    """Sides of ``delta^2(U^-1 Z + V_h) >= (det A / b22) Z_1^2``.

    Returns ``(lhs, rhs)`` arrays for offsets ``Z`` of shape ``(..., 2)``.
    """
    Z = np.asarray(Z, dtype=float)
    B = chart.metric(mp.A)
    lhs = mp.d**2 + np.einsum("...i,ij,...j->...", Z, B, Z)
    rhs = np.linalg.det(mp.A) / B[1, 1] * Z[..., 0] ** 2
    return lhs, rhs


# --------------------------------------------------------------------------
# Graded one-dimensional rules on the circle
# --------------------------------------------------------------------------

def _breakpoints(centres, widths, base):
    """Panel edges on ``[base, base + 2pi]`` graded towards each centre."""
    pts = [np.array([0.0, TWO_PI])]
    for c, w in zip(centres, widths):
        c = np.mod(c - base, TWO_PI)
        n = max(int(math.ceil(math.log2(math.pi / w))), 0) if w < math.pi else 0
        steps = w * 2.0 ** np.arange(n)
        pts.append(c + np.concatenate([[0.0], steps, -steps]))
    pts = np.unique(np.mod(np.concatenate(pts), TWO_PI))
    pts = np.concatenate([pts, [TWO_PI]])
    # split long panels
    lengths = np.diff(pts)
    m = np.maximum(np.ceil(lengths / MAX_PANEL).astype(int), 1)
    idx = np.repeat(np.arange(lengths.size), m)
    frac = np.concatenate([np.arange(k) / k for k in m])
    edges = np.concatenate([pts[idx] + lengths[idx] * frac, [TWO_PI]])
    keep = np.concatenate([[True], np.diff(edges) > 1e-15])
    return edges[keep] + base


@lru_cache(maxsize=None)
def _legendre(order):
    return np.polynomial.legendre.leggauss(order)


def _gl_rule(edges, order):
    x, w = _legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


@dataclass
class _MinInfo:
    V: np.ndarray
    d: float
    sigma_c: float
    tau_c: float
    det_A: float
    b12: float
    b22: float


def _min_info(cfg, chart, minima):
    out = []
    for mp in minima:
        if mp.d > GRADING_DISTANCE:
            continue
        B = chart.metric(mp.A)
        W = chart.to_chart(mp.V)
        out.append(_MinInfo(V=mp.V, d=mp.d, sigma_c=float(W[0]), tau_c=float(W[1]),
                            det_A=float(np.linalg.det(mp.A)), b12=B[0, 1], b22=B[1, 1]))
    return out


def _tau_rule(sigma, infos, order):
    centres, widths = [], []
    for m in infos:
        ds = math.remainder(sigma - m.sigma_c, TWO_PI)
        rho = math.sqrt(m.d**2 + m.det_A / m.b22 * ds * ds)
        centres.append(m.tau_c - m.b12 / m.b22 * ds)
        widths.append(max(0.5 * rho / math.sqrt(m.b22), 1e-15))
    return _gl_rule(_breakpoints(centres, widths, 0.0), order)


def kbar(sigma, cfg: TwoOrbitConfig, chart, minima=None, order: int = 24):
    """``(1/2pi) * integral over tau of 1/d`` at fixed ``sigma`` (scalar or array).

    Raises :class:`Divergent` at a collision angle of a crossing
    configuration.
    """
    chart = _chart(chart)
    if minima is None:
        minima = local_minima(cfg)
    infos = _min_info(cfg, chart, minima)
    sig = np.atleast_1d(np.asarray(sigma, dtype=float))
    taus, ws, sigs, starts = [], [], [], []
    count = 0
    for s in sig:
        for m in infos:
            if m.d < 1e-12 and math.remainder(s - m.sigma_c, TWO_PI) == 0.0:
                raise Divergent(f"kbar diverges at sigma = sigma_c = {m.sigma_c:.15g}")
        tau, w = _tau_rule(s, infos, order)
        starts.append(count)
        count += tau.size
        taus.append(tau)
        ws.append(w)
        sigs.append(np.full(tau.size, s))
    tau, w, ss = np.concatenate(taus), np.concatenate(ws), np.concatenate(sigs)
    V = chart.from_chart(np.stack([ss, tau], axis=-1))
    vals = w / np.sqrt(cfg.squared_distance(V[:, 0], V[:, 1]))
    out = np.add.reduceat(vals, np.array(starts)) / TWO_PI
    return out if np.ndim(sigma) else float(out[0])


def sigma_rule(cfg, chart, minima=None, order: int = 24, floor: float = 1e-11):
    """Nodes and weights on [0, 2pi] graded towards the collision angles."""
    chart = _chart(chart)
    if minima is None:
        minima = local_minima(cfg)
    infos = _min_info(cfg, chart, minima)
    centres = [m.sigma_c for m in infos]
    widths = [max(0.5 * m.d * math.sqrt(m.b22 / m.det_A), floor) for m in infos]
    return _gl_rule(_breakpoints(centres, widths, 0.0), order)


def kbar_fourier(cfg, chart, n_max, minima=None, order: int = 24):
    """Fourier coefficients ``c_n = (1/2pi) int kbar(s) exp(-i n s) ds``, ``n = 0..n_max``."""
    chart = _chart(chart)
    if minima is None:
        minima = local_minima(cfg)
    s, w = sigma_rule(cfg, chart, minima, order)
    kb = kbar(s, cfg, chart, minima, order)
    n = np.arange(n_max + 1)
    return (w * kb) @ np.exp(-1j * np.outer(s, n)) / TWO_PI


def partial_sum(c, sigma, N):
    """``c_0 + 2 Re sum_{n=1..N} c_n exp(i n sigma)`` from coefficients ``c_0..c_M``, ``M >= N``."""
    if N > len(c) - 1:
        raise ValueError(f"need coefficients up to n = {N}, have {len(c) - 1}")
    sigma = np.asarray(sigma, dtype=float)
    n = np.arange(1, N + 1)
    val = c[0].real + 2 * (np.exp(1j * np.multiply.outer(sigma, n)) * c[1:N + 1]).real.sum(axis=-1)
    return val


def coefficients_one(cfg, chart, N, minima=None, order: int = 24, check=True, tol=1e-9):
    """Procedure I coefficients ``c_0..c_N``: Fourier analysis of ``kbar`` in ``sigma``."""
    chart = _chart(chart)
    if minima is None:
        minima = local_minima(cfg)
    c = kbar_fourier(cfg, chart, N, minima, order)
    if check:
        c2 = kbar_fourier(cfg, chart, N, minima, order + 8)
        err = float(np.max(np.abs(c2 - c)))
        if err > tol * max(1.0, abs(c2[0])):
            raise NumericalFailure(f"procedure I: Fourier coefficients changed by {err:.2e} "
                                   f"between orders {order} and {order + 8}")
        c = c2
    return c


def coefficients_two(cfg, chart, N, minima=None, quad: QuadratureConfig | None = None,
                     check=True, tol=1e-9):
    """Procedure II coefficients ``c_0..c_N``: resonant harmonics of ``1/d`` on the torus."""
    chart = _chart(chart)
    h, hp = chart.resonance
    quad = quad or QuadratureConfig(tol=1e-11, max_nodes=2048)
    res = pair_integrals(cfg, Harmonics(h, hp, N), quad, minima=minima)
    c = np.conj(res.values) / TWO_PI**2
    if check:
        fine = QuadratureConfig(**{**quad.__dict__, "angular_nodes": quad.angular_nodes + 16,
                                   "radial_order": quad.radial_order + 4})
        c2 = np.conj(pair_integrals(cfg, Harmonics(h, hp, N), fine, minima=minima).values) / TWO_PI**2
        err = float(np.max(np.abs(c2 - c)))
        if err > tol * max(1.0, abs(c2[0])):
            raise NumericalFailure(f"procedure II: coefficients changed by {err:.2e} under patch refinement")
    return c


def procedure_one(sigma, cfg, chart, N, minima=None, order: int = 24, check=True, tol=1e-9):
    """Dirichlet smoothing of ``kbar`` (procedure I)."""
    return partial_sum(coefficients_one(cfg, chart, N, minima, order, check, tol), sigma, N)


def procedure_two(sigma, cfg, chart, N, minima=None, quad: QuadratureConfig | None = None,
                  check=True, tol=1e-9):
    """Resonant two-dimensional Fourier coefficients of ``1/d`` summed at ``sigma`` (procedure II)."""
    return partial_sum(coefficients_two(cfg, chart, N, minima, quad, check, tol), sigma, N)


def k_partial(sigma, cfg: TwoOrbitConfig, chart, N: int, procedure: str = "I", **kw):
    """Partial Fourier sum in ``sigma`` of the resonant average of ``1/d``."""
    if N < 0:
        raise ValueError("N must be non-negative")
    proc = str(procedure).upper()
    if proc == "I":
        return procedure_one(sigma, cfg, chart, N, **kw)
    if proc == "II":
        return procedure_two(sigma, cfg, chart, N, **kw)
    raise ValueError(f"procedure must be 'I' or 'II', got {procedure!r}")


def torus_average(cfg, minima=None, quad: QuadratureConfig | None = None):
    """``(1/(2pi)^2) * integral of 1/d`` over the torus."""
    res = pair_integrals(cfg, Harmonics(), quad or QuadratureConfig(tol=1e-11, max_nodes=2048),
                         minima=minima)
    return float(res.values[0].real) / TWO_PI**2


# --------------------------------------------------------------------------
# Jump of the derivatives as a function of sigma
# --------------------------------------------------------------------------

@dataclass
class DeltaScan:
    """Jump profiles over ``sigma`` for several truncations ``N``."""

    N: list
    sigma: np.ndarray
    profiles: np.ndarray      # (len(N), len(sigma))
    factor: float             # -2 mu k^2 (d d_tilde/d y_i) / sqrt(det A)
    sigma_c: float
    integrals: dict           # test-function name -> array over N


def jump_delta_scan(cfg_c: TwoOrbitConfig, y_index: int, N_list, chart, test_functions=None,
                    samples: int = 4096, k=GAUSS_K, mu=None, minimum=None) -> DeltaScan:
    """Minus-side minus plus-side derivative jump of the resonant term over ``sigma``.

    ``test_functions`` maps names to callables ``phi(sigma)``; their
    integrals against each profile are collected.
    """
    chart = _chart(chart)
    h, hp = chart.resonance
    mp = minimum if minimum is not None else local_minima(cfg_c)[0]
    mu = cfg_c.mu_prime if mu is None else mu
    gg = geometry_gradients(cfg_c, mp, k, h)
    det = float(np.linalg.det(mp.A))
    d_t = mp.d_tilde if math.isfinite(mp.d_tilde) else 0.0
    bracket = gg.inv_sqrt_det * d_t + gg.d_tilde / math.sqrt(det)
    sigma_c = float(np.mod(h * mp.V[0] + hp * mp.V[1], TWO_PI))
    sigma = np.arange(samples) * TWO_PI / samples
    profiles = np.array([-(2 * mu * k * k / math.pi) * dirichlet_bracket(N, sigma - sigma_c) * bracket[y_index]
                         for N in N_list])
    factor = -2 * mu * k * k * gg.d_tilde[y_index] / math.sqrt(det)
    integrals = {}
    for name, phi in (test_functions or {}).items():
        weights = phi(sigma) * TWO_PI / samples
        integrals[name] = profiles @ weights
    return DeltaScan(N=list(N_list), sigma=sigma, profiles=profiles, factor=factor, sigma_c=sigma_c,
                     integrals=integrals)
