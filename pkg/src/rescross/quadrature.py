"""Quadrature of ``f(V)/d(V)`` over the torus of mean anomalies.

The integrand is split with a smooth partition of unity. Around every close
local minimum ``V_h`` a patch carries the weight ``w(rho) = exp(-(rho/s)^8)``
where ``rho = |A_h^(1/2) (V - V_h)|``; the rest of the torus is covered by a
periodic trapezoid rule on ``(1 - sum w) f/d``, which is smooth. Patches use
polar coordinates in the metric of ``A_h`` with radial Gauss-Legendre panels
graded toward the centre, so near-singular integrands at small ``d_h`` are
resolved. On the disc ``rho <= r`` of a crossing minimum the model term
``f(V_h)/delta_h`` is subtracted and integrated in closed form.

Oscillating factors are the harmonics ``exp(i n (h l + h' l'))``,
``n = 0..n_max``; results are complex with real part the cosine and imaginary
part the sine integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateConfig
from .geometry import MinimumPoint, TwoOrbitConfig, check_definite
from .kepler import GAUSS_K, TWO_PI, wrap_pi

BUMP_POWER = 8
PATCH_RADIUS = 1.6  # patch radius in units of the bump scale
CHART_LIMIT = 2.5   # largest anomaly offset of a patch from its centre


@dataclass(frozen=True)
class QuadratureConfig:
    """Parameters of the split quadrature.

    ``nodes`` is the starting trapezoid size per dimension, doubled up to
    ``max_nodes`` until successive results agree to ``tol``. Distances are in
    au in the metric of ``A_h``.
    """

    nodes: int = 128
    max_nodes: int = 1024
    tol: float = 1e-9
    adaptive: bool = True
    refine_distance: float = 0.6
    bump_scale: float = 0.6
    extraction_radius: float = 0.2
    switch_distance: float = 0.05
    angular_nodes: int = 48
    radial_order: int = 10
    radial_floor: float = 1e-6
    indirect_nodes: int = 2048

    def __post_init__(self):
        if self.nodes < 8 or self.nodes % 2:
            raise ValueError("nodes must be an even integer >= 8")
        if not 0 < self.extraction_radius <= 1:
            raise ValueError("extraction radius must lie in (0, 1]")
        if not self.switch_distance > 0:
            raise ValueError("switch distance must be positive")


@dataclass(frozen=True)
class Harmonics:
    """Oscillating factors ``exp(i n (h l + h' l'))`` for ``n = 0..n_max``."""

    h: int = 0
    h_prime: int = 0
    n_max: int = 0

    @property
    def orders(self):
        return np.arange(self.n_max + 1)

    def phase(self, V):
        V = np.asarray(V, dtype=float)
        return self.h * V[..., 0] + self.h_prime * V[..., 1]

    def factors(self, V):
        return np.exp(1j * self.phase(V)[..., None] * self.orders)


SCALAR = Harmonics()


# --------------------------------------------------------------------------
# Closed forms
# --------------------------------------------------------------------------

def extraction_integral(d, det_A, r):
    """Integral of ``1/delta_h`` over the disc ``(V-V_h).A(V-V_h) <= r^2``."""
    return TWO_PI / math.sqrt(det_A) * (math.sqrt(d * d + r * r) - d)


def extraction_integral_sided(d_tilde, det_A, r, side):
    """Analytic continuation of :func:`extraction_integral` from one side of zero.

    ``side = +1`` continues the branch valid for ``d_tilde > 0``.
    """
    return TWO_PI / math.sqrt(det_A) * (math.sqrt(d_tilde**2 + r * r) - side * d_tilde)


def extraction_gradient_sided(d_tilde, det_A, r, side, grad_d_tilde, grad_inv_sqrt_det):
    """Gradient of :func:`extraction_integral_sided` over ``y``."""
    root = math.sqrt(d_tilde**2 + r * r)
    inv = 1 / math.sqrt(det_A)
    return (TWO_PI * grad_inv_sqrt_det * (root - side * d_tilde)
            + TWO_PI * inv * (d_tilde / root - side) * grad_d_tilde)


def disc_integral_quadrature(d, A, r, angular=64, radial_order=16, tol=1e-13, max_angular=8192):
    """Integral of ``1/delta_h`` over its disc by quadrature in anomaly space.

    Polar coordinates centred at ``V_h`` in the plain anomaly plane; the
    boundary radius follows the ellipse. Radial panels are graded toward the
    centre at the scale of ``d``. The angular trapezoid is doubled until two
    successive sums agree to ``tol`` (strongly anisotropic ``A`` needs many
    nodes).
    """
    A = np.asarray(A, dtype=float)
    x, w = _gauss(radial_order)
    edges = _graded_edges(d / r if d > 0 else 0.0, 1.0, 1e-12)

    def rule(m):
        theta = (np.arange(m) + 0.5) * TWO_PI / m
        u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        q = np.einsum("ti,ij,tj->t", u, A, u)
        rmax = r / np.sqrt(q)
        total = 0.0
        # substitute rho = t * rmax(theta); the integrand is then a function of t
        for lo, hi in edges:
            t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            wt = 0.5 * (hi - lo) * w
            rho = t[:, None] * rmax[None, :]
            val = rho / np.sqrt(d * d + rho**2 * q[None, :]) * rmax[None, :]
            total += np.sum(wt[:, None] * val)
        return total * TWO_PI / m

    m = angular
    prev = rule(m)
    while m < max_angular:
        m *= 2
        cur = rule(m)
        if abs(cur - prev) <= tol * abs(cur):
            return cur
        prev = cur
    return prev


# --------------------------------------------------------------------------
# Patch layout
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss(m):
    return np.polynomial.legendre.leggauss(m)


def _graded_edges(c, R, floor):
    """Panel edges on [0, R]: [0, c], then doubling lengths."""
    c = max(c, floor)
    edges = [0.0]
    x = min(c, R)
    while x < R:
        edges.append(x)
        x *= 2
    edges.append(R)
    return list(zip(edges[:-1], edges[1:]))


def _radial_edges(d, r, R, floor):
    inner = _graded_edges(0.5 * d, r, floor)
    outer = []
    x = r
    while x < R:
        nxt = min(2 * x, x + 0.25 * R, R)
        outer.append((x, nxt))
        x = nxt
    return np.array(inner + outer)


@dataclass(frozen=True)
class PatchShape:
    """Frozen patch parameters (kept fixed across finite-difference stencils)."""

    s: float
    r: float
    edges: np.ndarray
    extract: bool


@dataclass(frozen=True)
class Layout:
    nodes: int
    shapes: tuple


def _inv_sqrt(A):
    lam, Q = np.linalg.eigh(A)
    return (Q / np.sqrt(lam)) @ Q.T


def plan_patches(minima, quad: QuadratureConfig, extract_below=None):
    """Choose patch shapes for the minima closer than ``quad.refine_distance``.

    Returns a list aligned with ``minima``; entries are ``None`` for minima
    without a patch. Minima with ``|d_tilde| <= extract_below`` get an
    extraction disc.
    """
    extract_below = quad.switch_distance if extract_below is None else extract_below
    shapes = [None] * len(minima)
    scales = {}
    for i, mp in enumerate(minima):
        if mp.d >= quad.refine_distance:
            continue
        if not mp.nondegenerate:
            if mp.d <= extract_below:
                raise DegenerateConfig(f"tangent crossing at V = {mp.V}")
            continue
        Ainv = np.linalg.inv(mp.A)
        s = min(quad.bump_scale, CHART_LIMIT / (PATCH_RADIUS * math.sqrt(Ainv.diagonal().max())))
        scales[i] = s
    # keep patches disjoint: bounding radius in anomaly space is R / sqrt(lambda_min)
    idx = sorted(scales)
    for a in idx:
        for b in idx:
            if b <= a:
                continue
            ma, mb = minima[a], minima[b]
            gap = float(np.linalg.norm(wrap_pi(ma.V - mb.V)))
            ra = PATCH_RADIUS * scales[a] / math.sqrt(np.linalg.eigvalsh(ma.A)[0])
            rb = PATCH_RADIUS * scales[b] / math.sqrt(np.linalg.eigvalsh(mb.A)[0])
            if ra + rb > 0.95 * gap:
                f = 0.95 * gap / (ra + rb)
                scales[a] *= f
                scales[b] *= f
    for i, s in scales.items():
        mp = minima[i]
        R = PATCH_RADIUS * s
        extract = abs(mp.d) <= extract_below
        r = min(quad.extraction_radius, 0.6 * s)
        if extract and not math.isfinite(mp.d_tilde):
            raise DegenerateConfig("parallel tangents at a crossing minimum")
        shapes[i] = PatchShape(s=s, r=r, edges=_radial_edges(mp.d, r, R, quad.radial_floor),
                               extract=extract)
    return shapes


def bump(rho2, s):
    x = rho2 * (1.0 / (s * s))
    x = x * x
    return np.exp(-(x * x))


# --------------------------------------------------------------------------
# Integrand evaluation
# --------------------------------------------------------------------------

def _points(cfg: TwoOrbitConfig, ell, ellp, gradient, k, h_ast):
    """Inverse distance and (optionally) its y-gradient at scattered points."""
    if gradient:
        X, dX = cfg.orbit.action_partials(ell, k, h_ast)
    else:
        X, dX = cfg.orbit.position(ell), None
    P = cfg.planet_orbit.position(ellp)
    D = P - X
    d = np.sqrt(np.einsum("...i,...i->...", D, D))
    inv = 1.0 / d
    g = None
    if gradient:
        g = np.einsum("...i,k...i->k...", D, dX) * inv**3
    return inv, g


@dataclass
class PairResult:
    """Integrals ``J_n = int exp(i n phi) / d dV`` and their y-gradients.

    ``remainder`` is ``J_n`` minus the closed-form disc terms of extracted
    minima; ``grad`` has shape ``(5, n_max+1)``.
    """

    values: np.ndarray
    remainder: np.ndarray
    grad: np.ndarray | None
    layout: Layout
    minima: list
    extracted: list = field(default_factory=list)


def _far_grid(cfg, harm, n, patches, gradient, k, h_ast):
    ell = np.arange(n) * TWO_PI / n
    w2 = (TWO_PI / n) ** 2
    if gradient:
        X, dX = cfg.orbit.action_partials(ell, k, h_ast)
    else:
        X, dX = cfg.orbit.position(ell), None
    P = cfg.planet_orbit.position(ell)
    D = P[None, :, :] - X[:, None, :]
    d2 = np.einsum("ijk,ijk->ij", D, D)
    weight = np.ones_like(d2)
    for mp, shape in patches:
        W0 = wrap_pi(ell - mp.V[0])[:, None]
        W1 = wrap_pi(ell - mp.V[1])[None, :]
        rho2 = (mp.A[0, 0] * W0 * W0 + 2 * mp.A[0, 1] * W0 * W1) + mp.A[1, 1] * W1 * W1
        weight -= bump(rho2, shape.s)
    inv = 1.0 / np.sqrt(d2)
    Q = weight * inv
    a = np.exp(1j * harm.h * ell[:, None] * harm.orders)        # (n, m)
    b = np.exp(1j * harm.h_prime * ell[:, None] * harm.orders)  # (n, m)
    vals = np.einsum("im,im->m", a, Q @ b) * w2
    grad = None
    if gradient:
        K = Q * inv * inv
        KB = K @ b                                            # (n, m)
        KBP = (K @ (b[:, :, None] * P[:, None, :]).reshape(n, -1)).reshape(n, -1, 3)
        # sum_j K_ij b_j (P_j - X_i)
        T = KBP - KB[:, :, None] * X[:, None, :]             # (n, m, 3)
        grad = np.einsum("im,imc,kic->km", a, T, dX) * w2
    return vals, grad


def _patch_nodes(mp: MinimumPoint, shape: PatchShape, quad: QuadratureConfig):
    x, w = _gauss(quad.radial_order)
    lo, hi = shape.edges[:, 0], shape.edges[:, 1]
    rho = (0.5 * (hi - lo)[:, None] * x + 0.5 * (hi + lo)[:, None]).ravel()
    wr = (0.5 * (hi - lo)[:, None] * w).ravel()
    M = quad.angular_nodes
    theta = (np.arange(M) + 0.5) * TWO_PI / M
    R = _inv_sqrt(mp.A)
    xi = rho[:, None, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)[None]
    V = mp.V + xi @ R.T
    weight = (rho * wr)[:, None] * (TWO_PI / M / math.sqrt(mp.det_A))
    return rho, V, np.broadcast_to(weight, V.shape[:2])


def _patch(cfg, harm, mp, shape, quad, gradient, k, h_ast):
    rho, V, weight = _patch_nodes(mp, shape, quad)
    inv, g = _points(cfg, V[..., 0], V[..., 1], gradient, k, h_ast)
    w = bump(rho * rho, shape.s)[:, None]
    F = harm.factors(V)                                   # (nr, M, m)
    vals = np.einsum("rt,rtm->m", weight * w * inv, F)
    rem = vals.copy()
    if shape.extract:
        inside = (rho <= shape.r * (1 + 1e-14))[:, None]
        model = np.where(inside, 1.0 / np.sqrt(mp.d**2 + rho * rho)[:, None], 0.0)
        fh = harm.factors(mp.V)
        rem = np.einsum("rt,rtm->m", weight * (w * inv), F) - fh * np.sum(weight * model)
        closed = extraction_integral(mp.d, mp.det_A, shape.r)
        vals = rem + fh * closed
    grad = None
    if gradient:
        grad = np.einsum("krt,rtm->km", g * (weight * w), F)
    return vals, rem, grad


def pair_integrals(cfg: TwoOrbitConfig, harm: Harmonics = SCALAR,
                   quad: QuadratureConfig = QuadratureConfig(), minima=None, gradient=False,
                   k=GAUSS_K, h_ast=1, layout: Layout | None = None,
                   extract_below=None) -> PairResult:
    """Integrals of ``exp(i n phi)/d`` over the torus (no ``1/(2 pi)^2`` factor).

    ``minima`` are the local minima of the configuration (found when not
    given). A frozen ``layout`` disables adaptivity and reuses patch shapes;
    the minima must then be listed in the same order.
    """
    if minima is None:
        from .geometry import local_minima
        minima = local_minima(cfg)
    if layout is None:
        shapes = plan_patches(minima, quad, extract_below)
        N = None
    else:
        shapes = list(layout.shapes)
        N = layout.nodes
        if len(shapes) != len(minima):
            raise ValueError("layout does not match the minima list")
    patches = [(mp, sh) for mp, sh in zip(minima, shapes) if sh is not None]
    for mp, _ in patches:
        check_definite(mp)

    m = harm.n_max + 1
    pv = np.zeros(m, complex)
    prem = np.zeros(m, complex)
    pg = np.zeros((5, m), complex) if gradient else None
    for mp, sh in patches:
        v, r, g = _patch(cfg, harm, mp, sh, quad, gradient, k, h_ast)
        pv += v
        prem += r
        if gradient:
            pg += g

    if N is not None:
        fv, fg = _far_grid(cfg, harm, N, patches, gradient, k, h_ast)
    else:
        N = quad.nodes
        fv, fg = _far_grid(cfg, harm, N, patches, gradient, k, h_ast)
        while quad.adaptive and N < quad.max_nodes:
            fv2, fg2 = _far_grid(cfg, harm, 2 * N, patches, gradient, k, h_ast)
            scale = np.abs(fv2).max() + abs(pv[0])
            err = np.abs(fv2 - fv).max() / scale
            if gradient:
                gscale = np.abs(fg2).max() + np.abs(pg).max()
                err = max(err, np.abs(fg2 - fg).max() / gscale)
            N *= 2
            fv, fg = fv2, fg2
            if err < quad.tol:
                break
    values = fv + pv
    remainder = fv + prem
    grad = fg + pg if gradient else None
    extracted = [i for i, sh in enumerate(shapes) if sh is not None and sh.extract]
    return PairResult(values=values, remainder=remainder, grad=grad,
                      layout=Layout(nodes=N, shapes=tuple(shapes)), minima=list(minima),
                      extracted=extracted)


# --------------------------------------------------------------------------
# Indirect part of the resonant coefficients
# --------------------------------------------------------------------------

def indirect_integrals(cfg: TwoOrbitConfig, harm: Harmonics, quad: QuadratureConfig = QuadratureConfig(),
                       gradient=False, k=GAUSS_K, h_ast=1):
    """Integrals of ``-(r . r')/|r'|^3 exp(i n phi)`` over the torus.

    The integrand separates, so each is a product of two one-dimensional
    periodic integrals. The ``n = 0`` entry vanishes.
    """
    n = quad.indirect_nodes
    ell = np.arange(n) * TWO_PI / n
    if gradient:
        X, dX = cfg.orbit.action_partials(ell, k, h_ast)
    else:
        X, dX = cfg.orbit.position(ell), None
    P = cfg.planet_orbit.position(ell)
    Pn = P / np.linalg.norm(P, axis=-1, keepdims=True) ** 3
    a = np.exp(1j * harm.h * ell[:, None] * harm.orders)
    b = np.exp(1j * harm.h_prime * ell[:, None] * harm.orders)
    w = TWO_PI / n
    Xa = np.einsum("im,ic->mc", a, X) * w
    Pb = np.einsum("im,ic->mc", b, Pn) * w
    vals = -np.einsum("mc,mc->m", Xa, Pb)
    vals[0] = 0.0
    grad = None
    if gradient:
        dXa = np.einsum("im,kic->kmc", a, dX) * w
        grad = -np.einsum("kmc,mc->km", dXa, Pb)
        grad[:, 0] = 0.0
    return vals, grad
