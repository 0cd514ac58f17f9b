"""Magnetic field data: flux through triangles, circulation along segments,
flux phases, gauge construction and gauge shifts.

A magnetic field in dimension n is an antisymmetric 2-form with components
B_jk(x); only the j < k components are stored.  In 2D there is a single
scalar component B_12, and closedness is automatic.  A vector potential is a
1-form with components A_j(x).  Components are evaluable functions of x
(arrays of shape (..., n)), typically built from parsed expressions.

All parameter integrals (flux over a 2-simplex, the explicit double-integral
flux formula, circulation along a segment, the transversal gauge) use
tensor-product Gauss-Legendre quadrature, exact for polynomial integrands of
degree <= 2*order - 1 per axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

from . import expressions


@lru_cache(maxsize=32)
def _gl_nodes(order: int, a: float, b: float):
    """Gauss-Legendre nodes/weights on [a, b]."""
    t, w = roots_legendre(order)
    nodes = 0.5 * (b - a) * t + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w
    return nodes, weights


@dataclass(frozen=True)
class FluxQuadrature:
    """Gauss-Legendre rule for the (s, t) parameter integrals."""

    order: int = 8
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.order < 2:
            raise ValueError(f"quadrature order must be >= 2, got {self.order}")


DEFAULT_QUAD = FluxQuadrature()


@dataclass(frozen=True)
class MagneticField:
    """Antisymmetric 2-form with evaluable components B_jk, j < k.

    ``components`` maps (j, k) with 1 <= j < k <= n to a callable taking an
    array of shape (..., n) and returning real values of shape (...).
    ``smoothness`` is a declared class tag (recorded, not verified):
    'polynomial', 'bounded', or 'in-algebra'.
    """

    n: int
    components: dict = field(default_factory=dict)
    smoothness: str = "bounded"

    def __post_init__(self):
        for j, k in self.components:
            if not (1 <= j < k <= self.n):
                raise ValueError(f"component index ({j},{k}) invalid for n={self.n}")

    def component(self, j: int, k: int):
        """B_jk as a callable, honoring antisymmetry; zero if not stored."""
        if j == k:
            return lambda x: np.zeros(np.asarray(x).shape[:-1])
        if j < k:
            fn = self.components.get((j, k))
            sign = 1.0
        else:
            fn = self.components.get((k, j))
            sign = -1.0
        if fn is None:
            return lambda x: np.zeros(np.asarray(x).shape[:-1])
        return lambda x, fn=fn, sign=sign: sign * np.asarray(fn(x), dtype=float)

    def is_zero(self) -> bool:
        return not self.components

    @staticmethod
    def from_expressions(n: int, exprs: dict, smoothness: str = "bounded") -> "MagneticField":
        """Build from {(j, k): expression-string} using the parser."""
        comps = {}
        for (j, k), text in exprs.items():
            ast = expressions.parse_expression(text, n_dim=n)
            comps[(j, k)] = _position_callable(ast)
        return MagneticField(n=n, components=comps, smoothness=smoothness)

    @staticmethod
    def constant(n: int, b: float) -> "MagneticField":
        """Constant field B_12 = b (n must be 2 unless b = 0)."""
        if b == 0.0:
            return MagneticField(n=n, components={}, smoothness="polynomial")
        if n != 2:
            raise ValueError("nonzero constant field requires n = 2")
        return MagneticField(
            n=2,
            components={(1, 2): lambda x: np.full(np.asarray(x).shape[:-1], float(b))},
            smoothness="polynomial",
        )


def _position_callable(ast):
    def fn(x):
        return np.real(expressions.evaluate(ast, x=x))

    return fn


@dataclass(frozen=True)
class VectorPotential:
    """1-form with evaluable real components A_j, 1 <= j <= n."""

    n: int
    components: tuple = ()

    def __post_init__(self):
        if len(self.components) != self.n:
            raise ValueError(f"expected {self.n} components, got {len(self.components)}")

    def evaluate(self, x) -> np.ndarray:
        """A(x) for x of shape (..., n); returns shape (..., n)."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape, dtype=float)
        for j, fn in enumerate(self.components):
            out[..., j] = fn(x)
        return out

    def is_zero(self) -> bool:
        """True only for potentials built by :meth:`zero` (structural check)."""
        return all(getattr(fn, "_is_zero", False) for fn in self.components)

    @staticmethod
    def zero(n: int) -> "VectorPotential":
        comps = []
        for _ in range(n):
            def z(x):
                return np.zeros(np.asarray(x).shape[:-1])

            z._is_zero = True
            comps.append(z)
        return VectorPotential(n=n, components=tuple(comps))

    @staticmethod
    def from_expressions(n: int, exprs) -> "VectorPotential":
        comps = []
        for text in exprs:
            ast = expressions.parse_expression(text, n_dim=n)
            comps.append(_position_callable(ast))
        return VectorPotential(n=n, components=tuple(comps))


# ---------------------------------------------------------------------------
# flux and circulation
# ---------------------------------------------------------------------------


def flux_triangle(B: MagneticField, v0, v1, v2, quad: FluxQuadrature = DEFAULT_QUAD):
    """Integral of the 2-form B over the oriented triangle <v0, v1, v2>.

    Vertices may be single points of shape (n,) or batches of shape (..., n);
    batched vertices produce a batch of fluxes.  The simplex is parameterized
    by P(u, v) = v0 + u*(v1 - v0) + v*(1 - u)*(v2 - v0) over the unit square,
    with Jacobian factor (1 - u) and the constant wedge coefficients
    e_jk = (v1-v0)_j (v2-v0)_k - (v1-v0)_k (v2-v0)_j.
    """
    v0 = np.asarray(v0, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if B.is_zero():
        return np.zeros(np.broadcast_shapes(v0.shape, v1.shape, v2.shape)[:-1])
    d1 = v1 - v0
    d2 = v2 - v0
    un, uw = _gl_nodes(quad.order, 0.0, 1.0)
    vn, vw = _gl_nodes(quad.order, 0.0, 1.0)
    # quadrature mesh over the unit square, flattened
    U, V = np.meshgrid(un, vn, indexing="ij")
    W = np.outer(uw, vw) * (1.0 - U)  # include Jacobian
    U, V, W = U.ravel(), V.ravel(), W.ravel()
    # points: shape (..., q, n)
    s = U[:, None]
    t = (V * (1.0 - U))[:, None]
    pts = v0[..., None, :] + s * d1[..., None, :] + t * d2[..., None, :]
    total = 0.0
    for (j, k), _ in B.components.items():
        wedge = d1[..., j - 1] * d2[..., k - 1] - d1[..., k - 1] * d2[..., j - 1]
        vals = B.component(j, k)(pts)  # (..., q)
        total = total + wedge * np.sum(W * vals, axis=-1)
    return total


def gamma_B(B: MagneticField, x, y, z, quad: FluxQuadrature = DEFAULT_QUAD):
    """Explicit double-integral flux formula.

    Gamma_B(x, y, z) = sum_{j,k} y_j z_k * Integral_0^2 ds Integral_0^1 dt
    s * B_jk(x + (s - s t - 1) y + (s t - 1) z).  Accepts batched points of
    shape (..., n).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if B.is_zero():
        return np.zeros(np.broadcast_shapes(x.shape, y.shape, z.shape)[:-1])
    sn, sw = _gl_nodes(quad.order, 0.0, 2.0)
    tn, tw = _gl_nodes(quad.order, 0.0, 1.0)
    S, T = np.meshgrid(sn, tn, indexing="ij")
    W = np.outer(sw, tw) * S  # include the s factor
    S, W = S.ravel(), W.ravel()
    T = T.ravel()
    cy = (S - S * T - 1.0)[:, None]
    cz = (S * T - 1.0)[:, None]
    pts = x[..., None, :] + cy * y[..., None, :] + cz * z[..., None, :]
    total = 0.0
    n = B.n
    for j in range(1, n + 1):
        for k in range(1, n + 1):
            if j == k:
                continue
            if (min(j, k), max(j, k)) not in B.components:
                continue
            vals = B.component(j, k)(pts)
            total = total + y[..., j - 1] * z[..., k - 1] * np.sum(W * vals, axis=-1)
    return total


def omega_low(B: MagneticField, x, y, z, quad: FluxQuadrature = DEFAULT_QUAD):
    """Low-index flux phase omega_B(x, y, z) = exp(-i Gamma_B(x, y, z))."""
    return np.exp(-1j * gamma_B(B, x, y, z, quad))


def circulation(A: VectorPotential, x, y, quad: FluxQuadrature = DEFAULT_QUAD):
    """Line integral of A along the oriented straight segment from x to y.

    Accepts batched endpoints of shape (..., n).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tn, tw = _gl_nodes(quad.order, 0.0, 1.0)
    d = y - x
    pts = x[..., None, :] + tn[:, None] * d[..., None, :]  # (..., q, n)
    vals = A.evaluate(pts)  # (..., q, n)
    integrand = np.sum(vals * d[..., None, :], axis=-1)  # (..., q)
    return np.sum(tw * integrand, axis=-1)


def transversal_gauge(B: MagneticField, quad: FluxQuadrature = DEFAULT_QUAD) -> VectorPotential:
    """The transversal gauge A_k(x) = -sum_j x_j Integral_0^1 ds s B_kj(s x).

    Satisfies dA = B and A(0) = 0; for a constant field B_12 = b in 2D this
    is the symmetric gauge (-b x2 / 2, b x1 / 2).
    """
    if B.is_zero():
        return VectorPotential.zero(B.n)
    sn, sw = _gl_nodes(quad.order, 0.0, 1.0)
    weights = sw * sn  # include the s factor

    def make_component(k: int):
        def component(x, k=k):
            x = np.asarray(x, dtype=float)
            pts = sn[:, None] * x[..., None, :]  # (..., q, n)
            acc = np.zeros(x.shape[:-1])
            for j in range(1, B.n + 1):
                if j == k:
                    continue
                if (min(j, k), max(j, k)) not in B.components:
                    continue
                vals = B.component(k, j)(pts)  # (..., q)
                acc = acc - x[..., j - 1] * np.sum(weights * vals, axis=-1)
            return acc

        return component

    return VectorPotential(n=B.n, components=tuple(make_component(k) for k in range(1, B.n + 1)))


def gauge_shift(A: VectorPotential, grad_psi=None, psi=None, step: float = 1e-5) -> VectorPotential:
    """A' = A + grad(psi).

    Either an analytic gradient ``grad_psi`` (callable x -> shape (..., n))
    is supplied, or ``psi`` (callable x -> shape (...)) is differentiated by
    central finite differences with step h = step * (1 + |x|).
    """
    if grad_psi is None:
        if psi is None:
            raise ValueError("either grad_psi or psi must be given")

        def grad_psi(x, psi=psi):
            x = np.asarray(x, dtype=float)
            h = step * (1.0 + np.linalg.norm(x, axis=-1, keepdims=True))
            out = np.empty(x.shape)
            for j in range(x.shape[-1]):
                e = np.zeros(x.shape[-1])
                e[j] = 1.0
                out[..., j] = (psi(x + h * e) - psi(x - h * e)) / (2.0 * h[..., 0])
            return out

    def make_component(j: int):
        base = A.components[j]

        def component(x, j=j, base=base):
            return np.asarray(base(x), dtype=float) + grad_psi(x)[..., j]

        return component

    return VectorPotential(n=A.n, components=tuple(make_component(j) for j in range(A.n)))


def omega_cocycle(B: MagneticField, q, x, y, quad: FluxQuadrature = DEFAULT_QUAD):
    """Normalized 2-cocycle omega^B(q; x, y) = exp(-i Flux(<q, q+x, q+x+y>)).

    The base point q is the argument of the function-valued cocycle; x and y
    are the composed translations.  omega^B(q; x, 0) = omega^B(q; 0, y) = 1
    exactly (degenerate triangles).
    """
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(-1j * flux_triangle(B, q, q + x, q + x + y, quad))
