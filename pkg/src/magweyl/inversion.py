"""Neumann-series inversion of elliptic symbols, regularizers, resolvent
families, and the functional calculus for affiliated observables.

The series for the twisted inverse of f - z is

    (f - z)^(-1 twisted) = (f - z)^(-1) # sum_k R_z^(k#),
    R_z := 1 - (f - z) # (f - z)^(-1),

where # is the twisted product and (f - z)^(-1) the plain pointwise
reciprocal.  At the matrix level the partial sums telescope exactly: with
M = quantize(f) - z and Q = quantize(1/(f - z)), the residual after k terms
is R^(k+1) with R = I - M Q, so convergence is governed by the operator norm
of R being subunitary — which improves as |z| grows along the negative real
axis.  Nonreal z are reached from a convergent real seed by marching the
resolvent identity with contraction-sized steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sp_linalg

from .grid import PhaseSpaceGrid
from .magnetics import DEFAULT_QUAD, FluxQuadrature, MagneticField, VectorPotential
from .quantize import MagneticOperator, SampledSymbol, dequantize, quantize
from .symbols import Symbol, is_elliptic, japanese_bracket


class EllipticityError(ValueError):
    """Raised when a symbol fails the sampled ellipticity test."""


class DivergenceError(RuntimeError):
    """Raised when the inversion series cannot converge at the given z."""


def _require_invertible(f: Symbol, z: complex, grid: PhaseSpaceGrid):
    """Validate the admissibility of z for the Neumann series seed."""
    if not f.real:
        raise EllipticityError("base symbol must be real-valued")
    if not is_elliptic(f, R=0.3 * np.max(grid.xi_nodes), C=1e-3, region=grid):
        raise EllipticityError("symbol is not elliptic on the sampled window")
    if abs(z.imag) < 1e-14:
        inf_f = _sampled_inf(f, grid)
        if not z.real <= inf_f - 1.0:
            raise DivergenceError(
                f"real z = {z} must satisfy z <= inf f - 1 = {inf_f - 1.0:.6g}; "
                "use a more negative z (or a nonreal one)")


def _sampled_inf(f: Symbol, grid: PhaseSpaceGrid) -> float:
    x = grid.x_mesh().reshape((grid.N,) * grid.n + (1,) * grid.n + (grid.n,))
    xi = grid.xi_mesh()
    return float(np.min(np.real(f(x, xi))))


def _reciprocal_symbol(f: Symbol, z: complex) -> Symbol:
    base = f.fn

    def fn(x, xi, base=base, z=z):
        return 1.0 / (np.asarray(base(x, xi), dtype=complex) - z)

    return Symbol.from_callable(fn, n=f.n, m=-f.m, rho=f.rho, delta=f.delta,
                                real=False, x_independent=f.x_independent)


@dataclass(frozen=True)
class InversionResult:
    """Twisted inverse of f - z with convergence metadata."""

    symbol: SampledSymbol
    z: complex
    terms: int
    residual: float          # sup of |(f - z) # result - 1| on the interior 80%
    norm_R: float            # operator norm of the series generator R_z
    matrix: np.ndarray = field(repr=False)  # quantized inverse (gauge of the build)


def norm_Rz(f: Symbol, z: complex, B: MagneticField, A: VectorPotential,
            grid: PhaseSpaceGrid, quad: FluxQuadrature = DEFAULT_QUAD,
            threads: int = 1) -> float:
    """Operator norm of R_z = 1 - (f - z) # (f - z)^(-1) (quantized)."""
    Mf = quantize(f, A, grid, quad, threads).matrix
    Q = quantize(_reciprocal_symbol(f, z), A, grid, quad, threads).matrix
    R = np.eye(grid.npoints) - (Mf - z * np.eye(grid.npoints)) @ Q
    return float(sp_linalg.svdvals(R)[0])


def neumann_invert(f: Symbol, z: complex, B: MagneticField, A: VectorPotential,
                   grid: PhaseSpaceGrid, k_max: int = 80, tol: float = 1e-8,
                   quad: FluxQuadrature = DEFAULT_QUAD, threads: int = 1,
                   validate: bool = True) -> InversionResult:
    """Invert f - z by the Neumann series in the twisted algebra.

    Accumulates partial sums until the sup-norm of the dequantized residual
    (f - z) # result - 1 over the interior 80% of phase space drops below
    ``tol``, or ``k_max`` terms are used.
    """
    z = complex(z)
    if validate:
        _require_invertible(f, z, grid)
    P = grid.npoints
    Mf = quantize(f, A, grid, quad, threads).matrix - z * np.eye(P)
    Q = quantize(_reciprocal_symbol(f, z), A, grid, quad, threads).matrix
    R = np.eye(P) - Mf @ Q
    nR = float(sp_linalg.svdvals(R)[0])
    if nR >= 1.0:
        raise DivergenceError(
            f"series generator has operator norm {nR:.4g} >= 1 at z = {z}; "
            "seed at larger |z| and extend via the resolvent identity")
    S = np.eye(P)
    T = np.eye(P)
    terms = 1
    for k in range(1, k_max + 1):
        T = T @ R
        S = S + T
        terms = k + 1
        if np.abs(T).max() * P < 0.1 * tol:  # cheap bound before the exact read
            break
    result_mat = Q @ S
    sym = dequantize(MagneticOperator(grid, result_mat, gauge=A), A, quad, threads)
    residual = inversion_residual(Mf, result_mat, grid, A, quad, threads)
    return InversionResult(symbol=sym, z=z, terms=terms, residual=residual,
                           norm_R=nR, matrix=result_mat)


def inversion_residual(Mf_minus_z: np.ndarray, inverse_mat: np.ndarray,
                       grid: PhaseSpaceGrid, A: VectorPotential,
                       quad: FluxQuadrature = DEFAULT_QUAD, threads: int = 1) -> float:
    """sup over the interior 80% of |dequantize(Mf - z) # inverse - 1|."""
    res = MagneticOperator(grid, Mf_minus_z @ inverse_mat - np.eye(grid.npoints), gauge=A)
    sym = dequantize(res, A, quad, threads)
    mask = np.broadcast_to(sym.interior_mask(), sym.values.shape)
    return float(np.abs(sym.values[mask]).max())


# ---------------------------------------------------------------------------
# regularizers
# ---------------------------------------------------------------------------


def _bracket_power_symbol(n: int, m: float, lam: float = 0.0) -> Symbol:
    def fn(x, xi, m=m, lam=lam):
        out = japanese_bracket(np.asarray(xi, dtype=float)) ** m + lam
        return out + np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(xi)[:-1]))

    return Symbol.from_callable(fn, n=n, m=m, rho=1.0, delta=0.0, real=True,
                                x_independent=True)


@dataclass(frozen=True)
class Regularizer:
    """The order-reducing pair r_m, r_{-m} built from p_{m,lambda} = <xi>^m + lambda."""

    m: float
    lam: float
    r_plus: Symbol                      # r_m for m > 0 (or the constant 1)
    r_minus: SampledSymbol | Symbol     # its twisted inverse
    inversion: InversionResult | None = None


def build_regularizer(m: float, B: MagneticField, A: VectorPotential,
                      grid: PhaseSpaceGrid, lam_start: float = 1.0,
                      max_doublings: int = 30, quad: FluxQuadrature = DEFAULT_QUAD,
                      threads: int = 1) -> Regularizer:
    """Choose lambda by doubling until the series generator norm of
    p_{m,lambda} at z = 0 drops below 1/2, then invert.

    For m = 0 the regularizer is the constant 1; for m < 0 it is the twisted
    inverse of p_{|m|, lambda}.
    """
    if m == 0:
        one = _bracket_power_symbol(grid.n, 0.0)
        return Regularizer(m=0.0, lam=0.0, r_plus=one, r_minus=one)
    mm = abs(m)
    lam = lam_start
    for _ in range(max_doublings):
        p = _bracket_power_symbol(grid.n, mm, lam)
        if norm_Rz(p, 0.0, B, A, grid, quad, threads) < 0.5:
            break
        lam *= 2.0
    else:
        raise DivergenceError(
            f"no lambda <= {lam} brought the series generator norm below 1/2")
    inv = neumann_invert(p, 0.0, B, A, grid, tol=1e-10, quad=quad, threads=threads,
                         validate=False)
    if m > 0:
        return Regularizer(m=m, lam=lam, r_plus=p, r_minus=inv.symbol, inversion=inv)
    return Regularizer(m=m, lam=lam, r_plus=p, r_minus=inv.symbol, inversion=inv)


# ---------------------------------------------------------------------------
# decay-order fit of the inverse
# ---------------------------------------------------------------------------


def order_check_inverse(result: SampledSymbol, grid: PhaseSpaceGrid,
                        xi_window=(0.35, 0.85)) -> float:
    """Fit log|result(0, xi)| against log<xi> along the positive xi_1 ray;
    the slope estimates the symbol order of the inverse (about -m).

    The window is given as fractions of the largest momentum node; it starts
    well away from zero because the |z|-shift flattens the decay at small xi.
    """
    N, n = grid.N, grid.n
    mid = N // 2
    if n == 1:
        ray = result.values[mid, :]
    else:
        ray = result.values[mid, mid, :, mid]
    xi = grid.xi_nodes
    keep = (xi >= xi_window[0] * np.max(xi)) & (xi <= xi_window[1] * np.max(xi))
    vals = np.maximum(np.abs(ray[keep]), 1e-300)
    logs = np.log(np.sqrt(1.0 + xi[keep] ** 2))
    slope, _ = np.polyfit(logs, np.log(vals), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# resolvent families
# ---------------------------------------------------------------------------


@dataclass
class ResolventFamily:
    """Map z -> twisted inverse of f - z, built by Neumann series at
    admissible real z and extended to nonreal z by marching the resolvent
    identity X' = X + (z' - z) X X' in contraction-sized steps."""

    f: Symbol
    B: MagneticField
    A: VectorPotential
    grid: PhaseSpaceGrid
    quad: FluxQuadrature = DEFAULT_QUAD
    threads: int = 1
    seed_z: float | None = None
    entries: dict = field(default_factory=dict)

    def _seed(self) -> complex:
        if self.seed_z is None:
            inf_f = _sampled_inf(self.f, self.grid)
            self.seed_z = min(inf_f - 10.0, -10.0)
        return complex(self.seed_z)

    def add(self, z: complex) -> InversionResult:
        z = complex(z)
        key = (z.real, z.imag)
        if key in self.entries:
            return self.entries[key]
        inf_f = _sampled_inf(self.f, self.grid)
        if abs(z.imag) < 1e-14 and z.real <= inf_f - 1.0:
            res = neumann_invert(self.f, z, self.B, self.A, self.grid,
                                 quad=self.quad, threads=self.threads)
        else:
            res = self._march(z)
        self.entries[key] = res
        return res

    def _march(self, z_target: complex) -> InversionResult:
        z0 = self._seed()
        base = self.add(z0)
        X = base.matrix
        P = self.grid.npoints
        z = complex(z0)
        guard = 0
        while z != z_target:
            norm_X = float(sp_linalg.svdvals(X)[0])
            step_cap = 0.5 / norm_X
            dz = z_target - z
            if abs(dz) > step_cap:
                dz = dz / abs(dz) * step_cap
            z_next = z + dz
            # fixed-point iteration of the resolvent identity
            Y = X.copy()
            for _ in range(200):
                Y_new = X + dz * (X @ Y)
                delta = np.abs(Y_new - Y).max()
                Y = Y_new
                if delta < 1e-14:
                    break
            X = Y
            z = z_next
            guard += 1
            if guard > 10_000:
                raise DivergenceError(f"resolvent marching to z = {z_target} stalled")
        Mf = quantize(self.f, self.A, self.grid, self.quad, self.threads).matrix \
            - z_target * np.eye(P)
        sym = dequantize(MagneticOperator(self.grid, X, gauge=self.A),
                         self.A, self.quad, self.threads)
        residual = inversion_residual(Mf, X, self.grid, self.A, self.quad, self.threads)
        nR = float(sp_linalg.svdvals(np.eye(P) - Mf @ X)[0])
        return InversionResult(symbol=sym, z=z_target, terms=0, residual=residual,
                               norm_R=nR, matrix=X)

    # -- family invariants --------------------------------------------------

    def resolvent_equation_residual(self, z1: complex, z2: complex) -> float:
        """sup_interior |Phi(r_z1) - Phi(r_z2) - (z1 - z2) Phi(r_z1) # Phi(r_z2)|."""
        r1 = self.add(z1)
        r2 = self.add(z2)
        combo = r1.matrix - r2.matrix - (z1 - z2) * (r1.matrix @ r2.matrix)
        sym = dequantize(MagneticOperator(self.grid, combo, gauge=self.A),
                         self.A, self.quad, self.threads)
        mask = np.broadcast_to(sym.interior_mask(), sym.values.shape)
        return float(np.abs(sym.values[mask]).max())

    def adjoint_symmetry_residual(self, z: complex) -> float:
        """sup_interior |Phi(r_z)^# - Phi(r_zbar)| (involution = conjugate
        transpose of the phase-stripped table)."""
        rz = self.add(z)
        rzb = self.add(np.conj(z))
        adj = SampledSymbol(self.grid, rz.symbol.table.conj().T)
        diff = adj - rzb.symbol
        mask = np.broadcast_to(diff.interior_mask(), diff.values.shape)
        return float(np.abs(diff.values[mask]).max())


# ---------------------------------------------------------------------------
# affiliated functional calculus
# ---------------------------------------------------------------------------


def affiliated_calculus(f: Symbol, A: VectorPotential, grid: PhaseSpaceGrid,
                        eta, quad: FluxQuadrature = DEFAULT_QUAD,
                        hermiticity_tol: float = 1e-8, threads: int = 1) -> MagneticOperator:
    """eta(quantize(f)) by dense Hermitian spectral calculus.

    ``eta`` is a callable applied to the eigenvalues (a continuous function
    vanishing at infinity in the intended use)."""
    M = quantize(f, A, grid, quad, threads)
    defect = M.hermiticity_defect()
    if defect > hermiticity_tol:
        raise ValueError(f"matrix is not Hermitian: relative defect {defect:.3e}")
    H = 0.5 * (M.matrix + M.matrix.conj().T)
    w, V = sp_linalg.eigh(H)
    vals = np.asarray(eta(w), dtype=complex)
    out = (V * vals) @ V.conj().T
    return MagneticOperator(grid, out, gauge=A, symbol=None)
