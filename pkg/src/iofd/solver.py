"""Linear solvers: sparse direct LU, omega-Jacobi, and a two-grid cycle.

The direct solver factors the lexicographically ordered 2-D system with
SuperLU (column approximate-minimum-degree ordering).  Its fill is close to
``10.5 N log2 N`` entries for these 9-point systems, which is what the
memory budget is checked against before factoring.

The two-grid method rediscretizes on the 2h grid instead of forming a
Galerkin product: the coarse operator is the same scheme assembled from the
coarsened velocity model.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    AbsorbingLayerSpec,
    DiscreteOperator,
    VelocityModel,
    assemble_helmholtz,
    cell_damping,
    coarsen_cells,
)
from .coeffs import SchemeId, as_scheme

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 2 * 1024**3
FILL_FACTOR = 10.5
RESIDUAL_CHECK = 1e-10


class CapabilityError(RuntimeError):
    """The requested solve is outside what this implementation supports."""


class MemoryBudgetError(CapabilityError):
    pass


class SingularSystemError(ArithmeticError):
    pass


class DivergenceError(ArithmeticError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


def estimated_lu_bytes(n_unknowns: int) -> float:
    n = max(int(n_unknowns), 2)
    return 16.0 * FILL_FACTOR * n * np.log2(n)


@dataclass
class BandFactorization:
    """Sparse LU of a 2-D operator; ``bandwidth`` is the lexicographic half-bandwidth."""

    shape: tuple
    bandwidth: int
    lu: object
    perm_c: np.ndarray
    nnz: int
    matrix: object = field(repr=False)
    seconds: float = 0.0

    def solve(self, rhs, check=True):
        rhs = np.asarray(rhs)
        b = rhs.reshape(-1).astype(complex)
        x = self.lu.solve(b)
        if check:
            nb = np.linalg.norm(b)
            if nb > 0:
                res = np.linalg.norm(self.matrix @ x - b) / nb
                if res > RESIDUAL_CHECK:
                    x = x + self.lu.solve(b - self.matrix @ x)
                    res = np.linalg.norm(self.matrix @ x - b) / nb
                if res > RESIDUAL_CHECK:
                    raise SingularSystemError(f"direct solve residual {res:.2e} exceeds {RESIDUAL_CHECK:g}")
        return x.reshape(rhs.shape)


def factorize(P: DiscreteOperator, budget: float = DEFAULT_BUDGET) -> BandFactorization:
    g = P.grid
    if g.dim != 2:
        raise CapabilityError("direct solves are only supported in 2-D")
    need = estimated_lu_bytes(g.size)
    if need > budget:
        raise MemoryBudgetError(
            f"LU of a {g.n[0]}x{g.n[1]} grid needs about {need / 2**30:.1f} GiB"
            f" (budget {budget / 2**30:.1f} GiB); use the two-grid solver"
        )
    A = P.matrix().tocsc().astype(complex)
    t = time.perf_counter()
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc
    dt = time.perf_counter() - t
    bw = max(abs(s[0]) * g.n[1] + abs(s[1]) for s in P.diagonals)
    log.info("LU %s: %.1fs, %.1fM nonzeros", g.n, dt, (lu.L.nnz + lu.U.nnz) / 1e6)
    return BandFactorization(A.shape, bw, lu, lu.perm_c, lu.L.nnz + lu.U.nnz, A, dt)


def band_lu_solve(P: DiscreteOperator, rhs, budget: float = DEFAULT_BUDGET):
    """Direct solve of a 2-D system; residual self-checked to 1e-10."""
    return factorize(P, budget).solve(rhs)


# ---------------------------------------------------------------------------
# multigrid components (dimension generic)


def jacobi_smooth(P: DiscreteOperator, u, rhs, omega: float, steps: int):
    """``u <- u + omega D^-1 (rhs - P u)``, ``steps`` times."""
    D = P.diagonal()
    if np.any(D == 0):
        raise ZeroDivisionError("operator has a zero diagonal entry")
    w = omega / D
    u = np.array(u, dtype=np.result_type(u, rhs, D))
    for _ in range(steps):
        u += w * (rhs - P.apply(u))
    return u


def _check_coarsenable(shape):
    if any(n % 2 == 0 or n < 3 for n in shape):
        raise ValueError(f"extents {shape} are not of the form 2m+1")


def restrict_full_weighting(fine):
    """Full weighting, 1/4 1/2 1/4 per axis; coarse point I sits at fine point 2I+1."""
    fine = np.asarray(fine)
    _check_coarsenable(fine.shape)
    out = fine
    for ax in range(fine.ndim):
        n = out.shape[ax]
        a = np.take(out, np.arange(0, n - 2, 2), axis=ax)
        b = np.take(out, np.arange(1, n - 1, 2), axis=ax)
        c = np.take(out, np.arange(2, n, 2), axis=ax)
        out = 0.25 * a + 0.5 * b + 0.25 * c
    return out


def prolong_bilinear(coarse, fine_shape=None):
    """Multilinear interpolation with zero Dirichlet values outside the grid.

    Adjoint of :func:`restrict_full_weighting` up to the factor ``2^d``.
    """
    coarse = np.asarray(coarse)
    if fine_shape is None:
        fine_shape = tuple(2 * n + 1 for n in coarse.shape)
    if tuple(fine_shape) != tuple(2 * n + 1 for n in coarse.shape):
        raise ValueError(f"fine extents {fine_shape} do not match coarse {coarse.shape}")
    out = coarse
    for ax in range(coarse.ndim):
        nc = out.shape[ax]
        shape = list(out.shape)
        shape[ax] = 2 * nc + 1
        res = np.zeros(shape, dtype=out.dtype)
        padded = np.concatenate(
            [np.zeros_like(np.take(out, [0], axis=ax)), out, np.zeros_like(np.take(out, [0], axis=ax))], axis=ax
        )
        odd = [slice(None)] * len(shape)
        odd[ax] = slice(1, None, 2)
        res[tuple(odd)] = out
        even = [slice(None)] * len(shape)
        even[ax] = slice(0, None, 2)
        res[tuple(even)] = 0.5 * (np.take(padded, np.arange(0, nc + 1), axis=ax) + np.take(padded, np.arange(1, nc + 2), axis=ax))
        out = res
    return out


# ---------------------------------------------------------------------------
# two-grid


@dataclass(frozen=True)
class TwoGridConfig:
    omega: float = 0.7
    nu: int = 4
    coarse_scheme: str = "IOFD"
    tol: float = 1e-6
    max_iters: int = 100
    budget: float = DEFAULT_BUDGET

    def __post_init__(self):
        if not 0 < self.omega < 1:
            raise ValueError("omega must lie in (0, 1)")
        if self.nu < 1:
            raise ValueError("nu must be at least 1")
        if not self.tol > 0 or self.max_iters < 1:
            raise ValueError("need tol > 0 and max_iters >= 1")


@dataclass
class SolveResult:
    u: np.ndarray
    iterations: int
    history: list
    converged: bool
    method: str = "twogrid"

    def __iter__(self):
        yield self.u
        yield self.iterations


class TwoGrid:
    """Fine operator, coarse factorization and one cycle of the method."""

    def __init__(self, model: VelocityModel, fine_scheme, cfg: TwoGridConfig, layer: AbsorbingLayerSpec | None = None):
        if model.grid.dim != 2:
            raise CapabilityError("two-grid solves need a 2-D coarse direct solver; 3-D is not supported")
        self.cfg = cfg
        fine_scheme = as_scheme(fine_scheme, 2)
        coarse_scheme = as_scheme(cfg.coarse_scheme, 2)
        sigma = cell_damping(model, layer)
        self.P = assemble_helmholtz(model, fine_scheme, damping=sigma)
        cmodel = model.coarsen()
        cppw = cmodel.ppw_range()[0]
        if cppw < 2.5 - 1e-9:
            raise CapabilityError(f"coarse level has only {cppw:.2f} points per wavelength (need 2.5)")
        self.Pc = assemble_helmholtz(cmodel, coarse_scheme, damping=coarsen_cells(sigma))
        self.lu = factorize(self.Pc, cfg.budget)

    def cycle(self, u, rhs):
        cfg = self.cfg
        u = jacobi_smooth(self.P, u, rhs, cfg.omega, cfg.nu)
        r = rhs - self.P.apply(u)
        ec = self.lu.solve(restrict_full_weighting(r), check=False)
        u = u + prolong_bilinear(ec, u.shape)
        return jacobi_smooth(self.P, u, rhs, cfg.omega, cfg.nu)


def twogrid_solve(model, fine_scheme, cfg: TwoGridConfig | None = None, rhs=None, layer=None, u0=None) -> SolveResult:
    """Stationary two-grid iteration to ``|r| <= tol |rhs|``."""
    cfg = TwoGridConfig() if cfg is None else cfg
    rhs = np.asarray(rhs, dtype=complex)
    if model.grid.dim != 2:
        raise CapabilityError("two-grid solves need a 2-D coarse direct solver; 3-D is not supported")
    nb = np.linalg.norm(rhs)
    if nb == 0:
        return SolveResult(np.zeros_like(rhs), 0, [0.0], True)
    tg = TwoGrid(model, fine_scheme, cfg, layer)
    return _stationary(tg, rhs, cfg, u0)


def _stationary(tg: TwoGrid, rhs, cfg, u0=None):
    nb = np.linalg.norm(rhs)
    u = np.zeros_like(rhs) if u0 is None else np.array(u0, dtype=complex)
    hist = [np.linalg.norm(rhs - tg.P.apply(u)) / nb]
    for it in range(1, cfg.max_iters + 1):
        u = tg.cycle(u, rhs)
        hist.append(np.linalg.norm(rhs - tg.P.apply(u)) / nb)
        log.debug("two-grid %d: %.3e", it, hist[-1])
        if hist[-1] <= cfg.tol:
            return SolveResult(u, it, hist, True)
        if it >= 5 and hist[-1] > 10 * hist[-6]:
            raise DivergenceError(f"two-grid iteration diverging (residual {hist[-1]:.2e})", hist)
    return SolveResult(u, cfg.max_iters, hist, False)


def bicgstab_accelerated(model, fine_scheme, cfg: TwoGridConfig | None = None, rhs=None, layer=None, preconditioner="twogrid"):
    """BiCGStab preconditioned by one two-grid cycle from a zero guess.

    ``preconditioner="identity"`` runs plain BiCGStab (used to check
    against a dense solve).  On breakdown the plain two-grid iteration is
    used instead, with a warning.
    """
    cfg = TwoGridConfig() if cfg is None else cfg
    rhs = np.asarray(rhs, dtype=complex)
    nb = np.linalg.norm(rhs)
    if nb == 0:
        return SolveResult(np.zeros_like(rhs), 0, [0.0], True, "bicgstab")
    if preconditioner == "twogrid":
        tg = TwoGrid(model, fine_scheme, cfg, layer)
        P = tg.P
        zero = np.zeros(rhs.shape, dtype=complex)
        M = spla.LinearOperator((rhs.size,) * 2, matvec=lambda v: tg.cycle(zero, v.reshape(rhs.shape)).ravel(), dtype=complex)
    elif preconditioner == "identity":
        tg = None
        P = assemble_helmholtz(model, fine_scheme, layer)
        M = None
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")
    A = spla.LinearOperator((rhs.size,) * 2, matvec=lambda v: P.apply(v.reshape(rhs.shape)).ravel(), dtype=complex)
    hist = [1.0]

    def record(xk):
        hist.append(np.linalg.norm(rhs.ravel() - A @ xk) / nb)

    x, info = spla.bicgstab(A, rhs.ravel(), rtol=cfg.tol, atol=0.0, maxiter=cfg.max_iters, M=M, callback=record)
    if info < 0:
        warnings.warn("BiCGStab broke down; falling back to the stationary two-grid iteration")
        if tg is None:
            tg = TwoGrid(model, fine_scheme, cfg, layer)
        return _stationary(tg, rhs, cfg)
    u = x.reshape(rhs.shape)
    res = np.linalg.norm(rhs - P.apply(u)) / nb
    return SolveResult(u, len(hist) - 1, hist, info == 0 and res <= cfg.tol * 1.0001, "bicgstab")
