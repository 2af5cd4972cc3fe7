"""Re-deriving the interpolated coefficient tables.

``optimize_alpha`` minimizes the integrated squared phase-slowness error
(plus a small penalty on d(alpha)/d(1/G)) over the Hermite control values
with a staged Levenberg-Marquardt iteration.  ``fit_q`` fits the
amplitude-correction weights, which is a linear least-squares problem
because ``Q1`` is linear in ``beta``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .coeffs import (
    JSS_ALPHA,
    OPT_ALPHA,
    TWO_PI,
    HermiteTable,
    family_coeffs,
    iofd_table,
    offsets,
)
from .symbol import _compact, _kernel, angle_grid, angle_weights, brillouin_radius, radial_roots, zero_radii_compact

log = logging.getLogger(__name__)

PENALTY = 1e3
FD_STEP = 1e-6
STAGES = ((0.0, 0.2, None), (0.1, 0.3, 0.1), (0.2, 0.4, 0.2))  # (lo, hi, freeze nodes <= this)


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ObjectiveConfig:
    dim: int = 2
    invG_max: float = 0.40
    invG_step: float = 0.01
    n_angles: int | None = None
    lam: float = 1e-12
    node_spacing: float = 0.05
    max_iter: int = 200

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.n_angles is None:
            object.__setattr__(self, "n_angles", 20 if self.dim == 2 else 200)
        for name in ("invG_max", "invG_step", "node_spacing", "n_angles"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        ratio = self.invG_max / self.node_spacing
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("node_spacing must divide invG_max")

    @property
    def n_params(self) -> int:
        return 3 if self.dim == 2 else 5

    @property
    def nodes(self) -> np.ndarray:
        n = int(round(self.invG_max / self.node_spacing))
        return np.round(np.arange(n + 1) * self.node_spacing, 12)

    def invG_samples(self, lo=0.0, hi=None) -> np.ndarray:
        """Sample points of the 1/G integral.  1/G = 0 is skipped: delta_ph is 0/0 there."""
        hi = self.invG_max if hi is None else hi
        n = int(round(self.invG_max / self.invG_step))
        g = np.round(np.arange(1, n + 1) * self.invG_step, 12)
        return g[(g >= lo - 1e-12) & (g <= hi + 1e-12)]


@dataclass
class OptimizeResult:
    table: HermiteTable
    objective: float
    history: list = field(default_factory=list)
    converged: bool = True


def default_seed(cfg: ObjectiveConfig) -> HermiteTable:
    const = np.asarray(JSS_ALPHA if cfg.dim == 2 else OPT_ALPHA)
    nodes = cfg.nodes
    vals = np.tile(const, (nodes.size, 1))
    return HermiteTable(nodes, vals, np.zeros_like(vals), f"seed{cfg.dim}d")


class _Problem:
    """Residuals on a fixed (1/G, angle) sample set, batched over parameter vectors."""

    def __init__(self, cfg: ObjectiveConfig, lo=0.0, hi=None):
        self.cfg = cfg
        self.g = cfg.invG_samples(lo, hi)
        if self.g.size == 0:
            raise ValueError("no 1/G samples in the requested range")
        _, self.dirs = angle_grid(cfg.dim, cfg.n_angles)
        wg = _trapz(self.g)
        wt = angle_weights(cfg.dim, cfg.n_angles)
        self.sw = np.sqrt(np.outer(wg, wt)).ravel()
        self.sreg = np.sqrt(cfg.lam * wg)
        probe = HermiteTable(cfg.nodes, np.zeros((cfg.nodes.size, cfg.n_params)), np.zeros((cfg.nodes.size, cfg.n_params)))
        self.wv, self.wd = probe.basis(self.g)
        i, t, step = probe._locate(self.g)
        t2 = t * t
        n = cfg.nodes.size
        self.dv = np.zeros((self.g.size, n))
        self.dd = np.zeros((self.g.size, n))
        rows = np.arange(self.g.size)
        self.dv[rows, i] = (6 * t2 - 6 * t) / step
        self.dv[rows, i + 1] = (-6 * t2 + 6 * t) / step
        self.dd[rows, i] = 3 * t2 - 4 * t + 1
        self.dd[rows, i + 1] = 3 * t2 - 2 * t
        self.kh = TWO_PI * self.g
        self.size = self.g.size * self.dirs.shape[0] + self.g.size * cfg.n_params

    def residuals(self, vecs):
        """``vecs`` shape ``(b, n_total)`` -> residuals ``(b, size)``."""
        vecs = np.atleast_2d(vecs)
        b = vecs.shape[0]
        p = self.cfg.n_params
        arr = vecs.reshape(b, -1, p, 2)
        vals, ders = arr[..., 0], arr[..., 1]
        alpha = np.einsum("gn,bnp->bgp", self.wv, vals) + np.einsum("gn,bnp->bgp", self.wd, ders)
        dalpha = np.einsum("gn,bnp->bgp", self.dv, vals) + np.einsum("gn,bnp->bgp", self.dd, ders)
        A = family_coeffs(self.cfg.dim, alpha, (self.kh**2)[None, :])
        A = A.reshape(-1, A.shape[-1])
        with np.errstate(invalid="ignore", over="ignore"):
            r = zero_radii_compact(A, self.dirs)
        kh = np.tile(self.kh, b)[:, None]
        delta = r / kh - 1.0
        disp = delta.reshape(b, -1) * self.sw
        disp = np.where(np.isfinite(disp), disp, PENALTY)
        reg = (dalpha * self.sreg[None, :, None]).reshape(b, -1)
        return np.concatenate([disp, reg], axis=1)


def _trapz(x):
    from .symbol import _trapz_weights

    return _trapz_weights(x)


def objective_residuals(params, cfg: ObjectiveConfig, invG_range=None) -> np.ndarray:
    """Residual vector whose squared norm is the discretized objective.

    ``params`` is a :class:`HermiteTable` or its
    :meth:`~HermiteTable.to_vector` form.  The dispersion part is
    ``sqrt(w) * delta_ph`` over the (1/G, angle) grid with trapezoid
    weights ``w``; rays without a propagating root give ``PENALTY``.  The
    regularization part is ``sqrt(lam * w_G) * d(alpha_j)/d(1/G)``.
    """
    vec = params.to_vector() if isinstance(params, HermiteTable) else np.asarray(params, dtype=float)
    lo, hi = (0.0, None) if invG_range is None else invG_range
    return _Problem(cfg, lo, hi).residuals(vec[None])[0]


def objective_value(params, cfg: ObjectiveConfig, invG_range=None) -> float:
    r = objective_residuals(params, cfg, invG_range)
    return float(r @ r)


def levenberg_marquardt(fun, x0, free, max_iter=200, mu0=1e-3, step=FD_STEP, xtol=1e-12, ftol=1e-14):
    """Minimize ``|fun(x)|^2`` over the entries ``x[free]``.

    ``fun`` maps a batch ``(b, n)`` to residuals ``(b, m)`` so the
    forward-difference Jacobian costs one batched call.  Steps are only
    accepted when they decrease the objective.
    """
    x = np.array(x0, dtype=float)
    free = np.flatnonzero(free)
    r = fun(x[None])[0]
    f = r @ r
    mu = mu0
    history = [f]
    converged = False
    for _ in range(max_iter):
        h = step * np.maximum(1.0, np.abs(x[free]))
        X = np.repeat(x[None], free.size, axis=0)
        X[np.arange(free.size), free] += h
        J = ((fun(X) - r) / h[:, None]).T
        JtJ = J.T @ J
        g = J.T @ r
        dscale = np.maximum(np.diag(JtJ), 1e-30)
        improved = False
        for _ in range(30):
            try:
                dx = -np.linalg.solve(JtJ + mu * np.diag(dscale), g)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            xn = x.copy()
            xn[free] += dx
            rn = fun(xn[None])[0]
            fn = rn @ rn
            if fn < f:
                improved = True
                break
            mu *= 10
        if not improved:
            converged = True
            break
        rel = (f - fn) / f
        x, r, f = xn, rn, fn
        history.append(f)
        mu = max(mu / 3, 1e-12)
        if rel < ftol or np.max(np.abs(dx)) < xtol:
            converged = True
            break
    return x, f, history, converged


def optimize_alpha(cfg: ObjectiveConfig | None = None, seed: HermiteTable | None = None, stages=STAGES) -> OptimizeResult:
    """Staged least-squares fit of the family parameters as Hermite functions of 1/G.

    Each stage fits the samples in ``[lo, hi]`` and only moves nodes in
    ``(freeze, hi]``.  The node at ``freeze`` itself stays fixed too: it
    shapes the interval below it, which the stage no longer samples.
    """
    cfg = ObjectiveConfig() if cfg is None else cfg
    seed = default_seed(cfg) if seed is None else seed
    if seed.param_count != cfg.n_params or not np.allclose(seed.nodes, cfg.nodes):
        raise ValueError("seed table does not match the configuration")
    x = seed.to_vector()
    per_node = 2 * cfg.n_params
    nodes = cfg.nodes
    history = []
    converged = True
    for lo, hi, freeze in stages:
        hi = min(hi, cfg.invG_max)
        prob = _Problem(cfg, lo, hi)
        node_free = nodes <= hi + 1e-12
        if freeze is not None:
            node_free &= nodes > freeze + 1e-12
        free = np.repeat(node_free, per_node)
        x, f, hist, ok = levenberg_marquardt(prob.residuals, x, free, cfg.max_iter)
        log.info("stage [%g, %g]: objective %.3e after %d steps", lo, hi, f, len(hist) - 1)
        history.append(hist)
        converged &= ok
    if not converged:
        warnings.warn("optimizer hit the iteration cap; returning best iterate", ConvergenceWarning)
    table = HermiteTable.from_vector(nodes, x, f"fitted-iofd{cfg.dim}d")
    return OptimizeResult(table, objective_value(table, cfg), history, converged)


# ---------------------------------------------------------------------------
# amplitude correction


def _class_cosines(dim, xi):
    """``C_c(xi) = sum_{|gamma| = c} cos(gamma . xi)`` for each class ``c``."""
    gam, cls = offsets(dim)
    cos = np.cos(xi @ gam.T)
    return np.stack([cos[..., cls == c].sum(axis=-1) for c in range(dim + 1)], axis=-1)


def q_design(dim, xi):
    """Affine map ``beta -> Q1(xi)``: returns ``(B, c)`` with ``Q1 = B @ beta + c``."""
    C = _class_cosines(dim, xi)
    if dim == 2:
        last = C[..., 2] / 4
        B = np.stack([C[..., 0] - last, C[..., 1] / 4 - last], axis=-1)
    else:
        last = C[..., 3] / 8
        B = np.stack([C[..., 0] - last, C[..., 1] / 6 - last, C[..., 2] / 12 - last], axis=-1)
    return B, last


def fit_q(cfg: ObjectiveConfig | None = None, alpha_table: HermiteTable | None = None, stencil_at=None, ridge=1e-12):
    """Least-squares fit of the Q weights over the (1/G, angle) samples.

    The symbol defaults to the family with ``alpha_table`` (the embedded
    IOFD table when omitted); ``stencil_at(kh)`` overrides it with any
    symbol object.  Returns the fitted :class:`HermiteTable` of ``beta``.
    """
    cfg = ObjectiveConfig() if cfg is None else cfg
    dim = cfg.dim
    alpha_table = iofd_table(dim) if alpha_table is None else alpha_table
    g = cfg.invG_samples()
    _, dirs = angle_grid(dim, cfg.n_angles)
    sw = np.sqrt(np.outer(_trapz(g), angle_weights(dim, cfg.n_angles)))
    nb = dim
    nodes = cfg.nodes
    probe = HermiteTable(nodes, np.zeros((nodes.size, nb)), np.zeros((nodes.size, nb)))
    wv, wd = probe.basis(g)
    rows, rhs = [], []
    for i, invG in enumerate(g):
        kh = TWO_PI * invG
        if stencil_at is None:
            A = family_coeffs(dim, alpha_table(invG), kh * kh)
            evaluate = lambda xi, order=0, A=A: _compact(A, xi, order)
        else:
            evaluate = _kernel(stencil_at(kh))
        r = radial_roots(evaluate, dirs, brillouin_radius(dirs))
        xi = r[:, None] * dirs
        target = np.sqrt(np.linalg.norm(evaluate(xi, 1), axis=-1) / (2 * r))
        B, c = q_design(dim, xi)
        # beta_j = wv @ values_j + wd @ derivs_j, laid out like to_vector()
        coef = np.stack([wv[i][:, None, None] * B.T[None], wd[i][:, None, None] * B.T[None]], axis=2)
        row = coef.transpose(3, 0, 1, 2).reshape(dirs.shape[0], -1)
        rows.append(row * sw[i][:, None])
        rhs.append((target - c) * sw[i])
    M = np.concatenate(rows)
    y = np.concatenate(rhs)
    sol, _, rank, sv = np.linalg.lstsq(M, y, rcond=None)
    if rank < M.shape[1]:
        warnings.warn(f"Q design matrix rank {rank} < {M.shape[1]}; adding a {ridge:g} ridge", ConvergenceWarning)
        n = M.shape[1]
        sol = np.linalg.solve(M.T @ M + ridge * np.eye(n), M.T @ y)
    return HermiteTable.from_vector(nodes, sol, f"fitted-q{dim}d")
