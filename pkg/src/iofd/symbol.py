"""Symbols of discrete Helmholtz operators and their zero sets.

Everything here works in ``h = 1`` normalization: a stencil at ``kh`` has
symbol ``P1(xi) = sum_gamma f_gamma exp(i gamma . xi)``, which is real for
symmetric stencils.  The zero set of ``P1`` is star shaped for
Helmholtz-like symbols, ``{g_P(theta) theta}``, and the relative
phase-slowness error is ``g_P(theta) / kh - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import (
    TWO_PI,
    CentralStencil,
    QStencil,
    SchemeId,
    Stencil,
    as_scheme,
    central_stencil,
    compact_coeffs,
    offsets,
    scheme_stencil,
)

N_SCAN = 64
N_BISECT = 80
N_NEWTON = 4


class NoPropagatingRootError(ArithmeticError):
    """The symbol has no sign change along the requested direction."""


class DegenerateCurvatureError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class ContinuousSymbol:
    """The exact symbol ``|xi|^2 - (kh)^2`` in the same normalization."""

    dim: int
    kh: float


@dataclass(frozen=True, eq=False)
class ZeroPoint:
    xi: np.ndarray
    grad_norm: float
    curvature: float


# ---------------------------------------------------------------------------
# evaluation kernels (broadcasting over leading axes)


def _compact(A, xi, order=0):
    A = np.asarray(A)
    xi = np.asarray(xi, dtype=float)
    dim = xi.shape[-1]
    gam, cls = offsets(dim)
    w = A[..., cls]
    phase = xi @ gam.T
    if order == 0:
        s = np.sin(0.5 * phase)
        return w.sum(axis=-1) - 2.0 * np.sum(w * s * s, axis=-1)
    if order == 1:
        return -(w * np.sin(phase)) @ gam
    wc = w * np.cos(phase)
    return -np.einsum("...g,gi,gj->...ij", wc, gam, gam)


def _central(c, kh, xi, order=0):
    xi = np.asarray(xi, dtype=float)
    c = np.asarray(c, dtype=float)
    half = (len(c) - 1) // 2
    m = np.arange(-half, half + 1)
    arg = xi[..., None] * m
    if order == 0:
        s = np.sin(0.5 * arg)
        return np.sum(2.0 * c * s * s, axis=(-1, -2)) - kh * kh
    if order == 1:
        return np.sum(c * m * np.sin(arg), axis=-1)
    diag = np.sum(c * m * m * np.cos(arg), axis=-1)
    return diag[..., :, None] * np.eye(xi.shape[-1])


def _continuous(kh, xi, order=0):
    xi = np.asarray(xi, dtype=float)
    if order == 0:
        return np.sum(xi * xi, axis=-1) - kh * kh
    if order == 1:
        return 2.0 * xi
    return 2.0 * np.broadcast_to(np.eye(xi.shape[-1]), xi.shape + (xi.shape[-1],))


def _kernel(stencil):
    if isinstance(stencil, Stencil):
        return lambda xi, order=0: _compact(stencil.a, xi, order)
    if isinstance(stencil, CentralStencil):
        return lambda xi, order=0: _central(stencil.c, stencil.kh, xi, order)
    if isinstance(stencil, ContinuousSymbol):
        return lambda xi, order=0: _continuous(stencil.kh, xi, order)
    raise TypeError(f"not a symbol: {type(stencil).__name__}")


def symbol_eval(stencil, xi):
    """``P1(xi)`` for a compact, central or continuous symbol."""
    return _kernel(stencil)(xi, 0)


def grad_symbol(stencil, xi):
    return _kernel(stencil)(xi, 1)


def hess_symbol(stencil, xi):
    return _kernel(stencil)(xi, 2)


def q_symbol_eval(q: QStencil, xi):
    """``Q1(xi) = sum_gamma g_gamma cos(gamma . xi)``; equals 1 at ``xi = 0``."""
    return _compact(q.g, xi, 0)


# ---------------------------------------------------------------------------
# directions


def direction(dim: int, theta) -> np.ndarray:
    """Unit vector(s) from an angle (2-D) or (polar, azimuth) pair (3-D).

    Anything already shaped ``(..., dim)`` with unit rows is normalized and
    returned as is.
    """
    theta = np.asarray(theta, dtype=float)
    if dim == 2 and (theta.ndim == 0 or theta.shape[-1] != 2):
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if dim == 3 and theta.shape[-1:] == (2,):
        pol, az = theta[..., 0], theta[..., 1]
        return np.stack([np.sin(pol) * np.cos(az), np.sin(pol) * np.sin(az), np.cos(pol)], axis=-1)
    if theta.shape[-1:] == (dim,):
        return theta / np.linalg.norm(theta, axis=-1, keepdims=True)
    raise ValueError(f"cannot interpret {theta.shape} as a {dim}-D direction")


def angle_grid(dim: int, n_angles: int):
    """Uniform angles on the symmetry-reduced sphere.

    2-D: ``n_angles`` points in [0, pi/4].  3-D: a tensor grid on
    [0, pi/2] x [0, pi/4] with about ``n_angles`` points (twice as many polar
    as azimuthal samples).  Returns ``(angles, directions)``.
    """
    if dim == 2:
        ang = np.linspace(0.0, np.pi / 4, n_angles)
        return ang, direction(2, ang)
    n_az = max(2, int(round(np.sqrt(n_angles / 2))))
    n_pol = max(2, int(round(n_angles / n_az)))
    pol, az = np.meshgrid(np.linspace(0, np.pi / 2, n_pol), np.linspace(0, np.pi / 4, n_az), indexing="ij")
    ang = np.stack([pol.ravel(), az.ravel()], axis=-1)
    return ang, direction(3, ang)


def angle_weights(dim: int, n_angles: int):
    """Trapezoid quadrature weights matching :func:`angle_grid`."""
    if dim == 2:
        return _trapz_weights(np.linspace(0.0, np.pi / 4, n_angles))
    ang, _ = angle_grid(3, n_angles)
    pol = np.unique(ang[:, 0])
    az = np.unique(ang[:, 1])
    return np.outer(_trapz_weights(pol), _trapz_weights(az)).ravel()


def _trapz_weights(x):
    x = np.asarray(x, dtype=float)
    if x.size == 1:
        return np.ones(1)
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


# ---------------------------------------------------------------------------
# zero set


def radial_roots(evaluate, dirs, rmax, strict=True):
    """Smallest positive root of ``r -> P(r * dir)`` for a batch of rays.

    ``evaluate(xi, order)`` evaluates the (batched) symbol; ``dirs`` has
    shape ``(..., d)`` and ``rmax`` broadcasts against ``dirs[..., 0]``.  The
    scan is geometric on (0, rmax], followed by bisection and a bracketed
    Newton polish.  Rays without a sign change raise
    :class:`NoPropagatingRootError` (``strict``) or give NaN.
    """
    dirs = np.asarray(dirs, dtype=float)
    rmax = np.broadcast_to(np.asarray(rmax, dtype=float), dirs.shape[:-1])
    p0 = evaluate(np.zeros_like(dirs), 0)
    ratio = np.geomspace(1e-4, 1.0, N_SCAN)
    lo = np.zeros(rmax.shape)
    hi = np.full(rmax.shape, np.nan)
    prev = np.zeros(rmax.shape)
    found = np.zeros(rmax.shape, dtype=bool)
    negative = p0 < 0
    for q in ratio:
        r = q * rmax
        val = evaluate(r[..., None] * dirs, 0)
        new = ~found & negative & (val >= 0)
        lo = np.where(new, prev, lo)
        hi = np.where(new, r, hi)
        found |= new
        prev = r
        if found.all():
            break
    if strict and not found.all():
        raise NoPropagatingRootError("symbol has no propagating root along some direction")
    hi = np.where(found, hi, 1.0)
    lo = np.where(found, lo, 0.0)
    for _ in range(N_BISECT):
        mid = 0.5 * (lo + hi)
        neg = evaluate(mid[..., None] * dirs, 0) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all(hi - lo <= 4e-16 * hi):
            break
    r = 0.5 * (lo + hi)
    for _ in range(N_NEWTON):
        xi = r[..., None] * dirs
        val = evaluate(xi, 0)
        slope = np.sum(evaluate(xi, 1) * dirs, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(slope != 0, val / slope, 0.0)
        cand = r - step
        r = np.where((cand >= lo) & (cand <= hi), cand, r)
    return np.where(found, r, np.nan)


def brillouin_radius(dirs):
    dirs = np.asarray(dirs, dtype=float)
    return np.pi / np.max(np.abs(dirs), axis=-1)


def zero_radius(stencil, theta) -> float:
    """``g_P(theta)``: the smallest ``r > 0`` with ``P1(r theta) = 0``."""
    dirs = direction(stencil.dim, theta)
    r = radial_roots(_kernel(stencil), dirs, brillouin_radius(dirs))
    return r if np.ndim(r) else float(r)


def zero_radii_compact(A, dirs, strict=False):
    """Batched zero radii; ``A`` shape ``(m, d+1)``, ``dirs`` shape ``(n, d)``.

    Returns ``(m, n)`` radii (NaN where no root exists unless ``strict``).
    """
    A = np.asarray(A)[:, None, :]
    dirs = np.asarray(dirs, dtype=float)
    full = np.broadcast_to(dirs, (A.shape[0],) + dirs.shape)
    return radial_roots(lambda xi, order=0: _compact(A, xi, order), full, brillouin_radius(full), strict)


def _analysis_symbol(scheme: SchemeId, invG: float):
    kh = TWO_PI * float(invG)
    if scheme.tag.startswith("FD"):
        return central_stencil(scheme.dim, int(scheme.tag[2:]), kh)
    return scheme_stencil(scheme, kh)


def phase_slowness_error(scheme, invG: float, theta, dim: int | None = None):
    """Relative phase-slowness error ``g_P(theta) / kh - 1``."""
    scheme = as_scheme(scheme, dim)
    stencil = _analysis_symbol(scheme, invG)
    return zero_radius(stencil, theta) / stencil.kh - 1.0


def phase_error_curve(scheme, invG: float, n_angles: int | None = None, dim: int | None = None, strict: bool = True):
    """``(angles, delta_ph)`` over the uniform symmetry-reduced angle grid.

    With ``strict=False`` directions without a propagating root give NaN.
    """
    scheme = as_scheme(scheme, dim)
    if n_angles is None:
        n_angles = 64 if scheme.dim == 2 else 200
    ang, dirs = angle_grid(scheme.dim, n_angles)
    stencil = _analysis_symbol(scheme, invG)
    r = radial_roots(_kernel(stencil), dirs, brillouin_radius(dirs), strict)
    return ang, r / stencil.kh - 1.0


def max_phase_error(scheme, invG: float, n_angles: int | None = None, dim: int | None = None) -> float:
    """Maximum over angles of ``|delta_ph|``."""
    scheme = as_scheme(scheme, dim)
    if n_angles is not None and n_angles < 16:
        raise ValueError("use at least 16 angles")
    _, d = phase_error_curve(scheme, invG, n_angles)
    return float(np.max(np.abs(d)))


# ---------------------------------------------------------------------------
# geometry of the zero set


def _tangent_basis(n):
    """Orthonormal basis (columns) of the complement of unit vector ``n``."""
    d = n.size
    q, _ = np.linalg.qr(np.column_stack([n, np.eye(d)]))
    return q[:, 1:d]


def curvature_K(stencil, xi) -> float:
    """Product of principal curvatures of the zero set at ``xi``.

    With the gradient rotated onto the last axis the zero set is locally a
    graph ``xi_d = g(xi')``; by implicit differentiation the Hessian of
    ``g`` is ``-T^t H T / |grad P|`` (``T`` the tangent basis), and ``K`` is
    the product of the negated eigenvalues.
    """
    xi = np.asarray(xi, dtype=float)
    g = grad_symbol(stencil, xi)
    gn = np.linalg.norm(g)
    if gn == 0:
        raise DegenerateCurvatureError("vanishing gradient on the zero set")
    T = _tangent_basis(g / gn)
    HT = T.T @ hess_symbol(stencil, xi) @ T
    lam = np.linalg.eigvalsh(0.5 * (HT + HT.T)) / gn
    K = float(np.prod(lam))
    if not np.all(lam > 0) or not np.isfinite(K):
        raise DegenerateCurvatureError(f"zero set not strictly convex here (eigenvalues {lam})")
    return K


def zero_point(stencil, theta) -> ZeroPoint:
    dirs = direction(stencil.dim, theta)
    xi = zero_radius(stencil, dirs) * dirs
    return ZeroPoint(xi, float(np.linalg.norm(grad_symbol(stencil, xi))), curvature_K(stencil, xi))


def normal_map(stencil, xi):
    g = grad_symbol(stencil, xi)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def zero_point_with_normal(stencil, normal, tol=1e-14, max_iter=200) -> ZeroPoint:
    """The point of the zero set whose outward normal is ``normal``."""
    target = direction(stencil.dim, normal)
    theta = target.copy()
    for _ in range(max_iter):
        xi = zero_radius(stencil, theta) * theta
        miss = target - normal_map(stencil, xi)
        if np.linalg.norm(miss) < tol:
            break
        theta = theta + miss
        theta /= np.linalg.norm(theta)
    xi = zero_radius(stencil, theta) * theta
    return ZeroPoint(xi, float(np.linalg.norm(grad_symbol(stencil, xi))), curvature_K(stencil, xi))


def amplitude_ratio_target(stencil, theta) -> float:
    """``|dP1/dxi| / |dH1/dxi|`` at ``xi = g_P(theta) theta``, with ``|dH1/dxi| = 2|xi|``."""
    dirs = direction(stencil.dim, theta)
    xi = zero_radius(stencil, dirs) * dirs
    return float(np.linalg.norm(grad_symbol(stencil, xi)) / (2.0 * np.linalg.norm(xi)))


def amplitude_targets_compact(A, dirs):
    """Batched zero points and ``sqrt`` amplitude targets.

    Returns ``(xi, target)`` with shapes ``(m, n, d)`` and ``(m, n)``.
    """
    A = np.asarray(A)
    r = zero_radii_compact(A, dirs, strict=True)
    xi = r[..., None] * np.asarray(dirs)[None]
    g = _compact(A[:, None, :], xi, 1)
    ratio = np.linalg.norm(g, axis=-1) / (2.0 * r)
    return xi, np.sqrt(ratio)


def q_error(dim: int, invG: float, n_angles: int = 64, q_table=None, alpha_table=None) -> float:
    """Max over angle of ``|Q1(xi) - sqrt(ratio)|`` on the IOFD zero set."""
    from .coeffs import family_coeffs, iofd_table, q_table as default_q, q_weights

    alpha_table = iofd_table(dim) if alpha_table is None else alpha_table
    q_table = default_q(dim) if q_table is None else q_table
    kh = TWO_PI * invG
    A = family_coeffs(dim, alpha_table(invG), kh * kh)[None]
    _, dirs = angle_grid(dim, n_angles)
    xi, target = amplitude_targets_compact(A, dirs)
    g = q_weights(dim, q_table(invG))
    return float(np.max(np.abs(_compact(g, xi[0], 0) - target[0])))


def compact_symbol(scheme, kh):
    """Convenience: a :class:`Stencil` for a compact scheme at ``kh``."""
    scheme = as_scheme(scheme)
    return Stencil(scheme.dim, kh, compact_coeffs(scheme, kh), str(scheme))
