"""Coefficient families for compact 9-point / 27-point Helmholtz stencils.

A compact stencil is described by the coefficients ``A_0..A_d`` where the
weight of offset ``gamma`` in ``{-1, 0, 1}^d`` is ``A_{|gamma|}`` and
``|gamma|`` is the number of nonzero components.  All coefficients are in
``h = 1`` normalization; the ``h**-2`` factor is applied at assembly.

The parameterized family (``alpha`` parameters) splits the operator into a
tensor-product Laplacian and a weighted mass term.  The interpolated scheme
(IOFD) lets the parameters depend on ``1/G = kh / (2 pi)`` through cubic
Hermite interpolation of tabulated control values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import tables

TWO_PI = 2.0 * np.pi
INVG_TOL = 1e-12

COMPACT_TAGS = ("IOFD", "QSFEM", "CHO6", "SUT", "JSS", "OPT4", "FD2")
CENTRAL_TAGS = ("FD2", "FD4", "FD6", "FD8")
ALL_TAGS = ("IOFD", "QSFEM", "CHO6", "SUT", "JSS", "OPT4", "FD2", "FD4", "FD6", "FD8")
ONLY_2D = ("QSFEM", "JSS")
ONLY_3D = ("SUT", "OPT4")

JSS_ALPHA = (0.6248, 0.37524, 0.77305)
OPT_ALPHA = (0.4964958, 0.4510125, 0.052487, 0.648355362, 0.296692332)

# c_m for m = -N/2 .. N/2
CENTRAL_COEFFS = {
    2: (1.0, -2.0, 1.0),
    4: (-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12),
    6: (1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90),
    8: (-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560),
}


class CoefficientRangeError(ValueError):
    """Raised when 1/G lies outside the range covered by a table."""


class SchemeError(ValueError):
    """Unknown scheme, or a scheme used in an unsupported dimension."""


class SingularCoefficientError(ArithmeticError):
    """Closed-form coefficients hit a vanishing denominator."""


# ---------------------------------------------------------------------------
# Hermite tables


@dataclass(frozen=True, eq=False)
class HermiteTable:
    """Piecewise cubic Hermite functions of 1/G.

    ``values[i, j]`` and ``derivs[i, j]`` are the value and the derivative
    with respect to 1/G of parameter ``j`` at ``nodes[i]``.
    """

    nodes: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    name: str = ""

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        derivs = np.atleast_2d(np.asarray(self.derivs, dtype=float))
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("need at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly ascending")
        if values.shape != (nodes.size, values.shape[1]) or derivs.shape != values.shape:
            raise ValueError("values/derivs must have shape (n_nodes, n_params)")
        for name, arr in (("nodes", nodes), ("values", values), ("derivs", derivs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def param_count(self) -> int:
        return self.values.shape[1]

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        bad = (x < self.lo - INVG_TOL) | (x > self.hi + INVG_TOL) | ~np.isfinite(x)
        if np.any(bad):
            worst = x[bad].flat[0] if x.ndim else float(x)
            raise CoefficientRangeError(
                f"1/G = {worst:.6g} outside table range [{self.lo:g}, {self.hi:g}]"
                f" (G = {1 / worst if worst else np.inf:.3g} points per wavelength)"
            )
        x = np.clip(x, self.lo, self.hi)
        i = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, self.nodes.size - 2)
        step = self.nodes[i + 1] - self.nodes[i]
        t = (x - self.nodes[i]) / step
        return i, t, step

    def basis(self, x):
        """Hermite basis weights.

        Returns ``(wv, wd)`` with shape ``x.shape + (n_nodes,)`` such that the
        interpolant of parameter ``j`` is ``wv @ values[:, j] + wd @ derivs[:, j]``.
        """
        i, t, step = self._locate(x)
        t2, t3 = t * t, t * t * t
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = (t3 - 2 * t2 + t) * step
        h01 = -2 * t3 + 3 * t2
        h11 = (t3 - t2) * step
        n = self.nodes.size
        shape = np.shape(t) + (n,)
        wv = np.zeros(shape)
        wd = np.zeros(shape)
        idx = np.expand_dims(i, -1)
        np.put_along_axis(wv, idx, np.expand_dims(h00, -1), axis=-1)
        np.put_along_axis(wv, idx + 1, np.expand_dims(h01, -1), axis=-1)
        np.put_along_axis(wd, idx, np.expand_dims(h10, -1), axis=-1)
        np.put_along_axis(wd, idx + 1, np.expand_dims(h11, -1), axis=-1)
        return wv, wd

    def __call__(self, x):
        wv, wd = self.basis(x)
        return wv @ self.values + wd @ self.derivs

    def derivative(self, x):
        """First derivative d/d(1/G) of every parameter."""
        i, t, step = self._locate(x)
        t2 = t * t
        d00 = (6 * t2 - 6 * t) / step
        d10 = 3 * t2 - 4 * t + 1
        d01 = (-6 * t2 + 6 * t) / step
        d11 = 3 * t2 - 2 * t
        v, d = self.values, self.derivs
        return (
            d00[..., None] * v[i] + d10[..., None] * d[i]
            + d01[..., None] * v[i + 1] + d11[..., None] * d[i + 1]
        )

    def with_params(self, values, derivs, name=None) -> "HermiteTable":
        return HermiteTable(self.nodes, values, derivs, self.name if name is None else name)

    def to_vector(self) -> np.ndarray:
        """Flatten as ``[values, derivs]`` interleaved per node and parameter."""
        return np.stack([self.values, self.derivs], axis=-1).ravel()

    @classmethod
    def from_vector(cls, nodes, vec, name=""):
        nodes = np.asarray(nodes, dtype=float)
        arr = np.asarray(vec, dtype=float).reshape(nodes.size, -1, 2)
        return cls(nodes, arr[..., 0], arr[..., 1], name)


def hermite_eval(table: HermiteTable, invG):
    """Evaluate all table parameters at ``invG`` (scalar or array)."""
    return table(invG)


@lru_cache(maxsize=None)
def paper_table(name: str) -> HermiteTable:
    """One of the embedded tables: ``iofd2d``, ``iofd3d``, ``q2d``, ``q3d``."""
    try:
        raw = tables.rows(name)
    except KeyError:
        raise KeyError(f"unknown table {name!r}; choose from {sorted(tables.RAW)}") from None
    arr = np.array(raw, dtype=float)
    return HermiteTable(arr[:, 0], arr[:, 1::2], arr[:, 2::2], name)


def iofd_table(dim: int) -> HermiteTable:
    return paper_table(f"iofd{dim}d")


def q_table(dim: int) -> HermiteTable:
    return paper_table(f"q{dim}d")


# ---------------------------------------------------------------------------
# Stencils


@lru_cache(maxsize=None)
def offsets(dim: int):
    """All offsets of the compact stencil and their weight class ``|gamma|``."""
    gam = np.array(list(itertools.product((-1, 0, 1), repeat=dim)), dtype=int)
    gam.setflags(write=False)
    cls = np.abs(gam).sum(axis=1)
    cls.setflags(write=False)
    return gam, cls


def multiplicity(dim: int) -> np.ndarray:
    """Number of offsets in each weight class: (1, 4, 4) or (1, 6, 12, 8)."""
    _, cls = offsets(dim)
    return np.bincount(cls, minlength=dim + 1)


@dataclass(frozen=True, eq=False)
class Stencil:
    """Compact-stencil coefficients ``A_0..A_dim`` at a fixed ``kh``."""

    dim: int
    kh: float
    a: np.ndarray
    scheme: str = ""

    def __post_init__(self):
        a = np.asarray(self.a)
        if self.dim not in (2, 3) or a.shape != (self.dim + 1,):
            raise ValueError(f"{self.dim}-D stencil needs {self.dim + 1} coefficients")
        a = a.astype(complex if np.iscomplexobj(a) else float)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    def fgamma(self) -> dict:
        """Offset map ``gamma -> f_gamma``."""
        gam, cls = offsets(self.dim)
        return {tuple(int(v) for v in g): self.a[c] for g, c in zip(gam, cls)}

    def total(self):
        """Sum of all weights; equals ``-(kh)^2`` for the parameterized family."""
        return multiplicity(self.dim) @ self.a


@dataclass(frozen=True, eq=False)
class CentralStencil:
    """Non-compact standard central differences: ``-sum_j D2_j - (kh)^2``.

    ``c`` holds the 1-D second-derivative weights ``c_m``, ``m = -N/2..N/2``.
    """

    dim: int
    kh: float
    c: tuple
    scheme: str = ""

    @property
    def order(self) -> int:
        return len(self.c) - 1


@dataclass(frozen=True, eq=False)
class QStencil:
    """Order-zero weighting stencil, weights ``g_0..g_dim`` per class ``|gamma|``."""

    dim: int
    invG: float
    g: np.ndarray
    beta: np.ndarray = field(default=None)

    def gmap(self) -> dict:
        gam, cls = offsets(self.dim)
        return {tuple(int(v) for v in gg): self.g[c] for gg, c in zip(gam, cls)}


@dataclass(frozen=True)
class SchemeId:
    tag: str
    dim: int

    def __post_init__(self):
        tag = self.tag.upper().replace("-", "").replace("_", "")
        if tag not in ALL_TAGS:
            raise SchemeError(f"unknown scheme {self.tag!r}; valid: {', '.join(ALL_TAGS)}")
        if self.dim not in (2, 3):
            raise SchemeError("dimension must be 2 or 3")
        if tag in ONLY_2D and self.dim != 2:
            raise SchemeError(f"{tag} is only defined in 2-D")
        if tag in ONLY_3D and self.dim != 3:
            raise SchemeError(f"{tag} is only defined in 3-D")
        object.__setattr__(self, "tag", tag)

    @property
    def compact(self) -> bool:
        return self.tag in COMPACT_TAGS

    @property
    def in_family(self) -> bool:
        """Whether the scheme has the tensor-product (alpha) form."""
        return self.tag in ("IOFD", "JSS", "OPT4", "FD2", "QSFEM")

    def __str__(self):
        return f"{self.tag}{self.dim}d"


def as_scheme(scheme, dim=None) -> SchemeId:
    if isinstance(scheme, SchemeId):
        if dim is not None and scheme.dim != dim:
            raise SchemeError(f"{scheme} used in {dim}-D")
        return scheme
    return SchemeId(str(scheme), dim if dim is not None else 2)


# ---------------------------------------------------------------------------
# The parameterized family


def family_coeffs(dim: int, alpha, kh2):
    """Vectorized ``alpha -> A`` map; ``alpha[..., j]`` and ``kh2 = (kh)^2``."""
    alpha = np.asarray(alpha)
    kh2 = np.asarray(kh2)
    need = 3 if dim == 2 else 5
    if alpha.shape[-1:] != (need,):
        raise ValueError(f"{dim}-D family needs {need} alpha parameters, got {alpha.shape[-1:]}")
    if dim == 2:
        a1, a2, a3 = np.moveaxis(alpha, -1, 0)
        A = [
            4 * a3 - kh2 * a1,
            1 - 2 * a3 - kh2 * a2 / 4,
            -1 + a3 - kh2 * (1 - a1 - a2) / 4,
        ]
    elif dim == 3:
        a1, a2, a3, a4, a5 = np.moveaxis(alpha, -1, 0)
        A = [
            6 * a4 - kh2 * a1,
            -a4 + a5 - kh2 * a2 / 6,
            -a5 / 2 + (1 - a4 - a5) / 2 - kh2 * a3 / 12,
            -0.75 * (1 - a4 - a5) - kh2 * (1 - a1 - a2 - a3) / 8,
        ]
    else:
        raise ValueError("dimension must be 2 or 3")
    return np.stack(np.broadcast_arrays(*A), axis=-1)


def alpha_to_stencil(dim: int, alpha, kh: float, scheme: str = "") -> Stencil:
    alpha = np.asarray(alpha, dtype=float)
    need = 3 if dim == 2 else 5
    if dim not in (2, 3) or alpha.shape != (need,):
        raise ValueError(f"{dim}-D family needs {need} alpha parameters")
    return Stencil(dim, kh, family_coeffs(dim, alpha, kh * kh), scheme)


def laplacian_and_mass(dim: int, alpha):
    """Split family weights into per-axis Laplacian parts and the mass part.

    Returns ``(lap, mass)``: ``lap[j]`` is the 3^d weight array of
    ``-D2_j (x) N`` and ``mass`` that of ``M``, both indexed like
    :func:`offsets`.  ``sum(lap) - kh^2 * mass`` reproduces
    :func:`family_coeffs`.  Parameters may carry leading batch axes.
    """
    alpha = np.asarray(alpha)
    gam, cls = offsets(dim)
    if dim == 2:
        a1, a2, a3 = np.moveaxis(alpha, -1, 0)
        mass_w = [a1, a2 / 4, (1 - a1 - a2) / 4]
        n_w = [a3, (1 - a3) / 2]
    else:
        a1, a2, a3, a4, a5 = np.moveaxis(alpha, -1, 0)
        mass_w = [a1, a2 / 6, a3 / 12, (1 - a1 - a2 - a3) / 8]
        n_w = [a4, a5 / 4, (1 - a4 - a5) / 4]
    mass = np.stack(np.broadcast_arrays(*[mass_w[c] for c in cls]), axis=-1)
    d2 = {-1: 1.0, 0: -2.0, 1: 1.0}
    lap = []
    for j in range(dim):
        cols = []
        for g in gam:
            other = int(np.abs(np.delete(g, j)).sum())
            cols.append(-d2[int(g[j])] * n_w[other])
        lap.append(np.stack(np.broadcast_arrays(*cols), axis=-1))
    return lap, mass


# ---------------------------------------------------------------------------
# Reference schemes


def _qsfem(kh):
    kh = np.asarray(kh)
    c1 = np.cos(kh * np.cos(np.pi / 16))
    s1 = np.cos(kh * np.sin(np.pi / 16))
    c2 = np.cos(kh * np.cos(3 * np.pi / 16))
    s2 = np.cos(kh * np.sin(3 * np.pi / 16))
    den = c2 * s2 * (c1 + s1) - c1 * s1 * (c2 + s2)
    if np.any(den == 0):
        raise SingularCoefficientError("QS-FEM denominator vanishes at this kh")
    A1 = 2 * (c1 * s1 - c2 * s2) / den
    A2 = (c2 + s2 - c1 - s1) / den
    return np.stack(np.broadcast_arrays(4.0 + 0 * A1, A1, A2), axis=-1)


def _cho6(dim, kh):
    k2 = np.asarray(kh) ** 2
    if dim == 2:
        # edge and corner weights of the printed formula are interchanged;
        # this ordering is the consistent (sixth-order) one
        A = [10 / 3 - 41 * k2 / 45 + k2 * k2 / 20, -2 / 3 - k2 / 90, -1 / 6 - k2 / 90]
    else:
        A = [64 / 15 - 14 * k2 / 15 + k2 * k2 / 20, -7 / 15 + k2 / 90, -1 / 10 - k2 / 90, -1 / 30 + 0 * k2]
    return np.stack(np.broadcast_arrays(*A), axis=-1)


def _sut(kh):
    k2 = np.asarray(kh) ** 2
    A = [
        64 / 15 * (1 - k2 / 4 + 5 / 256 * k2**2 - k2**3 / 1536),
        -7 / 15 * (1 - k2 / 21),
        -1 / 10 * (1 + k2 / 18),
        -1 / 30 + 0 * k2,
    ]
    return np.stack(np.broadcast_arrays(*A), axis=-1)


def fd2_alpha(dim):
    return (1.0, 0.0, 1.0) if dim == 2 else (1.0, 0.0, 0.0, 1.0, 0.0)


def scheme_alpha(scheme: SchemeId, invG):
    """Family parameters of a tensor-product scheme at ``invG`` (vectorized)."""
    invG = np.asarray(invG, dtype=float)
    if scheme.tag == "IOFD":
        return iofd_table(scheme.dim)(invG)
    const = {"JSS": JSS_ALPHA, "OPT4": OPT_ALPHA, "FD2": fd2_alpha(scheme.dim)}.get(scheme.tag)
    if const is None:
        raise SchemeError(f"{scheme} has no tensor-product parameterization")
    return np.broadcast_to(np.asarray(const), invG.shape + (len(const),))


def compact_coeffs(scheme: SchemeId, kh):
    """``A_0..A_d`` of a compact scheme for an array of (possibly complex) kh.

    For complex ``kh`` (absorbing layers) the interpolated parameters are
    taken at the real part while ``(kh)^2`` keeps its imaginary part.
    """
    scheme = as_scheme(scheme)
    kh = np.asarray(kh)
    if not scheme.compact:
        raise SchemeError(f"{scheme} is not a compact scheme")
    if scheme.tag in ("IOFD", "JSS", "OPT4", "FD2"):
        alpha = scheme_alpha(scheme, np.real(kh) / TWO_PI)
        return family_coeffs(scheme.dim, alpha, kh * kh)
    if scheme.tag == "QSFEM":
        return _qsfem(kh)
    if scheme.tag == "CHO6":
        return _cho6(scheme.dim, kh)
    return _sut(kh)


def scheme_stencil(scheme, kh: float, dim: int | None = None):
    """Coefficients of ``scheme`` at ``kh``.

    Compact schemes give a :class:`Stencil`; FD4..FD8 give a
    :class:`CentralStencil`.  FD2 is returned in compact form (it is the
    5-/7-point member of the family); use :func:`central_stencil` for the
    1-D representation.
    """
    scheme = as_scheme(scheme, dim)
    kh = float(kh)
    if not kh > 0:
        raise ValueError("kh must be positive")
    if not scheme.compact:
        return central_stencil(scheme.dim, int(scheme.tag[2:]), kh)
    return Stencil(scheme.dim, kh, compact_coeffs(scheme, kh), str(scheme))


def central_stencil(dim: int, order: int, kh: float) -> CentralStencil:
    if order not in CENTRAL_COEFFS:
        raise SchemeError(f"no central difference of order {order}")
    return CentralStencil(dim, float(kh), CENTRAL_COEFFS[order], f"FD{order}{dim}d")


# ---------------------------------------------------------------------------
# Amplitude correction weights


def q_weights(dim: int, beta):
    """Class weights ``g_0..g_d`` from ``beta`` (vectorized); they sum to 1."""
    beta = np.asarray(beta)
    if dim == 2:
        b1, b2 = np.moveaxis(beta, -1, 0)
        g = [b1, b2 / 4, (1 - b1 - b2) / 4]
    elif dim == 3:
        b1, b2, b3 = np.moveaxis(beta, -1, 0)
        g = [b1, b2 / 6, b3 / 12, (1 - b1 - b2 - b3) / 8]
    else:
        raise ValueError("dimension must be 2 or 3")
    return np.stack(np.broadcast_arrays(*g), axis=-1)


def q_coeffs(dim: int, invG: float, table: HermiteTable | None = None) -> QStencil:
    table = q_table(dim) if table is None else table
    beta = table(float(invG))
    return QStencil(dim, float(invG), q_weights(dim, beta), beta)


def identity_q(dim: int, invG: float = 0.0) -> QStencil:
    g = np.zeros(dim + 1)
    g[0] = 1.0
    return QStencil(dim, invG, g, None)
