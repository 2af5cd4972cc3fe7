"""Assembly of variable-k Helmholtz operators on regular grids.

Layout
------
A :class:`Grid` holds ``n`` unknowns per axis at ``origin + h * i``,
``i = 0..n-1``, with homogeneous Dirichlet values at ``i = -1`` and
``i = n``.  Velocity models live on the ``n + 1`` cells per axis between
consecutive points (including the two boundary cells), so cell ``K`` has
center ``origin + (K - 1/2) h``.

The coupling of point ``x`` to ``x + h gamma`` uses ``f_gamma`` sampled at
the midpoint ``x + h gamma / 2``.  Along axes where ``gamma_j = +-1`` that
coordinate is a cell center; where ``gamma_j = 0`` it is a grid coordinate
and the two adjacent cells are averaged (multilinear interpolation).  The
midpoint is shared by both orientations of every coupling, so the matrix is
complex symmetric by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .coeffs import (
    TWO_PI,
    CoefficientRangeError,
    SchemeError,
    as_scheme,
    compact_coeffs,
    family_coeffs,
    laplacian_and_mass,
    multiplicity,
    offsets,
    q_table,
    q_weights,
    scheme_alpha,
)

MAX_INVG = 0.40
HEADER = struct.Struct("<4sI3I4xd")  # magic, dim, extents (3 slots), pad, h -> 32 bytes
assert HEADER.size == 32


@dataclass(frozen=True)
class Grid:
    dim: int
    n: tuple
    h: float
    origin: tuple = None

    def __post_init__(self):
        n = tuple(int(v) for v in np.broadcast_to(self.n, (self.dim,)))
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if min(n) < 8:
            raise ValueError(f"need at least 8 points per axis, got {n}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        origin = (0.0,) * self.dim if self.origin is None else tuple(float(v) for v in self.origin)
        if len(origin) != self.dim:
            raise ValueError("origin has the wrong length")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self):
        return self.n

    @property
    def cells(self):
        return tuple(v + 1 for v in self.n)

    @property
    def size(self):
        return int(np.prod(self.n))

    def axis(self, j):
        return self.origin[j] + self.h * np.arange(self.n[j])

    def cell_axis(self, j):
        return self.origin[j] + self.h * (np.arange(self.n[j] + 1) - 0.5)

    def coords(self):
        return np.meshgrid(*[self.axis(j) for j in range(self.dim)], indexing="ij")

    def coarsen(self) -> "Grid":
        """Every other point: ``n_f = 2 n_c + 1``, coarse point I at fine point 2I+1."""
        if any(v % 2 == 0 for v in self.n):
            raise ValueError(f"extents {self.n} are not of the form 2m+1")
        return Grid(self.dim, tuple((v - 1) // 2 for v in self.n), 2 * self.h, tuple(o + self.h for o in self.origin))


@dataclass(frozen=True)
class GridField:
    grid: Grid
    data: np.ndarray


@dataclass(frozen=True, eq=False)
class VelocityModel:
    """Wave speed on the cells of ``grid`` and the angular frequency."""

    grid: Grid
    c: np.ndarray
    omega: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != self.grid.cells:
            raise ValueError(f"model needs shape {self.grid.cells} (cells), got {c.shape}")
        if not np.all(c > 0):
            raise ValueError("wave speed must be positive")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def k(self):
        return self.omega / self.c

    @classmethod
    def constant(cls, grid: Grid, c: float, omega: float):
        return cls(grid, np.full(grid.cells, float(c)), omega)

    def invG(self):
        return self.k * self.grid.h / TWO_PI

    def ppw_range(self):
        g = self.invG()
        return float(1 / g.max()), float(1 / g.min())

    def coarsen(self) -> "VelocityModel":
        """Model on the coarsened grid: each coarse cell is the mean of 2^d fine cells.

        The fine grid has ``2 (n_c + 1)`` cells per axis; coarse cell ``J``
        covers fine cells ``2J`` and ``2J + 1``.  Slowness is averaged so
        that ``k`` (not ``c``) is the cell mean.
        """
        return VelocityModel(self.grid.coarsen(), 1.0 / coarsen_cells(1.0 / self.c), self.omega)


def pad_model(model: VelocityModel, npad: int) -> VelocityModel:
    """Extend by ``npad`` points on every side, repeating boundary cells."""
    g = model.grid
    grid = Grid(g.dim, tuple(v + 2 * npad for v in g.n), g.h, tuple(o - npad * g.h for o in g.origin))
    return VelocityModel(grid, np.pad(model.c, npad, mode="edge"), model.omega)


# ---------------------------------------------------------------------------
# absorbing layers


@dataclass(frozen=True)
class AbsorbingLayerSpec:
    """Quadratic damping, ``width`` in (longest) wavelengths.

    ``target_transmission`` is the round-trip amplitude factor through the
    layer: the damping integrates to ``-ln(T) / 2`` across it.
    """

    width: float = 8.0
    target_transmission: float = 0.003
    profile: str = "quadratic"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("layer width must be positive")
        if not 0 < self.target_transmission < 1:
            raise ValueError("target_transmission must lie in (0, 1)")
        if self.profile != "quadratic":
            raise ValueError("only the quadratic profile is implemented")

    def thickness(self, model: VelocityModel) -> int:
        """Layer thickness in grid points."""
        lam = TWO_PI / float(np.min(model.k))
        return int(np.ceil(self.width * lam / model.grid.h))

    def strength(self, model: VelocityModel) -> float:
        """Peak of the quadratic profile for the layer's physical length."""
        L = self.thickness(model) * model.grid.h
        return -3.0 * np.log(self.target_transmission) / (2.0 * L)


def _depth(grid: Grid, j: int, x, npts: int):
    """Depth (in length units) of coordinate ``x`` inside the layer on axis ``j``."""
    inner_lo = grid.origin[j] - grid.h + npts * grid.h
    inner_hi = grid.origin[j] + grid.n[j] * grid.h - npts * grid.h
    return np.maximum(0.0, np.maximum(inner_lo - x, x - inner_hi))


def layer_profile(grid: Grid, j: int, x, npts: int, peak: float):
    """Damping ``sigma_j(x)`` (quadratic in the depth), zero outside the layer."""
    if npts == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    L = npts * grid.h
    d = np.minimum(_depth(grid, j, np.asarray(x, dtype=float), npts), L)
    return peak * (d / L) ** 2


def interior_mask(grid: Grid, npts: int):
    """Grid points outside the layer."""
    masks = []
    for j in range(grid.dim):
        i = np.arange(grid.n[j])
        masks.append((i >= npts - 1) & (i <= grid.n[j] - npts))
    out = masks[0]
    for m in masks[1:]:
        out = np.multiply.outer(out, m)
    return out


def cell_damping(model: VelocityModel, layer: AbsorbingLayerSpec | None):
    """Cell field ``sigma = sum_j sigma_j(x_j)`` (imaginary part added to ``k``)."""
    g = model.grid
    sig = np.zeros(g.cells)
    if layer is None:
        return sig
    npts = layer.thickness(model)
    peak = layer.strength(model)
    for j in range(g.dim):
        s = layer_profile(g, j, g.cell_axis(j), npts, peak)
        shape = [1] * g.dim
        shape[j] = -1
        sig = sig + s.reshape(shape)
    return sig


def coarsen_cells(F):
    """Average pairs of cells along every axis (fine ``2m`` cells -> coarse ``m``)."""
    F = np.asarray(F)
    for ax in range(F.ndim):
        if F.shape[ax] % 2:
            raise ValueError("cell counts must be even to coarsen")
        F = 0.5 * (np.take(F, np.arange(0, F.shape[ax], 2), axis=ax) + np.take(F, np.arange(1, F.shape[ax], 2), axis=ax))
    return F


# ---------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Compact stencil operator stored as one coefficient array per offset.

    ``diagonals[gamma][alpha]`` couples point ``alpha`` to ``alpha + gamma``;
    couplings that leave the grid are zero.
    """

    grid: Grid
    diagonals: dict
    closure: dict = field(default_factory=dict)

    def apply(self, u):
        u = np.asarray(u)
        if u.shape != self.grid.n:
            raise ValueError(f"field shape {u.shape} does not match grid {self.grid.n}")
        up = np.pad(u, 1)
        dtype = np.result_type(u, *[d.dtype for d in self.diagonals.values()])
        out = np.zeros(u.shape, dtype=dtype)
        for gam, coef in self.diagonals.items():
            sl = tuple(slice(1 + g, 1 + g + n) for g, n in zip(gam, self.grid.n))
            out += coef * up[sl]
        return out

    __matmul__ = apply

    def diagonal(self):
        return self.diagonals[(0,) * self.grid.dim]

    def matrix(self) -> sp.csr_matrix:
        g = self.grid
        idx = np.arange(g.size).reshape(g.n)
        rows, cols, vals = [], [], []
        for gam, coef in self.diagonals.items():
            src = tuple(slice(max(0, -s), n - max(0, s)) for s, n in zip(gam, g.n))
            dst = tuple(slice(max(0, s), n - max(0, -s)) for s, n in zip(gam, g.n))
            rows.append(idx[src].ravel())
            cols.append(idx[dst].ravel())
            vals.append(coef[src].ravel())
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(g.size, g.size))
        return A.tocsr()

    def symmetry_defect(self) -> float:
        """``max |p(a, a+g) - p(a+g, a)|`` over all couplings."""
        worst = 0.0
        g = self.grid
        for gam, coef in self.diagonals.items():
            back = self.diagonals[tuple(-v for v in gam)]
            src = tuple(slice(max(0, -s), n - max(0, s)) for s, n in zip(gam, g.n))
            dst = tuple(slice(max(0, s), n - max(0, -s)) for s, n in zip(gam, g.n))
            if coef[src].size:
                worst = max(worst, float(np.max(np.abs(coef[src] - back[dst]))))
        return worst


def _midpoint(F, gam):
    """Sample a cell field at the midpoints ``x + gamma / 2`` of all grid points."""
    out = F
    for ax, s in enumerate(gam):
        m = out.shape[ax] - 1
        lo = np.take(out, np.arange(0, m), axis=ax)
        hi = np.take(out, np.arange(1, m + 1), axis=ax)
        out = hi if s > 0 else lo if s < 0 else 0.5 * (lo + hi)
    return out


def _drop_outside(coef, gam):
    coef = np.array(coef)
    for ax, s in enumerate(gam):
        if s > 0:
            idx = [slice(None)] * coef.ndim
            idx[ax] = slice(coef.shape[ax] - s, None)
            coef[tuple(idx)] = 0
        elif s < 0:
            idx = [slice(None)] * coef.ndim
            idx[ax] = slice(0, -s)
            coef[tuple(idx)] = 0
    return coef


def _check_range(model: VelocityModel, scheme):
    g = model.invG()
    worst = np.unravel_index(np.argmax(g), g.shape)
    if (scheme is None or scheme.tag == "IOFD") and g[worst] > MAX_INVG + 1e-12:
        raise CoefficientRangeError(
            f"only {1 / g[worst]:.3g} points per wavelength at cell {tuple(int(v) for v in worst)};"
            f" the interpolated coefficients need at least {1 / MAX_INVG:g}"
        )


def _cell_coeffs(model: VelocityModel, scheme, sigma):
    scheme = as_scheme(scheme, model.grid.dim)
    if not scheme.compact:
        raise SchemeError(f"{scheme} is not a compact scheme and cannot be assembled here")
    _check_range(model, scheme)
    kh = model.grid.h * (model.k + 1j * sigma) if np.any(sigma) else model.grid.h * model.k
    A = compact_coeffs(scheme, kh)
    if scheme.tag == "QSFEM":
        A = A * (-(kh * kh) / (A @ multiplicity(scheme.dim)))[..., None]
    return A


def sample_fgamma_field(model: VelocityModel, scheme, layer: AbsorbingLayerSpec | None = None, damping=None) -> dict:
    """``f_gamma(hk)`` at cell centers interpolated to coupling midpoints (``h = 1`` units).

    ``damping`` overrides the layer with an explicit cell field ``sigma``.
    """
    sigma = cell_damping(model, layer) if damping is None else np.asarray(damping, dtype=float)
    if sigma.shape != model.grid.cells:
        raise ValueError("damping field must live on the model cells")
    A = _cell_coeffs(model, scheme, sigma)
    gam, cls = offsets(model.grid.dim)
    return {tuple(int(v) for v in g): _midpoint(A[..., c], g) for g, c in zip(gam, cls)}


def assemble_helmholtz(model: VelocityModel, scheme="IOFD", layer: AbsorbingLayerSpec | None = None, damping=None) -> DiscreteOperator:
    """The operator ``P`` (with the ``h^-2`` factor) and optional damping layer.

    In the layer ``k`` becomes ``k + i sigma(x)``, summed over axes, where
    each ``sigma_j`` grows quadratically with the depth into the layer.
    """
    f = sample_fgamma_field(model, scheme, layer, damping)
    h2 = model.grid.h ** 2
    diags = {g: _drop_outside(v / h2, g) for g, v in f.items()}
    closure = {"type": "none"}
    if layer is not None and damping is None:
        closure = {"type": "damping", "points": layer.thickness(model), "peak": layer.strength(model), "spec": layer}
    elif damping is not None:
        closure = {"type": "damping", "points": None, "peak": float(np.max(damping)), "spec": None}
    return DiscreteOperator(model.grid, diags, closure)


def _family_alpha(scheme, kh):
    """Family parameters on cells; QS-FEM is rewritten with ``alpha_1 = 1``."""
    if scheme.tag in ("IOFD", "JSS", "OPT4", "FD2"):
        return scheme_alpha(scheme, kh / TWO_PI)
    if scheme.tag == "QSFEM":
        A = compact_coeffs(scheme, kh)
        k2 = kh * kh
        A = A * (-k2 / (A @ multiplicity(2)))[..., None]
        a3 = (A[..., 0] + k2) / 4
        a2 = 4 * (1 - 2 * a3 - A[..., 1]) / k2
        return np.stack([np.ones_like(a3), a2, a3], axis=-1)
    raise SchemeError(f"{scheme} has no tensor-product form; the PML needs one")


def assemble_pml(model: VelocityModel, scheme="IOFD", pml: AbsorbingLayerSpec | None = None) -> DiscreteOperator:
    """Tensor-product family with a complex coordinate stretch.

    With ``s_j = 1 + i sigma_j(x_j) / omega`` the stretched operator is
    multiplied by ``s_1 ... s_d``, giving the symmetric divergence form
    ``-sum_j D_j (a_j D_j u) (x) N - k^2 s_1...s_d M u`` with
    ``a_j = prod_{i != j} s_i / s_j``.  Each 3-point ``D2`` uses ``a_j`` at
    its two half-points; for ``gamma_j = 0`` that is the mean of the values
    on both sides of the coupling midpoint.
    """
    g = model.grid
    scheme = as_scheme(scheme, g.dim)
    if not scheme.in_family:
        raise SchemeError(f"{scheme} has no tensor-product form; the PML needs one")
    _check_range(model, scheme)
    kh = g.h * model.k
    alpha = _family_alpha(scheme, kh)
    lap, mass = laplacian_and_mass(g.dim, alpha)
    gam, _ = offsets(g.dim)
    if pml is None:
        npts, peak = 0, 0.0
    else:
        npts, peak = pml.thickness(model), pml.strength(model) * float(np.max(model.c))

    def stretch(j, x):
        return 1.0 + 1j * layer_profile(g, j, x, npts, peak) / model.omega

    def field_at(shift):
        """``s_j`` on every axis at grid points displaced by ``shift * h``."""
        # half-integer index first so both orientations of a coupling see the same coordinate
        return [stretch(j, g.origin[j] + (np.arange(g.n[j]) + shift[j]) * g.h) for j in range(g.dim)]

    def outer(vals):
        out = vals[0]
        for v in vals[1:]:
            out = np.multiply.outer(out, v)
        return out

    diags = {}
    h2 = g.h ** 2
    for o, gg in enumerate(gam):
        key = tuple(int(v) for v in gg)
        mid = 0.5 * gg
        s_mid = field_at(mid)
        coef = -(kh * kh * mass[..., o])
        coef = _midpoint(coef, key) * outer(s_mid)
        for j in range(g.dim):
            lj = _midpoint(lap[j][..., o], key)
            if gg[j] != 0:
                s = s_mid
                aj = outer([s[i] if i != j else 1.0 / s[i] for i in range(g.dim)])
            else:
                aj = 0
                for side in (-0.5, 0.5):
                    shift = mid.astype(float).copy()
                    shift[j] += side
                    s = field_at(shift)
                    aj = aj + 0.5 * outer([s[i] if i != j else 1.0 / s[i] for i in range(g.dim)])
            coef = coef + lj * aj
        diags[key] = _drop_outside(coef / h2, key)
    closure = {"type": "pml", "points": npts, "peak": peak, "spec": pml}
    return DiscreteOperator(g, diags, closure)


def assemble_q(model: VelocityModel, dim: int | None = None, table=None) -> DiscreteOperator:
    """Order-zero weighting operator ``Q`` (no ``h`` scaling)."""
    g = model.grid
    if dim is not None and dim != g.dim:
        raise ValueError("dimension mismatch")
    invG = model.invG()
    _check_range(model, None)
    table = q_table(g.dim) if table is None else table
    W = q_weights(g.dim, table(invG))
    gam, cls = offsets(g.dim)
    diags = {}
    for gg, c in zip(gam, cls):
        key = tuple(int(v) for v in gg)
        diags[key] = _drop_outside(_midpoint(W[..., c], key), key)
    return DiscreteOperator(g, diags, {"type": "weighting"})


def identity_operator(grid: Grid) -> DiscreteOperator:
    return DiscreteOperator(grid, {(0,) * grid.dim: np.ones(grid.n)}, {"type": "identity"})


def delta_source(grid: Grid, location, npts_layer: int = 0):
    """Discrete delta: ``h^-d`` at ``location`` (an index tuple), zero elsewhere."""
    loc = tuple(int(v) for v in location)
    if len(loc) != grid.dim or any(not 0 <= i < n for i, n in zip(loc, grid.n)):
        raise IndexError(f"source index {loc} is outside the grid {grid.n}")
    if not interior_mask(grid, npts_layer)[loc]:
        raise ValueError(f"source index {loc} lies inside the absorbing layer")
    f = np.zeros(grid.n, dtype=complex)
    f[loc] = grid.h ** (-grid.dim)
    return f


def solve_with_correction(P: DiscreteOperator, Q: DiscreteOperator | None, f, solver=None):
    """``u = Q v`` where ``P v = Q f``; ``Q = None`` means no correction."""
    if solver is None:
        from .solver import band_lu_solve as solver
    if Q is not None and Q.grid != P.grid:
        raise ValueError("P and Q live on different grids")
    rhs = f if Q is None else Q.apply(f)
    v = solver(P, rhs)
    return v if Q is None else Q.apply(v)


# ---------------------------------------------------------------------------
# models and files


def builtin_model(name: str, grid: Grid, omega: float, c0: float = 1.0, seed: int = 0) -> VelocityModel:
    """``constant`` (speed ``c0``) or ``smoothed-marmousi-like``.

    The second is a synthetic stand-in: a few undulating layers with speeds
    between ``1.5 c0`` and ``4.5 c0`` increasing with depth (the last axis),
    Gaussian smoothed over two wavelengths of the slowest layer.
    """
    if name == "constant":
        return VelocityModel.constant(grid, c0, omega)
    if name != "smoothed-marmousi-like":
        raise KeyError(f"unknown builtin model {name!r}")
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    axes = [grid.cell_axis(j) for j in range(grid.dim)]
    X = np.meshgrid(*axes, indexing="ij")
    lo = [a[0] for a in axes]
    ext = [a[-1] - a[0] for a in axes]
    depth = (X[-1] - lo[-1]) / ext[-1]
    n_layers = 8
    speeds = np.sort(rng.uniform(1.5, 4.5, n_layers)) * c0
    c = np.full(grid.cells, speeds[0])
    for i in range(1, n_layers):
        base = i / n_layers
        wobble = 0.0
        for j in range(grid.dim - 1):
            u = (X[j] - lo[j]) / ext[j]
            amp, freq, ph = rng.uniform(0.01, 0.05), rng.uniform(1, 4), rng.uniform(0, TWO_PI)
            wobble = wobble + amp * np.sin(TWO_PI * freq * u + ph)
        c = np.where(depth > base + wobble, speeds[i], c)
    width = 2 * TWO_PI * speeds[0] / omega / grid.h
    c = gaussian_filter(c, width / 2, mode="nearest")
    return VelocityModel(grid, c, omega)


def _write(path, magic: bytes, dim, extents, h, payload: np.ndarray):
    ext = list(extents) + [0] * (3 - len(extents))
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(magic, dim, *ext, float(h)))
        fh.write(np.ascontiguousarray(payload).astype("<f8").tobytes())


def _read(path, magic: bytes):
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ValueError(f"{path}: too short for a header")
    tag, dim, e0, e1, e2, h = HEADER.unpack_from(raw)
    if tag != magic:
        raise ValueError(f"{path}: bad magic {tag!r}, expected {magic!r}")
    if dim not in (2, 3):
        raise ValueError(f"{path}: bad dimension {dim}")
    ext = (e0, e1, e2)[:dim]
    data = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    return dim, ext, h, data


def write_velocity(path, model: VelocityModel):
    """HVM1: 32-byte header then the cell speeds (row-major float64 LE)."""
    g = model.grid
    _write(path, b"HVM1", g.dim, g.cells, g.h, model.c)


def read_velocity(path, omega: float, origin=None) -> VelocityModel:
    dim, cells, h, data = _read(path, b"HVM1")
    if data.size != int(np.prod(cells)):
        raise ValueError(f"{path}: expected {int(np.prod(cells))} samples, found {data.size}")
    grid = Grid(dim, tuple(v - 1 for v in cells), h, origin)
    return VelocityModel(grid, data.reshape(cells), omega)


def write_field(path, grid: Grid, u):
    """HFD1: the same header, then interleaved re/im float64 LE."""
    u = np.asarray(u, dtype=complex)
    if u.shape != grid.n:
        raise ValueError("field does not match grid")
    _write(path, b"HFD1", grid.dim, grid.n, grid.h, u.view(np.float64))


def read_field(path):
    dim, n, h, data = _read(path, b"HFD1")
    if data.size != 2 * int(np.prod(n)):
        raise ValueError(f"{path}: truncated field data")
    u = data.view(np.complex128).reshape(n)
    return GridField(Grid(dim, n, h), u.copy())
