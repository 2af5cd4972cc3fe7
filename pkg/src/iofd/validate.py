"""Reference solutions and error measurements for point-source experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, special

from .assembly import Grid, GridField
from .coeffs import QStencil
from .symbol import direction, q_symbol_eval, zero_point_with_normal


class ProbeError(ValueError):
    """Probe geometry incompatible with the field."""


def exact_green_2d(k: float, r):
    """Outgoing solution of ``-Delta u - k^2 u = delta``: ``(i/4) H0^(1)(k r)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ZeroDivisionError("the Green's function is singular at r = 0")
    return 0.25j * special.hankel1(0, k * r)


def exact_green_3d(k: float, r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ZeroDivisionError("the Green's function is singular at r = 0")
    return np.exp(1j * k * r) / (4 * np.pi * r)


def point_source_reference(k: float, center, dim: int = 2):
    """Callable ``(X, Y[, Z]) -> exact Green's function`` centred at ``center``."""
    center = np.asarray(center, dtype=float)
    green = exact_green_2d if dim == 2 else exact_green_3d

    def ref(*X):
        r = np.sqrt(sum((x - c) ** 2 for x, c in zip(X, center)))
        # NaN at the source point itself so maps over a whole grid stay usable
        rr = np.where(r > 0, r, 1.0)
        return np.where(r > 0, green(k, rr), np.nan)

    return ref


def discrete_asymptotic_amplitude(stencil, theta, distance: float, h: float = 1.0, q: QStencil | None = None):
    """Leading-order discrete Green's function at ``x = distance * theta``.

    ``stencil`` is a symbol in ``h = 1`` units at ``kh``; ``theta`` is the
    observation direction.  The stationary point ``xi+`` is where the zero
    set's outward normal equals ``theta``.  In physical units the gradient
    scales by ``1/h`` and the curvature product by ``h^(d-1)``.  With ``q``
    the result includes the factor ``Q1(xi+)^2`` of the corrected solve.
    """
    d = stencil.dim
    xhat = direction(d, theta)
    zp = zero_point_with_normal(stencil, xhat)
    xi = zp.xi / h
    grad = zp.grad_norm / h
    K = zp.curvature * h ** (d - 1)
    x = distance * xhat
    amp = (
        (2 * np.pi) ** (-(d - 1) / 2)
        * np.exp(-1j * (d - 1) * np.pi / 4)
        * distance ** (-(d - 1) / 2)
        * 1j
        / (np.sqrt(K) * grad)
    )
    if q is not None:
        amp = amp * q_symbol_eval(q, zp.xi) ** 2
    return amp * np.exp(1j * x @ xi)


@dataclass(frozen=True)
class AnnulusProbe:
    """Polar sample points ``center + r (cos t, sin t)``.

    ``r`` spans ``[radius, radius + radial_span]`` and ``t`` the angular span.
    """

    center: tuple
    radius: float
    radial_span: float
    angular_span: tuple = (0.0, np.pi / 4)
    samples: tuple = (16, 64)

    def points(self):
        nr, nt = self.samples
        r = np.linspace(self.radius, self.radius + self.radial_span, nr)
        t = np.linspace(self.angular_span[0], self.angular_span[1], nt)
        R, T = np.meshgrid(r, t, indexing="ij")
        return R, T, self.center[0] + R * np.cos(T), self.center[1] + R * np.sin(T)


def _grid_index(grid: Grid, X, Y):
    return (X - grid.origin[0]) / grid.h, (Y - grid.origin[1]) / grid.h


def _window(grid: Grid, X, Y, interior, pad):
    """Index box covering the sample points plus ``pad``; checks the interior."""
    i, j = _grid_index(grid, X, Y)
    lo = np.floor([i.min(), j.min()]).astype(int) - pad
    hi = np.ceil([i.max(), j.max()]).astype(int) + pad
    if np.any(lo < 0) or hi[0] >= grid.n[0] or hi[1] >= grid.n[1]:
        raise ProbeError("probe (with interpolation stencil) leaves the grid")
    if interior is not None and not np.all(interior[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1]):
        raise ProbeError("probe overlaps the absorbing layer")
    return lo, hi


def _sample(grid, values_fn, field, X, Y, interior, pad=3):
    """Cubic-spline samples of ``field / values_fn`` (the demodulated ratio) at (X, Y)."""
    lo, hi = _window(grid, X, Y, interior, pad)
    ax = [grid.origin[j] + grid.h * np.arange(lo[j], hi[j] + 1) for j in range(2)]
    GX, GY = np.meshgrid(*ax, indexing="ij")
    ratio = field[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1] / values_fn(GX, GY)
    i, j = _grid_index(grid, X, Y)
    coords = np.stack([i - lo[0], j - lo[1]])
    re = ndimage.map_coordinates(ratio.real, coords, order=3, mode="nearest")
    im = ndimage.map_coordinates(ratio.imag, coords, order=3, mode="nearest")
    return re + 1j * im


def annulus_phase_error(field: GridField, probe: AnnulusProbe, exact_reference, interior=None):
    """Max phase difference (radians) between ``field`` and the reference on the probe.

    The ratio ``u / u_ref`` is formed on grid points, interpolated with
    cubic splines and its complex argument taken.  Dividing out the
    reference first leaves a slowly varying function, so interpolation
    error stays far below the phase errors being measured.
    Returns ``(max_abs, map)`` with ``map`` shaped like the probe samples.
    """
    grid = field.grid
    if grid.dim != 2:
        raise ProbeError("annulus probes are two-dimensional")
    _, _, X, Y = probe.points()
    ratio = _sample(grid, exact_reference, field.data, X, Y, interior)
    phase = np.angle(ratio)
    return float(np.max(np.abs(phase))), phase


def local_average(a, window_pts: int):
    return ndimage.uniform_filter(np.asarray(a, dtype=float), size=window_pts, mode="nearest")


def amplitude_error_map(field: GridField, exact_reference, window: float):
    """Pointwise relative error of locally averaged ``|u|`` over a square ``window``.

    Returns the map on the full grid; points whose window touches the grid
    edge are not meaningful and are set to NaN.  Points at the source, where
    the reference is NaN (the source point), are left out of the averages.
    """
    grid = field.grid
    w = int(round(window / grid.h))
    if w < 1 or any(2 * w >= n for n in grid.n):
        raise ProbeError(f"window of {w} points does not fit the grid {grid.n}")
    X = grid.coords()
    ref = np.abs(exact_reference(*X))
    ok = np.isfinite(ref)
    ref = np.where(ok, ref, 0.0)
    a = local_average(np.abs(field.data) * ok, w)
    b = local_average(ref, w)
    err = np.abs(a - b) / b
    half = w // 2 + 1
    edge = np.ones(grid.n, dtype=bool)
    for j in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[j] = slice(half, grid.n[j] - half)
        m = np.zeros(grid.n, dtype=bool)
        m[tuple(sl)] = True
        edge &= m
    return np.where(edge, err, np.nan)


def annulus_amplitude_error(field: GridField, probe: AnnulusProbe, exact_reference, smoothing_window: float, interior=None):
    """Relative local-average amplitude error sampled on the probe points."""
    _, _, X, Y = probe.points()
    _window(field.grid, X, Y, interior, int(np.ceil(smoothing_window / field.grid.h)))
    err = amplitude_error_map(field, exact_reference, smoothing_window)
    i, j = _grid_index(field.grid, X, Y)
    return ndimage.map_coordinates(err, np.stack([i, j]), order=1, mode="nearest")


@dataclass
class Experiment:
    grid: Grid
    field: np.ndarray
    k: float
    source: tuple
    layer_points: int
    probe: AnnulusProbe

    @property
    def interior(self):
        from .assembly import interior_mask

        return interior_mask(self.grid, self.layer_points)

    def reference(self):
        return point_source_reference(self.k, self.source)

    def phase_error(self):
        return annulus_phase_error(GridField(self.grid, self.field), self.probe, self.reference(), self.interior)


def point_source_experiment(
    ppw: float,
    distance: float,
    scheme="IOFD",
    correction: bool = False,
    layer=None,
    clearance: float = 25.0,
    margin: float = 2.0,
    h: float = 1.0,
    budget=None,
) -> Experiment:
    """Constant-medium point source with a 45 degree annulus probe at ``distance`` wavelengths.

    The source sits ``margin`` wavelengths from the left layer and
    ``clearance`` wavelengths from the bottom one; the probe covers angles
    [0, pi/4] so its lower edge runs parallel to the bottom layer, where
    grazing reflections are the main contamination.
    """
    from .assembly import AbsorbingLayerSpec, VelocityModel, assemble_helmholtz, assemble_q, delta_source, solve_with_correction
    from .solver import DEFAULT_BUDGET, factorize

    layer = AbsorbingLayerSpec(12.0, 1e-5) if layer is None else layer
    k = 2 * np.pi / (ppw * h)
    lam = ppw * h
    probe_grid = Grid(2, (8, 8), h)
    nl = layer.thickness(VelocityModel.constant(probe_grid, 1.0, k))
    sx = nl + int(np.ceil(margin * ppw))
    sy = nl + int(np.ceil(clearance * ppw))
    far = (distance + 1) * ppw
    nx = sx + int(np.ceil(far + margin * ppw)) + nl
    ny = sy + int(np.ceil(far * np.sin(np.pi / 4) + margin * ppw)) + nl
    grid = Grid(2, (nx, ny), h)
    model = VelocityModel.constant(grid, 1.0, k)
    P = assemble_helmholtz(model, scheme, layer)
    f = delta_source(grid, (sx, sy), nl)
    lu = factorize(P, DEFAULT_BUDGET if budget is None else budget)
    Q = assemble_q(model) if correction else None
    u = solve_with_correction(P, Q, f, solver=lambda _, r: lu.solve(r))
    src = (sx * h, sy * h)
    probe = AnnulusProbe(src, distance * lam, lam, samples=(8, 64))
    return Experiment(grid, u, k, src, nl, probe)
