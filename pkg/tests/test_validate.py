import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iofd.assembly import Grid, GridField
from iofd.coeffs import identity_q, q_coeffs, scheme_stencil
from iofd.symbol import ContinuousSymbol
from iofd.validate import (
    AnnulusProbe,
    ProbeError,
    amplitude_error_map,
    annulus_amplitude_error,
    annulus_phase_error,
    discrete_asymptotic_amplitude,
    exact_green_2d,
    exact_green_3d,
    point_source_experiment,
    point_source_reference,
)


def j0_series(x, terms=40):
    return sum((-1) ** m * (x / 2) ** (2 * m) / math.factorial(m) ** 2 for m in range(terms))


def test_green_2d_against_bessel_oracles():
    k = 1.0
    # i/4 H0 = -Y0/4 + i J0/4
    assert np.isclose(exact_green_2d(k, 1.0).imag, j0_series(1.0) / 4, rtol=1e-14)
    for r in (0.01, 0.5, 3.0, 25.0, 400.0):
        g = exact_green_2d(k, r)
        assert np.isclose(g.imag, float(mpmath.besselj(0, r)) / 4, rtol=1e-12, atol=1e-16)
        assert np.isclose(g.real, -float(mpmath.bessely(0, r)) / 4, rtol=1e-12, atol=1e-16)


@given(st.floats(0.5, 200.0), st.floats(0.2, 3.0))
def test_green_2d_solves_bessel_ode(r, k):
    e = 2e-3 / k
    u = lambda s: exact_green_2d(k, s)
    d2 = (u(r + e) - 2 * u(r) + u(r - e)) / e**2
    d1 = (u(r + e) - u(r - e)) / (2 * e)
    res = d2 + d1 / r + k * k * u(r)
    assert abs(res) <= 1e-4 * (k * k * abs(u(r)) + abs(d2))


def test_green_singular_and_3d():
    with pytest.raises(ZeroDivisionError):
        exact_green_2d(1.0, 0.0)
    with pytest.raises(ZeroDivisionError):
        exact_green_3d(1.0, np.array([1.0, 0.0]))
    assert np.isclose(exact_green_3d(2.0, 1.5), np.exp(3j) / (6 * np.pi))


def test_reference_nan_at_source():
    ref = point_source_reference(1.0, (2.0, 3.0))
    X, Y = np.meshgrid(np.arange(5.0), np.arange(6.0), indexing="ij")
    v = ref(X, Y)
    assert np.isnan(v[2, 3]) and np.isfinite(v[0, 0])


def test_asymptotic_continuous_2d_matches_hankel():
    k = 1.1
    pred = discrete_asymptotic_amplitude(ContinuousSymbol(2, k), 0.4, 300.0)
    exact = exact_green_2d(k, 300.0)
    # leading term; the next correction is O(1/(k r))
    assert abs(pred / exact - 1) < 1e-3


def test_asymptotic_physical_scaling_and_q():
    k, h = 1.0, 0.25
    st_h = scheme_stencil("IOFD", k * h)
    a = discrete_asymptotic_amplitude(st_h, 0.3, 80.0, h=h)
    cont = discrete_asymptotic_amplitude(ContinuousSymbol(2, k), 0.3, 80.0)
    assert abs(abs(a) / abs(cont) - 1) < 0.05
    same = discrete_asymptotic_amplitude(st_h, 0.3, 80.0, h=h, q=identity_q(2))
    assert np.isclose(a, same)
    corr = discrete_asymptotic_amplitude(st_h, 0.3, 80.0, h=h, q=q_coeffs(2, k * h / (2 * np.pi)))
    assert abs(abs(corr) / abs(cont) - 1) < abs(abs(a) / abs(cont) - 1)


def synthetic(shift_fn, n=160, k=0.9, src=(20.0, 20.0)):
    g = Grid(2, (n, n), 1.0)
    ref = point_source_reference(k, src)
    X, Y = g.coords()
    R = np.hypot(X - src[0], Y - src[1])
    with np.errstate(invalid="ignore"):
        u = np.nan_to_num(ref(X, Y)) * np.exp(1j * shift_fn(R))
    return GridField(g, u), ref


def test_annulus_phase_constant_shift():
    field, ref = synthetic(lambda R: 0.01 + 0 * R)
    probe = AnnulusProbe((20.0, 20.0), 80.0, 10.0)
    mx, phase = annulus_phase_error(field, probe, ref)
    assert phase.shape == (16, 64)
    assert np.isclose(mx, 0.01, atol=1e-8)


def test_annulus_phase_linear_drift():
    eps = 2e-4
    field, ref = synthetic(lambda R: eps * R)
    probe = AnnulusProbe((20.0, 20.0), 60.0, 20.0)
    mx, _ = annulus_phase_error(field, probe, ref)
    assert np.isclose(mx, eps * 80.0, rtol=1e-4)


def test_probe_errors():
    field, ref = synthetic(lambda R: 0 * R)
    with pytest.raises(ProbeError, match="leaves"):
        annulus_phase_error(field, AnnulusProbe((20.0, 20.0), 150.0, 10.0), ref)
    interior = np.zeros(field.grid.n, dtype=bool)
    interior[10:100, 10:100] = True
    with pytest.raises(ProbeError, match="layer"):
        annulus_phase_error(field, AnnulusProbe((20.0, 20.0), 100.0, 10.0), ref, interior)


def test_amplitude_error_map():
    field, ref = synthetic(lambda R: 0 * R)
    err = amplitude_error_map(field, ref, 6.0)
    assert np.nanmax(err[40:150, 40:150]) < 1e-12
    scaled = GridField(field.grid, 1.05 * field.data)
    err = amplitude_error_map(scaled, ref, 6.0)
    assert np.allclose(err[40:150, 40:150], 0.05)
    assert np.isnan(err[0, 50])
    with pytest.raises(ProbeError):
        amplitude_error_map(field, ref, 500.0)
    vals = annulus_amplitude_error(scaled, AnnulusProbe((20.0, 20.0), 60.0, 10.0), ref, 6.0)
    assert np.allclose(vals, 0.05)


def test_small_point_source_experiment():
    exp = point_source_experiment(6, 5, "IOFD")
    mx, phase = exp.phase_error()
    assert mx < 1e-3
    assert exp.interior[tuple(int(v) for v in exp.source)]
    cho, _ = point_source_experiment(6, 5, "CHO6").phase_error()
    assert cho > mx
