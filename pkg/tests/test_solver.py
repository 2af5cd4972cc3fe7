import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from iofd.assembly import AbsorbingLayerSpec, Grid, VelocityModel, assemble_helmholtz, delta_source
from iofd.solver import (
    CapabilityError,
    DivergenceError,
    MemoryBudgetError,
    TwoGrid,
    TwoGridConfig,
    _stationary,
    band_lu_solve,
    bicgstab_accelerated,
    estimated_lu_bytes,
    factorize,
    jacobi_smooth,
    prolong_bilinear,
    restrict_full_weighting,
    twogrid_solve,
)


def model(n=33, ppw=6.0):
    g = Grid(2, (n, n), 1.0)
    return VelocityModel.constant(g, 1.0, 2 * np.pi / ppw)


LAYER = AbsorbingLayerSpec(1.0, 0.01)


def test_direct_solve_matches_dense():
    m = model(20)
    P = assemble_helmholtz(m, "IOFD", LAYER)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(m.grid.n) + 1j * rng.standard_normal(m.grid.n)
    u = band_lu_solve(P, f)
    ref = sla.solve(P.matrix().toarray(), f.ravel())
    assert np.allclose(u.ravel(), ref, rtol=1e-10, atol=1e-12)


def test_factorization_reuse_and_budget():
    m = model(20)
    P = assemble_helmholtz(m, "IOFD", LAYER)
    lu = factorize(P)
    assert lu.bandwidth == m.grid.n[1] + 1
    f = delta_source(m.grid, (10, 10))
    assert np.allclose(P.apply(lu.solve(f)), f, atol=1e-10)
    with pytest.raises(MemoryBudgetError, match="two-grid"):
        factorize(P, budget=1e3)
    assert estimated_lu_bytes(1024) == pytest.approx(16 * 10.5 * 1024 * 10)


def test_direct_rejects_3d():
    g = Grid(3, (9, 9, 9), 1.0)
    P = assemble_helmholtz(VelocityModel.constant(g, 1.0, 1.0), "IOFD")
    with pytest.raises(CapabilityError):
        factorize(P)


def test_jacobi_damps_high_frequency_mode():
    m = model(64)
    P = assemble_helmholtz(m, "IOFD")
    i = np.arange(1, 65)
    mode = np.outer(np.sin(np.pi * 60 * i / 65), np.sin(np.pi * 58 * i / 65)).astype(complex)
    out = jacobi_smooth(P, mode, np.zeros_like(mode), 0.7, 4)
    assert np.linalg.norm(out) <= 0.5 * np.linalg.norm(mode)


@given(st.integers(0, 1000))
def test_restriction_prolongation_adjoint(seed):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((17, 13))
    v = rng.standard_normal((8, 6))
    lhs = np.sum(restrict_full_weighting(r) * v)
    rhs = np.sum(r * prolong_bilinear(v)) / 4
    assert np.isclose(lhs, rhs)


def test_prolongation_exact_for_linear_functions():
    I, J = np.meshgrid(np.arange(8), np.arange(6), indexing="ij")
    coarse = 2.0 * (2 * I + 1) - 3.0 * (2 * J + 1)
    fine = prolong_bilinear(coarse)
    i, j = np.meshgrid(np.arange(17), np.arange(13), indexing="ij")
    want = 2.0 * i - 3.0 * j
    assert np.allclose(fine[1:-1, 1:-1], want[1:-1, 1:-1])
    with pytest.raises(ValueError):
        restrict_full_weighting(np.zeros((16, 9)))


def test_restriction_of_constant():
    out = restrict_full_weighting(np.ones((9, 9, 9)))
    assert out.shape == (4, 4, 4) and np.allclose(out, 1)


def test_twogrid_cycle_is_linear():
    m = model(33)
    tg = TwoGrid(m, "IOFD", TwoGridConfig(), LAYER)
    rng = np.random.default_rng(2)
    a = rng.standard_normal(m.grid.n) + 0j
    b = rng.standard_normal(m.grid.n) + 0j
    z = np.zeros_like(a)
    assert np.allclose(tg.cycle(z, a + 2 * b), tg.cycle(z, a) + 2 * tg.cycle(z, b), atol=1e-12)


def test_twogrid_converges_to_direct_solution():
    m = model(65)
    f = delta_source(m.grid, (32, 32), LAYER.thickness(m))
    res = twogrid_solve(m, "IOFD", TwoGridConfig(tol=1e-8), f, LAYER)
    assert res.converged and res.history[-1] <= 1e-8
    assert res.iterations == len(res.history) - 1
    P = assemble_helmholtz(m, "IOFD", LAYER)
    direct = band_lu_solve(P, f)
    assert np.linalg.norm(res.u - direct) <= 1e-6 * np.linalg.norm(direct)
    u, its = res
    assert its == res.iterations


def test_twogrid_zero_rhs_and_capability():
    m = model(33)
    res = twogrid_solve(m, "IOFD", None, np.zeros(m.grid.n), LAYER)
    assert res.iterations == 0 and np.all(res.u == 0)
    with pytest.raises(CapabilityError, match="coarse level"):
        TwoGrid(model(33, ppw=4.2), "IOFD", TwoGridConfig(), LAYER)
    g3 = Grid(3, (9, 9, 9), 1.0)
    with pytest.raises(CapabilityError):
        twogrid_solve(VelocityModel.constant(g3, 1.0, 0.5), "IOFD", None, np.ones(g3.n), None)


def test_config_validation():
    with pytest.raises(ValueError):
        TwoGridConfig(omega=1.5)
    with pytest.raises(ValueError):
        TwoGridConfig(nu=0)


def test_divergence_detected():
    class Amplifier:
        def __init__(self, P):
            self.P = P

        def cycle(self, u, rhs):
            return 3.0 * u + rhs

    m = model(17)
    P = assemble_helmholtz(m, "IOFD", LAYER)
    with pytest.raises(DivergenceError) as err:
        _stationary(Amplifier(P), delta_source(m.grid, (8, 8)), TwoGridConfig())
    assert len(err.value.history) >= 6


def test_max_iters_reported():
    m = model(65)
    f = delta_source(m.grid, (32, 32), LAYER.thickness(m))
    res = twogrid_solve(m, "IOFD", TwoGridConfig(max_iters=2, tol=1e-12), f, LAYER)
    assert not res.converged and res.iterations == 2


def test_bicgstab_identity_matches_dense():
    m = model(16)
    rng = np.random.default_rng(5)
    f = rng.standard_normal(m.grid.n) + 0j
    res = bicgstab_accelerated(m, "IOFD", TwoGridConfig(tol=1e-10, max_iters=2000), f, LAYER, preconditioner="identity")
    ref = sla.solve(assemble_helmholtz(m, "IOFD", LAYER).matrix().toarray(), f.ravel())
    assert res.converged
    assert np.linalg.norm(res.u.ravel() - ref) <= 1e-8 * np.linalg.norm(ref)


def test_bicgstab_twogrid_beats_stationary():
    m = model(129)
    f = delta_source(m.grid, (64, 64), LAYER.thickness(m))
    cfg = TwoGridConfig()
    a = bicgstab_accelerated(m, "IOFD", cfg, f, LAYER)
    b = twogrid_solve(m, "IOFD", cfg, f, LAYER)
    P = assemble_helmholtz(m, "IOFD", LAYER)
    assert a.converged and np.linalg.norm(P.apply(a.u) - f) <= 1e-6 * np.linalg.norm(f)
    assert a.iterations <= b.iterations
    with pytest.raises(ValueError):
        bicgstab_accelerated(m, "IOFD", cfg, f, LAYER, preconditioner="ilu")
