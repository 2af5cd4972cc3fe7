import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iofd import coeffs as C
from iofd.coeffs import (
    CoefficientRangeError,
    HermiteTable,
    SchemeError,
    as_scheme,
    compact_coeffs,
    family_coeffs,
    iofd_table,
    laplacian_and_mass,
    multiplicity,
    offsets,
    q_table,
    q_weights,
)

invgs = st.floats(0.0, 0.40)


def test_offsets_and_multiplicity():
    for d, n in ((2, 9), (3, 27)):
        gam, cls = offsets(d)
        assert gam.shape == (n, d)
        assert np.all(cls == np.abs(gam).sum(axis=1))
        # binomial(d, c) * 2^c offsets per class
        want = [len([g for g in itertools.product((-1, 0, 1), repeat=d) if sum(map(abs, g)) == c]) for c in range(d + 1)]
        assert list(multiplicity(d)) == want


def test_table_nodes_and_shapes():
    t = iofd_table(2)
    assert t.param_count == 3
    assert np.allclose(t.nodes, np.arange(9) * 0.05)
    assert iofd_table(3).param_count == 5
    assert q_table(2).param_count == 2 and q_table(3).param_count == 3
    assert t.values[1, 0] == 0.705833 and t.derivs[8, 2] == 0.183724


def test_hermite_interpolates_nodes():
    for t in (iofd_table(2), iofd_table(3), q_table(2), q_table(3)):
        assert np.allclose(t(t.nodes), t.values, atol=1e-15)
        assert np.allclose(t.derivative(t.nodes), t.derivs, atol=1e-12)


@given(invgs)
def test_hermite_derivative_matches_difference(x):
    t = iofd_table(2)
    e = 1e-6
    lo, hi = max(x - e, 0.0), min(x + e, 0.40)
    fd = (t(hi) - t(lo)) / (hi - lo)
    assert np.allclose(t.derivative(x), fd, atol=1e-5)


def test_hermite_is_c1_across_nodes():
    t = iofd_table(3)
    e = 1e-9
    for x in t.nodes[1:-1]:
        assert np.allclose(t(x - e), t(x + e), atol=1e-8)
        assert np.allclose(t.derivative(x - e), t.derivative(x + e), atol=1e-7)


def test_hermite_reproduces_cubics():
    # Hermite interpolation is exact for cubics: an independent check of the basis
    nodes = np.array([0.0, 0.1, 0.25, 0.4])
    p = np.poly1d([3.0, -2.0, 0.5, 1.0])
    t = HermiteTable(nodes, p(nodes)[:, None], p.deriv()(nodes)[:, None])
    x = np.linspace(0, 0.4, 37)
    assert np.allclose(t(x)[:, 0], p(x), atol=1e-13)


def test_vector_roundtrip():
    t = iofd_table(2)
    back = HermiteTable.from_vector(t.nodes, t.to_vector())
    assert np.array_equal(back.values, t.values) and np.array_equal(back.derivs, t.derivs)


def test_out_of_range():
    with pytest.raises(CoefficientRangeError, match="points per wavelength"):
        iofd_table(2)(0.41)
    with pytest.raises(CoefficientRangeError):
        iofd_table(2)(-0.1)
    iofd_table(2)(0.40 + 1e-13)


@pytest.mark.parametrize("tag,dim", [("IOFD", 2), ("IOFD", 3), ("JSS", 2), ("OPT4", 3), ("FD2", 2), ("FD2", 3)])
@given(invG=st.floats(0.01, 0.40))
def test_consistency_symbol_at_origin(tag, dim, invG):
    # family members: P1(0) = sum_gamma a_gamma = -(kh)^2
    kh = 2 * np.pi * invG
    A = compact_coeffs(as_scheme(tag, dim), kh)
    assert np.isclose(A @ multiplicity(dim), -kh * kh, rtol=1e-12, atol=1e-12)


def test_family_laplacian_mass_split():
    rng = np.random.default_rng(1)
    for dim, n in ((2, 3), (3, 5)):
        alpha = rng.uniform(0, 1, n)
        kh2 = 0.7
        lap, mass = laplacian_and_mass(dim, alpha)
        gam, cls = offsets(dim)
        combined = sum(lap) - kh2 * mass
        A = family_coeffs(dim, alpha, kh2)
        assert np.allclose(combined, A[cls])


def test_family_matches_tensor_product():
    # build -D2 (x) N - k^2 M explicitly with outer products in 2-D
    a1, a2, a3 = 0.7, 0.25, 0.83
    kh2 = 0.5
    d2 = np.array([1.0, -2.0, 1.0])
    n1 = np.array([(1 - a3) / 2, a3, (1 - a3) / 2])
    lap = -(np.outer(d2, n1) + np.outer(n1, d2))
    m = np.array([[(1 - a1 - a2) / 4, a2 / 4, (1 - a1 - a2) / 4], [a2 / 4, a1, a2 / 4], [(1 - a1 - a2) / 4, a2 / 4, (1 - a1 - a2) / 4]])
    full = lap - kh2 * m
    A = family_coeffs(2, (a1, a2, a3), kh2)
    assert np.isclose(full[1, 1], A[0]) and np.isclose(full[0, 1], A[1]) and np.isclose(full[0, 0], A[2])


def test_fd2_is_five_point():
    A = compact_coeffs(as_scheme("FD2", 2), 0.3)
    assert np.allclose(A, [4 - 0.09, -1, 0])


@pytest.mark.parametrize("tag,dim", [("CHO6", 2), ("CHO6", 3), ("SUT", 3)])
def test_sixth_order_schemes_vanish_on_exact_wave_vector(tag, dim):
    # P1(kh theta) = O(kh^8): halving kh divides it by about 2^8
    gam, cls = offsets(dim)
    for d in (np.eye(dim)[0], np.ones(dim) / np.sqrt(dim)):
        vals = []
        for kh in (0.2, 0.1):
            A = compact_coeffs(as_scheme(tag, dim), kh)
            vals.append(abs(np.sum(A[cls] * np.cos(gam @ (kh * d)))))
        assert 200 < vals[0] / vals[1] < 320


def test_q_partition_of_unity():
    for dim in (2, 3):
        beta = q_table(dim)(np.linspace(0, 0.4, 11))
        g = q_weights(dim, beta)
        assert np.allclose(g @ multiplicity(dim), 1.0)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_q_partition_any_beta(b1, b2):
    assert np.isclose(q_weights(2, (b1, b2)) @ multiplicity(2), 1.0)


def test_scheme_validation():
    with pytest.raises(SchemeError, match="valid"):
        as_scheme("NOPE")
    with pytest.raises(SchemeError):
        as_scheme("JSS", 3)
    with pytest.raises(SchemeError):
        as_scheme("SUT", 2)
    assert as_scheme("iofd", 3).tag == "IOFD"


def test_complex_kh_keeps_imaginary_part():
    kh = 0.6 + 0.05j
    A = compact_coeffs(as_scheme("IOFD", 2), kh)
    assert np.iscomplexobj(A)
    assert np.isclose(A @ multiplicity(2), -kh * kh)


def test_qsfem_constants():
    A = C._qsfem(np.array([0.3, 1.0, 2.0]))
    assert np.all(np.isfinite(A)) and np.all(A[:, 0] == 4.0)
