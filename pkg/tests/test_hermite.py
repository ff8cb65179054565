import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meanfield_lab.hermite import (GridSpec, HermiteBasis, Mode2D, axis_functions, axis_matrix,
                                   contact_tensor, dim_leq, enumerate_modes, gaussian_pair_tensor,
                                   grid_to_spectral, hermite_functions, mode_eigenvalue, spectral_to_grid)


def test_enumerate_examples():
    assert enumerate_modes(1.0, 2.0) == [Mode2D(0, 0)]
    six = enumerate_modes(1.0, 6.0)
    assert len(six) == 6
    assert set(six) == {Mode2D(0, 0), Mode2D(0, 1), Mode2D(1, 0), Mode2D(0, 2), Mode2D(1, 1), Mode2D(2, 0)}
    assert six[:3] == [Mode2D(0, 0), Mode2D(0, 1), Mode2D(1, 0)]
    assert len(enumerate_modes(2.0, 8.0)) == 3


def test_enumerate_rejects_low_cutoff():
    with pytest.raises(ValueError, match="invalid cutoff"):
        enumerate_modes(1.0, 1.5)


def test_negative_quantum_numbers_rejected():
    with pytest.raises(ValueError):
        Mode2D(-1, 0)


@pytest.mark.parametrize("mode,omega,expected", [((0, 0), 1, 2), ((1, 2), 1, 8), ((0, 0), 3, 6)])
def test_mode_eigenvalue(mode, omega, expected):
    assert mode_eigenvalue(Mode2D(*mode), omega) == expected


def test_negative_omega_uses_absolute_value():
    assert mode_eigenvalue(Mode2D(1, 0), -2.0) == 8.0
    assert HermiteBasis(-1.0, 6.0).omega == 1.0


@pytest.mark.parametrize("M,expected", [(2, 3), (math.sqrt(2), 1), (1, 0)])
def test_dim_leq(M, expected):
    assert dim_leq(1.0, M) == expected
    assert dim_leq(1.0, M) <= M ** 4


@given(st.floats(min_value=math.sqrt(2), max_value=12.0))
def test_dim_leq_bound_and_count(M):
    # D_M <= M^4 for omega >= 1/2, and agrees with the enumerated shell
    for omega in (0.5, 1.0, 2.0):
        d = dim_leq(omega, M)
        assert d <= M ** 4
        if M * M >= 2 * omega:
            assert d == len(enumerate_modes(omega, M * M))


@given(st.floats(0.2, 10.0), st.floats(0.0, 3.0))
def test_dim_leq_monotone(M, dM):
    assert dim_leq(1.0, M) <= dim_leq(1.0, M + dM)


def test_small_omega_count_recorded_not_bounded():
    # for omega < 1/2 the count may exceed M^4; we only record it
    assert dim_leq(0.1, 1.5) > 1.5 ** 4


def test_eval_modes_examples():
    b = HermiteBasis(1.0, 4.0)
    vals = b.eval_modes([[0.0, 0.0]])
    assert vals[0, 0] == pytest.approx(np.pi ** -0.5, abs=1e-15)
    assert abs(vals[b.index[Mode2D(1, 0)], 0]) < 1e-15


def test_recurrence_stable_to_degree_200():
    x = np.linspace(-25, 25, 4001)
    h = hermite_functions(200, x)
    assert np.all(np.isfinite(h))
    norms = (h * h).sum(axis=1) * (x[1] - x[0])
    assert np.max(np.abs(norms - 1)) < 1e-10


def test_recurrence_matches_closed_form_low_degree():
    x = np.linspace(-3, 3, 13)
    h = hermite_functions(2, x)
    g = np.pi ** -0.25 * np.exp(-x * x / 2)
    np.testing.assert_allclose(h[1], np.sqrt(2) * x * g, atol=1e-15)
    np.testing.assert_allclose(h[2], (2 * x * x - 1) / np.sqrt(2) * g, atol=1e-15)


@pytest.mark.parametrize("omega,cutoff", [(1.0, 30.0), (0.7, 12.0), (2.5, 40.0)])
def test_gram_identity(omega, cutoff):
    b = HermiteBasis(omega, cutoff)
    assert np.abs(b.gram() - np.eye(b.size)).max() < 1e-12


def test_quadrature_scaled_nodes_integrate_products():
    b = HermiteBasis(2.0, 16.0)
    x, w = b.quadrature
    f = axis_functions(b.max_degree, x, b.omega)
    weights = w * np.exp(b.omega * x * x) / np.sqrt(b.omega)
    G = (f * weights) @ f.T
    assert np.abs(G - np.eye(b.max_degree + 1)).max() < 1e-12


def test_spectrum_exact():
    b = HermiteBasis(1.3, 30.0)
    np.testing.assert_array_equal(b.eigenvalues, [mode_eigenvalue(m, 1.3) for m in b.modes])


def test_round_trip(rng):
    b = HermiteBasis(1.0, 24.0)
    g = GridSpec.default(1.0)
    c = rng.standard_normal(b.size) + 1j * rng.standard_normal(b.size)
    back = grid_to_spectral(spectral_to_grid(c, b, g), b, g)
    assert np.abs(back - c).max() / np.abs(c).max() < 1e-10
    e0 = np.zeros(b.size)
    e0[0] = 1
    f = spectral_to_grid(e0, b, g)
    np.testing.assert_allclose(f, np.exp(-g.r2 / 2) / np.sqrt(np.pi), atol=1e-14)


def test_projection_idempotent_out_of_span():
    b = HermiteBasis(1.0, 8.0)
    g = GridSpec.default(1.0, 128)
    X, Y = g.mesh
    f = np.exp(-((X - 1.0) ** 2 + Y * Y))
    once = spectral_to_grid(grid_to_spectral(f, b, g), b, g)
    twice = spectral_to_grid(grid_to_spectral(once, b, g), b, g)
    assert np.abs(once - twice).max() < 1e-12


def test_unresolved_grid_rejected():
    with pytest.raises(ValueError, match="does not resolve"):
        axis_matrix(HermiteBasis(1.0, 120.0), GridSpec(8.0, 64))


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(8.0, 15)
    with pytest.raises(ValueError):
        GridSpec(8.0, 8)
    with pytest.raises(ValueError):
        GridSpec(-1.0, 64)


@given(st.floats(0.5, 6.0))
def test_projector_algebra(M):
    b = HermiteBasis(1.0, 20.0)
    P = b.projector_leq(M)
    Q = 1 - P
    np.testing.assert_array_equal(P * P, P)
    np.testing.assert_array_equal(P * Q, 0)
    c = np.arange(b.size, dtype=float)
    # commutes with the diagonal S^2 action
    np.testing.assert_array_equal(P * b.apply_S_power(c, 2), b.apply_S_power(P * c, 2))


def test_projector_extremes():
    b = HermiteBasis(1.0, 10.0)
    assert b.projector_leq(math.sqrt(10.0)).all()
    assert not b.projector_leq(1.0).any()


def test_apply_S_power():
    b = HermiteBasis(1.0, 10.0)
    e0 = np.zeros(b.size)
    e0[0] = 1
    assert b.apply_S_power(e0, 2)[0] == 2
    c = np.linspace(1, 2, b.size)
    np.testing.assert_array_equal(b.apply_S_power(c, 0), c)
    assert np.abs(b.apply_S_power(b.apply_S_power(c, 1), -1) - c).max() < 1e-14
    with pytest.raises(ValueError):
        b.apply_S_power(c, -3)


def test_json_round_trip():
    b = HermiteBasis(1.5, 12.0)
    doc = json.loads(b.to_json())
    assert set(doc) == {"omega", "cutoff_energy", "modes"}
    assert HermiteBasis.from_json(b.to_json()).modes == b.modes


def test_gaussian_pair_tensor_matches_brute_force():
    # independent check: 2D trapezoid sum of the 1D pair integral
    nmax, omega, kappa = 3, 1.2, 1.7
    T = gaussian_pair_tensor(nmax, omega, kappa)
    x = np.linspace(-9, 9, 721)
    h = x[1] - x[0]
    f = axis_functions(nmax, x, omega)
    K = np.exp(-kappa * (x[:, None] - x[None, :]) ** 2)
    for a, b_, c, d in [(0, 0, 0, 0), (1, 2, 1, 0), (3, 1, 1, 3), (2, 2, 0, 0)]:
        brute = np.einsum("i,j,ij->", f[a] * f[c], f[b_] * f[d], K) * h * h
        assert T[a, b_, c, d] == pytest.approx(brute, abs=1e-12)


def test_contact_tensor_is_kappa_limit():
    T = contact_tensor(4, 1.0)
    kappa = 1e8
    Tg = gaussian_pair_tensor(4, 1.0, kappa) * np.sqrt(kappa / np.pi)
    assert np.abs(T - Tg).max() < 1e-6
