import math

import numpy as np
import pytest

from meanfield_lab import nls
from meanfield_lab.estimates import (CounterexampleField, bump, bump_derivative, check_lewin_projection,
                                     check_main_energy, check_prop23, check_thm22, counterexample_trace,
                                     diagonal_trace, fourier_bump, gradient_norm, hartree_positivity_scan,
                                     lewin_hypothesis_M, main_energy_c0, nonsymmetric_pair_sweep,
                                     random_trial_field, reduced_hamiltonian, symmetrized_S_product,
                                     trace_identity_check)
from meanfield_lab.hermite import GridSpec, HermiteBasis
from meanfield_lab.interaction import InteractionSpec
from meanfield_lab.manybody import OccupationBasis, assemble_hamiltonian


ALPHA = 0.5


def admissible(N=2, frac=0.9, beta=0.1):
    return InteractionSpec.from_l1(frac * nls.threshold_L1(ALPHA), beta=beta, N=N)


def test_threshold_enforced():
    b = HermiteBasis(1.0, 6.0)
    with pytest.raises(ValueError, match="not below"):
        check_prop23(2, ALPHA, 1.0, admissible(frac=1.5), b)
    rep = check_prop23(2, ALPHA, 1.0, admissible(frac=1.5), b, enforce_threshold=False)
    assert rep.verdict in ("holds", "fails")


def test_reduced_hamiltonian_routes_agree():
    # alpha = 1 recovers the assembled Hamiltonian
    b = HermiteBasis(1.0, 6.0)
    I = admissible(N=3)
    occ = OccupationBasis(b.size, 3)
    A = reduced_hamiltonian(occ, b, I, 1.0)
    B = assemble_hamiltonian(occ, b, I).matrix
    assert abs(A - B).max() < 1e-13


def test_pair_and_split_bounds_agree_on_symmetric_states():
    b = HermiteBasis(1.0, 6.0)
    I = admissible(N=3)
    p = check_prop23(3, ALPHA, 1.0, I, b)
    t = check_thm22(3, ALPHA, 1.0, I, b)
    assert p.min_eigenvalue == pytest.approx(t.min_eigenvalue, abs=1e-10)
    assert p.verdict == t.verdict == "holds"


def test_pair_bound_vanishing_interaction():
    b = HermiteBasis(1.0, 6.0)
    rep = check_prop23(2, ALPHA, 0.3, InteractionSpec(0.0, 0.1, 2, "zero"), b)
    # 2 (alpha * 2 + C0)
    assert rep.min_eigenvalue == pytest.approx(2 * (2 * ALPHA + 0.3))


def test_symmetrized_S_product_product_state():
    b = HermiteBasis(1.0, 6.0)
    occ = OccupationBasis(b.size, 3)
    i = occ.index[(3, 0, 0, 0, 0, 0)]
    assert symmetrized_S_product(occ, b, 1)[i] == pytest.approx(2.0)
    assert symmetrized_S_product(occ, b, 2)[i] == pytest.approx(4.0)
    j = occ.index[(2, 1, 0, 0, 0, 0)]
    # pairs: (0,0) once, (0,1) twice over 3 choose 2
    assert symmetrized_S_product(occ, b, 2)[j] == pytest.approx((4 + 2 * 8) / 3)


@pytest.mark.parametrize("k", [1, 2])
def test_main_energy_holds(k):
    b = HermiteBasis(1.0, 6.0)
    rep = check_main_energy(3, k, ALPHA, admissible(N=3), b)
    assert rep.verdict == "holds" and rep.min_eigenvalue > 0
    assert rep.parameters["c0"] == main_energy_c0(ALPHA)


def test_main_energy_c0():
    assert main_energy_c0(0.1) == 0.5
    assert main_energy_c0(0.5) == pytest.approx(0.5 / math.sqrt(2))


def test_lewin_holds_small_coupling():
    I = InteractionSpec.from_l1(0.01, beta=0.1, N=2)
    M = lewin_hypothesis_M(0.5, 2, ALPHA, I)
    b = HermiteBasis(1.0, M * M + 2.0)
    rep = check_lewin_projection(M, 0.5, 2, ALPHA, I, b)
    assert rep.extra["hypothesis"] and rep.verdict == "holds"


def test_lewin_violation_when_M_too_small():
    b = HermiteBasis(1.0, 12.0)
    with pytest.warns(UserWarning, match="outside"):
        I = InteractionSpec(1.0, 0.9, 1000)
        rep = check_lewin_projection(math.sqrt(2), 0.01, 1000, ALPHA, I, b)
    assert rep.verdict == "below_threshold_M"
    assert rep.extra["violated"] and rep.min_eigenvalue < -0.05


def test_lewin_cutoff_check():
    with pytest.raises(ValueError, match="strictly above"):
        check_lewin_projection(2.0, 0.5, 2, ALPHA, admissible(), HermiteBasis(1.0, 4.0))


def test_nonsymmetric_sweep_decreases():
    rows = nonsymmetric_pair_sweep([6.0, 10.0, 14.0], b0=5.0)
    vals = [r[2] for r in rows]
    assert vals[0] > vals[1] > vals[2]


def test_hartree_scan_positive_below_threshold():
    I = admissible(N=100)
    eps = nls.pinned_epsilon(ALPHA, I.l1_norm)
    scan = hartree_positivity_scan(ALPHA, I, eps, trials=20, seed=1)
    assert scan.fraction == 1.0 and scan.min_value > 0


def test_hartree_scan_finds_negative_above_threshold():
    I = admissible(N=100, frac=3.0)
    scan = hartree_positivity_scan(ALPHA, I, 0.125, trials=5, seed=1, townes_scales=(0.5, 0.7),
                                   enforce_threshold=False)
    assert min(scan.townes_values) < 0


def test_random_trial_field_normalized(rng):
    g = GridSpec.default(1.0)
    f = random_trial_field(rng, g)
    assert nls.mass(f) == pytest.approx(1.0, abs=1e-12)


def test_bump_profile():
    r = np.linspace(0, 0.7, 701)
    b = bump(r)
    assert (b[r <= 0.25] == 1).all() and (b[r >= 0.5] == 0).all()
    h = 1e-6
    x = np.array([0.3, 0.37, 0.45])
    fd = (bump(x + h) - bump(x - h)) / (2 * h)
    np.testing.assert_allclose(bump_derivative(x), fd, rtol=1e-6, atol=1e-8)


def test_counterexample_field_validation():
    with pytest.raises(ValueError):
        CounterexampleField(0.5)


def test_diagonal_trace_closed_form():
    # J = (ln ln 1/eps)^2 * int bump^4 ; the bump integral by radial quadrature
    from scipy import integrate
    I4, _ = integrate.quad(lambda r: bump(r) ** 4 * 2 * np.pi * r, 0, 0.5, points=[0.25])
    for eps in (1e-2, 1e-6):
        J = diagonal_trace(CounterexampleField(eps))
        assert J == pytest.approx(math.log(math.log(1 / eps)) ** 2 * I4, rel=1e-4)


def test_gradient_norm_against_brute_force():
    # frozen from a direct 4D adaptive quadrature at eps = 1e-3
    assert gradient_norm(CounterexampleField(1e-3)) == pytest.approx(3.78680, rel=1e-4)


def test_counterexample_trace_growth():
    tab = counterexample_trace([1e-2, 1e-4, 1e-8])
    assert tab.increasing
    assert tab.exponent == pytest.approx(2.0, abs=0.05)
    with pytest.raises(ValueError):
        counterexample_trace([1e-4, 1e-2])


def test_fourier_bump():
    xi = np.array([0, 4, 6, 8, 9])
    v = fourier_bump(xi)
    assert v[0] == v[1] == 1 and v[3] == v[4] == 0 and 0 < v[2] < 1


def test_trace_identity_holds_inside_plateau():
    res = trace_identity_check(24, 1, 2, N=10, beta=0.1)
    assert res.hypothesis
    assert res.difference < 1e-10 * max(1.0, res.J_delta)


def test_trace_identity_breaks_outside_plateau():
    res = trace_identity_check(40, 1, 5, N=2, beta=0.1)
    assert not res.hypothesis
    assert res.difference > 1e-3 * res.J_delta


def test_trace_identity_constant_multiplier():
    res = trace_identity_check(24, 1, 3, N=2, beta=0.1, multiplier=lambda x: np.ones_like(x))
    assert res.difference < 1e-10 * max(1.0, res.J_delta)
