"""Operator inequalities as minimum-eigenvalue problems, and the log-log counterexample."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import integrate

from . import nls
from .hermite import GridSpec, HermiteBasis, contact_tensor, pair_matrix_from_axis, spectral_to_grid
from .interaction import InteractionSpec
from .manybody import (DENSE_CAP, DimensionError, OccupationBasis, assemble_hamiltonian,
                       min_eig_certified, second_quantize_one_body, second_quantize_pair)

HOLDS_TOL = 1e-8


@dataclass
class EstimateReport:
    inequality_id: str
    parameters: dict
    min_eigenvalue: float
    verdict: str
    certificate: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _verdict(value: float, certificate: float, hypothesis_ok: bool, below: str) -> str:
    if value >= -HOLDS_TOL and certificate < 1e-6:
        return "holds"
    return "fails" if not hypothesis_ok else below


def _require_threshold(alpha: float, interaction: InteractionSpec, enforce: bool) -> bool:
    ok = interaction.l1_norm < nls.threshold_L1(alpha)
    if enforce and not ok:
        raise ValueError(
            f"||V||_1 = {interaction.l1_norm:.6g} is not below 2 alpha / C_gn^4 = {nls.threshold_L1(alpha):.6g}"
        )
    return ok


def _params(**kw) -> dict:
    return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in kw.items()}


def reduced_hamiltonian(occ: OccupationBasis, basis: HermiteBasis, interaction: InteractionSpec,
                        alpha: float) -> sp.csr_matrix:
    """H_{N,alpha} = alpha sum_j S_j^2 + (1/N) sum_{i<j} V_N,ij, assembled from one- and two-body parts."""
    H = second_quantize_one_body(occ, alpha * basis.eigenvalues)
    if interaction.profile != "zero" and occ.N >= 2:
        H = H + second_quantize_pair(occ, interaction.pair_matrix(basis)) / occ.N
    return H.tocsr()


def check_prop23(N: int, alpha: float, C0: float, interaction: InteractionSpec, basis: HermiteBasis,
                 enforce_threshold: bool = True) -> EstimateReport:
    """min over symmetric psi of <psi, (2 C0 + H_{12,alpha}) psi>.

    On the symmetric sector this quadratic form equals 2 (N^-1 H_{N,alpha} + C0).
    """
    if not 0 < alpha < 1 or C0 <= 0:
        raise ValueError("need alpha in (0,1) and C0 > 0")
    ok = _require_threshold(alpha, interaction, enforce_threshold)
    occ = OccupationBasis(basis.size, N)
    op = 2 * (reduced_hamiltonian(occ, basis, interaction, alpha) / N + C0 * sp.identity(occ.dim))
    cert = min_eig_certified(op.tocsr())
    return EstimateReport(
        "pair_bound", _params(N=N, alpha=alpha, C0=C0, beta=interaction.beta, lam=interaction.lam,
                           D=basis.size, cutoff=basis.cutoff_energy),
        cert.value, _verdict(cert.value, cert.residual, ok, "below_threshold_N"), cert.residual,
    )


def check_thm22(N: int, alpha: float, C0: float, interaction: InteractionSpec, basis: HermiteBasis,
                enforce_threshold: bool = True) -> EstimateReport:
    """min over symmetric psi of <psi, (2 C0 + H_12) psi> - 2 (1 - alpha) ||S_1 psi||^2.

    Built from the full Hamiltonian: 2 (N^-1 H_N + C0 - (1 - alpha) N^-1 sum_j S_j^2).
    """
    if not 0 < alpha < 1 or C0 <= 0:
        raise ValueError("need alpha in (0,1) and C0 > 0")
    ok = _require_threshold(alpha, interaction, enforce_threshold)
    occ = OccupationBasis(basis.size, N)
    H = assemble_hamiltonian(occ, basis, interaction.with_N(N)).matrix
    S1 = second_quantize_one_body(occ, basis.eigenvalues) / N
    op = 2 * (H / N + C0 * sp.identity(occ.dim) - (1 - alpha) * S1)
    cert = min_eig_certified(op.tocsr())
    return EstimateReport(
        "split_bound", _params(N=N, alpha=alpha, C0=C0, beta=interaction.beta, lam=interaction.lam,
                          D=basis.size, cutoff=basis.cutoff_energy),
        cert.value, _verdict(cert.value, cert.residual, ok, "below_threshold_N"), cert.residual,
    )


def symmetrized_S_product(occ: OccupationBasis, basis: HermiteBasis, k: int) -> np.ndarray:
    """Diagonal of Sym(S_1^2 ... S_k^2) on the occupation sector, k in {1, 2}."""
    lam = basis.eigenvalues
    n = occ.number_operators()
    s1 = n @ lam
    if k == 1:
        return s1 / occ.N
    if k == 2:
        if occ.N < 2:
            raise ValueError("k=2 needs N >= 2")
        return (s1 * s1 - n @ (lam * lam)) / (occ.N * (occ.N - 1))
    raise ValueError("k must be 1 or 2")


def main_energy_c0(alpha: float) -> float:
    return min((1 - alpha) / math.sqrt(2), 0.5)


def check_main_energy(N: int, k: int, alpha: float, interaction: InteractionSpec, basis: HermiteBasis,
                      enforce_threshold: bool = True) -> EstimateReport:
    """min eig of (N^-1 H_N + 1)^k - c0^k Sym(S_1^2 ... S_k^2) on the symmetric sector."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    ok = _require_threshold(alpha, interaction, enforce_threshold)
    occ = OccupationBasis(basis.size, N)
    if occ.dim > DENSE_CAP:
        raise DimensionError(f"dimension {occ.dim} above the dense cap")
    H = assemble_hamiltonian(occ, basis, interaction.with_N(N)).dense()
    A = H / N + np.eye(occ.dim)
    Ak = A if k == 1 else A @ A
    c0 = main_energy_c0(alpha)
    op = Ak - c0 ** k * np.diag(symmetrized_S_product(occ, basis, k))
    cert = min_eig_certified(0.5 * (op + op.T))
    return EstimateReport(
        f"energy_power_k{k}", _params(N=N, k=k, alpha=alpha, c0=c0, beta=interaction.beta, lam=interaction.lam,
                                D=basis.size, cutoff=basis.cutoff_energy),
        cert.value, _verdict(cert.value, cert.residual, ok, "below_threshold_N"), cert.residual,
    )


def lewin_hypothesis_M(epsilon: float, N: int, alpha: float, interaction: InteractionSpec) -> float:
    """Smallest M allowed by the projection lemma: 4 sqrt(||V||_inf / alpha) N^beta / eps."""
    return 4 * math.sqrt(interaction.sup_norm / alpha) * float(N) ** interaction.beta / epsilon


def check_lewin_projection(M: float, epsilon: float, N: int, alpha: float, interaction: InteractionSpec,
                           basis: HermiteBasis) -> EstimateReport:
    """min eig of H_{12,alpha} - [P H_{12,alpha} P - 2 eps^2 P |V_N| P] on the two-particle space.

    P = P_{<=M} (x) P_{<=M}; the basis cutoff must lie strictly above M^2.
    """
    if basis.cutoff_energy <= M * M:
        raise ValueError("basis cutoff must lie strictly above M^2")
    inter = interaction.with_N(N)
    D = basis.size
    lam = basis.eigenvalues
    one = np.add.outer(lam, lam).ravel()
    H12 = alpha * np.diag(one) + (N - 1) / N * inter.pair_matrix(basis)
    absV = inter.pair_matrix(basis, absolute=True)
    p1 = basis.projector_leq(M)
    P = np.outer(p1, p1).ravel()
    rhs = P[:, None] * (H12 - 2 * epsilon ** 2 * absV) * P[None, :]
    diff = H12 - rhs
    cert = min_eig_certified(0.5 * (diff + diff.T))
    need = lewin_hypothesis_M(epsilon, N, alpha, inter)
    hyp = M >= need
    if hyp:
        verdict = _verdict(cert.value, cert.residual, True, "fails")
    else:
        verdict = "below_threshold_M"
    return EstimateReport(
        "projection_bound", _params(M=M, epsilon=epsilon, N=N, alpha=alpha, beta=inter.beta, lam=inter.lam,
                            D=D, cutoff=basis.cutoff_energy, M_required=need),
        cert.value, verdict, cert.residual,
        {"hypothesis": bool(hyp), "violated": bool(cert.value < -HOLDS_TOL)},
    )


def nonsymmetric_pair_sweep(cutoffs, omega: float = 1.0, b0: float = 1.0) -> list[tuple]:
    """min eig of 2 + S_1^2 + S_2^2 - b0 delta(x_1 - x_2) over growing cutoffs (no symmetry imposed).

    This is the N -> infinity two-body operator with the contact limit of V_N;
    its truncations decrease as the cutoff grows.
    """
    rows = []
    for cutoff in cutoffs:
        basis = HermiteBasis(omega, cutoff)
        lam = basis.eigenvalues
        delta = pair_matrix_from_axis(basis, contact_tensor(basis.max_degree, omega))
        op = 2 + np.diag(np.add.outer(lam, lam).ravel()) - b0 * delta
        cert = min_eig_certified(op)
        rows.append((float(cutoff), basis.size, cert.value))
    return rows


# --- Hartree positivity -------------------------------------------------------


def random_trial_field(rng: np.random.Generator, grid: GridSpec, max_degree: int = 8,
                       omega_range=(1.0, 16.0)) -> nls.Field2D:
    """Normalized random smooth field: random Hermite coefficients at a random trap width."""
    om = float(np.exp(rng.uniform(*np.log(omega_range))))
    basis = HermiteBasis(om, 2 * om * (max_degree + 1))
    decay = np.exp(-0.3 * (basis.n1 + basis.n2))
    c = (rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)) * decay
    f = spectral_to_grid(c, basis, grid)
    # shift the center so trials are not all centred at the origin
    shift = rng.uniform(-1.0, 1.0, size=2)
    kx, ky = np.meshgrid(grid.wavenumbers, grid.wavenumbers, indexing="ij")
    f = np.fft.ifft2(np.fft.fft2(f) * np.exp(-1j * (kx * shift[0] + ky * shift[1])))
    f /= math.sqrt(grid.integrate(np.abs(f) ** 2))
    return nls.Field2D(grid, f)


def townes_trial_field(scale: float, grid: GridSpec) -> nls.Field2D:
    Q = nls._default_townes()
    v = Q(np.sqrt(grid.r2) / scale)
    v = v / math.sqrt(grid.integrate(v * v))
    return nls.Field2D(grid, v.astype(complex))


@dataclass
class HartreeScan:
    fraction: float
    min_value: float
    values: list
    townes_values: list


def hartree_positivity_scan(alpha: float, interaction: InteractionSpec, epsilon: float, trials: int,
                            seed: int, omega: float = 1.0, grid: GridSpec | None = None,
                            townes_scales=(0.3, 0.5, 0.7, 1.0), enforce_threshold: bool = True) -> HartreeScan:
    """Fraction of trial fields with E_eps(phi) >= -1e-10 (random fields plus dilated Townes profiles)."""
    _require_threshold(alpha, interaction, enforce_threshold)
    grid = grid or GridSpec.default(omega)
    rng = np.random.default_rng(seed)
    vals = [nls.hartree_energy(random_trial_field(rng, grid), interaction, alpha, epsilon, omega)
            for _ in range(trials)]
    tv = [nls.hartree_energy(townes_trial_field(s, grid), interaction, alpha, epsilon, omega)
          for s in townes_scales]
    allv = np.array(vals + tv)
    return HartreeScan(float(np.mean(allv >= -1e-10)), float(allv.min()), vals, tv)


# --- counterexample ---------------------------------------------------------------


def _exp_step(t):
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def bump(r):
    """Radial cutoff: 1 for r <= 1/4, 0 for r >= 1/2, e^{-1/t} smoothstep in between."""
    r = np.asarray(r, dtype=float)
    a, b = _exp_step(0.5 - r), _exp_step(r - 0.25)
    return a / (a + b)


def bump_derivative(r):
    r = np.asarray(r, dtype=float)
    a, b = _exp_step(0.5 - r), _exp_step(r - 0.25)
    ta, tb = 0.5 - r, r - 0.25
    da = np.where(ta > 0, -a / np.where(ta > 0, ta, 1.0) ** 2, 0.0)  # d/dr of e^{-1/(1/2-r)}
    db = np.where(tb > 0, b / np.where(tb > 0, tb, 1.0) ** 2, 0.0)
    return (da * (a + b) - a * (da + db)) / (a + b) ** 2


@dataclass
class CounterexampleField:
    epsilon: float
    inner: float = 0.25
    outer: float = 0.5
    grid_points: int = 512

    def __post_init__(self):
        if not 0 < self.epsilon < math.exp(-1):
            raise ValueError("epsilon must lie in (0, 1/e)")

    def loglog(self, rho):
        return np.log(-np.log(np.asarray(rho) + self.epsilon))

    def diagonal(self, x, y):
        """psi_eps(x, x) on a 2D point set."""
        return bump(0.0) * bump(np.hypot(x, y)) ** 2 * self.loglog(0.0)


@dataclass
class _Correlations:
    A: np.polynomial.Chebyshev
    B: np.polynomial.Chebyshev
    C: np.polynomial.Chebyshev


_CORR: dict = {}


def _correlations(n: int = 400, nodes: int = 96) -> _Correlations:
    """Radial correlation profiles of the bump (shift r along the x-axis).

    A(r) = int chi(x+r)^2 chi(x)^2, B(r) = int |grad chi(x+r)|^2 chi(x)^2,
    C(r) = int chi(x+r) d_x chi(x+r) chi(x)^2. Sampled on Chebyshev nodes on [0, 1/2].
    """
    key = (n, nodes)
    if key in _CORR:
        return _CORR[key]
    h = 1.0 / n
    ax = -0.5 + h * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    base2 = bump(np.hypot(X, Y)) ** 2
    k = np.arange(nodes)
    rs = 0.25 * (1 - np.cos(np.pi * (k + 0.5) / nodes))
    vals = np.zeros((3, nodes))
    for i, r in enumerate(rs):
        R = np.hypot(X + r, Y)
        c = bump(R)
        dc = bump_derivative(R)
        with np.errstate(invalid="ignore", divide="ignore"):
            dx = np.where(R > 0, dc * (X + r) / np.where(R > 0, R, 1.0), 0.0)
        vals[0, i] = np.sum(c * c * base2) * h * h
        vals[1, i] = np.sum(dc * dc * base2) * h * h
        vals[2, i] = np.sum(c * dx * base2) * h * h
    fits = [np.polynomial.Chebyshev.fit(rs, v, nodes - 1, domain=[0, 0.5]) for v in vals]
    _CORR[key] = _Correlations(*fits)
    return _CORR[key]


def diagonal_trace(field: CounterexampleField) -> float:
    """J(eps) = int |psi_eps(x, x)|^2 dx by midpoint quadrature on [-1/2, 1/2]^2."""
    n = field.grid_points
    h = 1.0 / n
    ax = -0.5 + h * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return float(np.sum(field.diagonal(X, Y) ** 2) * h * h)


def gradient_norm(field: CounterexampleField) -> float:
    """||grad_{x1} psi_eps||^2 in relative coordinates r = x1 - x2, x2.

    With f(r) = chi(r) ln(-ln(r + eps)) the x2-integral reduces to the
    correlation profiles A, B, C, leaving
    2 pi int rho [f'^2 A + f^2 B + 2 f f' C] d rho, integrated in log rho.
    """
    eps = field.epsilon
    corr = _correlations()

    def integrand(s):
        rho = math.exp(s)
        chi = float(bump(rho))
        dchi = float(bump_derivative(rho))
        L = math.log(-math.log(rho + eps))
        dL = -1.0 / ((rho + eps) * -math.log(rho + eps))
        f = chi * L
        df = dchi * L + chi * dL
        return rho * rho * (df * df * corr.A(rho) + f * f * corr.B(rho) + 2 * f * df * corr.C(rho))

    lo = math.log(eps * 1e-6)
    breaks = sorted({lo, math.log(eps), math.log(0.25), math.log(0.5)})
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        val, err = integrate.quad(integrand, a, b, limit=400, epsabs=1e-13, epsrel=1e-11)
        if err > 1e-8 * max(abs(val), 1.0):
            raise RuntimeError(f"gradient quadrature did not converge on [{a}, {b}]: {err}")
        total += val
    return 2 * math.pi * total


@dataclass
class CounterexampleTable:
    rows: list  # (eps, J, grad_norm_sq)
    exponent: float
    increasing: bool
    ratio: float
    gradient_variation: float


def counterexample_trace(epsilons) -> CounterexampleTable:
    """J(eps) and ||grad_1 psi_eps||^2 along decreasing eps, with the fitted power of ln ln(1/eps)."""
    eps = list(epsilons)
    if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    if any(not 1e-12 < e < math.exp(-1) for e in eps):
        raise ValueError("epsilons must lie in (1e-12, 1/e)")
    rows = []
    for e in eps:
        f = CounterexampleField(e)
        rows.append((e, diagonal_trace(f), gradient_norm(f)))
    J = np.array([r[1] for r in rows])
    G = np.array([r[2] for r in rows])
    ll = np.log(np.log(1 / np.array(eps)))
    exponent = float(np.polyfit(np.log(ll), np.log(J), 1)[0]) if len(eps) > 1 else float("nan")
    return CounterexampleTable(
        rows, exponent, bool(np.all(np.diff(J) > 0)), float(J[-1] / J[0]),
        float((G.max() - G.min()) / G.min()),
    )


# --- trace identity ------------------------------------------------------------------


def fourier_bump(xi, inner: float = 4.0, outer: float = 8.0):
    """Smooth radial multiplier: 1 for |xi| <= inner, 0 for |xi| >= outer."""
    t = (np.asarray(xi, dtype=float) - inner) / (outer - inner)
    a, b = _exp_step(1 - t), _exp_step(t)
    return np.where(t <= 0, 1.0, np.where(t >= 1, 0.0, a / np.where(a + b > 0, a + b, 1.0)))


@dataclass
class TraceIdentity:
    J_V: float
    J_delta: float
    difference: float
    hypothesis: bool


def band_limited_pair(n: int, M1: float, M2: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric psi(x1, x2) on the (2 pi)-periodic n^4 grid with each particle's spectrum in M1 <= |a| <= M2."""
    k = np.fft.fftfreq(n, 1.0 / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    ring = (np.hypot(kx, ky) >= M1) & (np.hypot(kx, ky) <= M2)
    if not ring.any():
        raise ValueError("empty frequency band")
    if 4 * M2 + 1 > n:
        raise ValueError(f"grid n={n} cannot resolve |psi|^2 for band edge {M2}")
    c = np.zeros((n, n, n, n), dtype=complex)
    idx = np.nonzero(ring)
    m = len(idx[0])
    coef = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    coef = coef + coef.T
    c[idx[0][:, None], idx[1][:, None], idx[0][None, :], idx[1][None, :]] = coef
    psi = np.fft.ifftn(c) * n ** 4 / (2 * np.pi) ** 2
    return psi


def trace_identity_check(n: int, M1: float, M2: float, N: int, beta: float, seed: int = 0,
                         multiplier=None) -> TraceIdentity:
    """J_V = int V_N(x1 - x2)|psi|^2 versus J_delta = int |psi(x, x)|^2 on the 2D torus.

    V_N has Fourier multiplier Vhat(xi / N^beta) with Vhat = 1 on |xi| <= 4, so
    the two agree whenever the pair frequencies stay inside that plateau.
    """
    scale = float(N) ** beta
    mult = multiplier or fourier_bump
    k = np.fft.fftfreq(n, 1.0 / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    top = 8.0 * scale if multiplier is None else n / 2
    if multiplier is None and top + 2 * M2 >= n:
        raise ValueError("grid too coarse for the potential band")
    Vhat = mult(np.hypot(kx, ky) / scale)
    Vx = np.real(np.fft.ifft2(Vhat)) * n * n / (2 * np.pi) ** 2  # periodic V_N on the grid
    rng = np.random.default_rng(seed)
    psi = band_limited_pair(n, M1, M2, rng)
    F = np.abs(psi) ** 2
    h2 = (2 * np.pi / n) ** 2
    i = np.arange(n)
    diff = (i[:, None] - i[None, :]) % n  # index of x1 - x2
    # J_V = sum_{x1,x2} V(x1-x2) F(x1,x2): contract axis pairs (0,2) and (1,3)
    Vd = Vx[diff[:, None, :, None], diff[None, :, None, :]]
    J_V = float(np.sum(Vd * F) * h2 * h2)
    diag = F[i[:, None], i[None, :], i[:, None], i[None, :]]
    J_d = float(np.sum(diag) * h2)
    return TraceIdentity(J_V, J_d, abs(J_V - J_d), bool(2 * M2 <= 4 * scale))
