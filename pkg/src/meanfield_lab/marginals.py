"""Marginal densities, trace-class diagnostics, de Finetti measures and hierarchy residuals."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .hermite import HermiteBasis, contact_tensor, gaussian_pair_tensor, pair_matrix_from_axis
from .interaction import InteractionSpec
from .manybody import BosonicState, OccupationBasis, occupation_dimension


@dataclass
class DensityMatrixK:
    k: int
    D: int
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (self.D ** self.k,) * 2:
            raise ValueError("matrix shape does not match D^k")

    @property
    def dim(self) -> int:
        return self.D ** self.k

    def hermiticity(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def permutation_defect(self) -> float:
        """Largest deviation under swapping particle labels (k = 2, 3)."""
        if self.k == 1:
            return 0.0
        T = self.matrix.reshape((self.D,) * (2 * self.k))
        worst = 0.0
        for j in range(self.k - 1):
            perm = list(range(2 * self.k))
            perm[j], perm[j + 1] = perm[j + 1], perm[j]
            perm[self.k + j], perm[self.k + j + 1] = perm[self.k + j + 1], perm[self.k + j]
            worst = max(worst, float(np.abs(T - T.transpose(perm)).max()))
        return worst

    def validate(self, herm_tol=1e-10, psd_tol=1e-10, trace_tol=1e-9, perm_tol=1e-10) -> None:
        if self.hermiticity() > herm_tol:
            raise ValueError(f"not Hermitian: {self.hermiticity():.2e}")
        if self.min_eigenvalue() < -psd_tol:
            raise ValueError(f"not PSD: {self.min_eigenvalue():.2e}")
        if abs(self.trace() - 1) > trace_tol:
            raise ValueError(f"trace {self.trace()}")
        if self.permutation_defect() > perm_tol:
            raise ValueError(f"not permutation symmetric: {self.permutation_defect():.2e}")


def _lowered_vectors(state: BosonicState, k: int) -> np.ndarray:
    """Rows a_{pk}...a_{p1} psi for all (p1..pk), row-major in (p1..pk)."""
    occ = state.basis
    vecs = state.coefficients[None, :]
    cur = occ
    for _ in range(k):
        ops = cur.annihilators
        vecs = np.stack([(a @ vecs.T).T for a in ops], axis=1).reshape(-1, ops[0].shape[0])
        cur = cur.lowered
    return vecs


def reduce(state: BosonicState, k: int) -> DensityMatrixK:
    """k-particle marginal gamma^(k) on the full (C^D)^{(x)k} space.

    gamma_{(p),(q)} = <a_q^* ... a_p ...> / (N!/(N-k)!).
    """
    N = state.basis.N
    if k < 1 or k > N:
        raise ValueError(f"k={k} must lie in 1..N={N}")
    if k > 3:
        raise ValueError("marginals beyond k=3 are not supported")
    U = _lowered_vectors(state, k)
    norm = math.perm(N, k)
    return DensityMatrixK(k, state.basis.D, (U @ U.conj().T) / norm)


def partial_trace(matrix: np.ndarray, D: int, k: int) -> np.ndarray:
    """Trace out the last of k particles of a D^k x D^k matrix."""
    T = np.asarray(matrix).reshape(D ** (k - 1), D, D ** (k - 1), D)
    return np.einsum("ajbj->ab", T)


def trace_norm(A) -> float:
    A = np.asarray(A)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (A + A.conj().T))).sum())


def pure_power(phi, k: int) -> np.ndarray:
    v = np.asarray(phi, dtype=complex)
    out = v
    for _ in range(k - 1):
        out = np.kron(out, v)
    return np.outer(out, out.conj())


def trace_distance_pure_power(gamma: DensityMatrixK, phi, k: int | None = None) -> float:
    """Tr |gamma - |phi^k><phi^k||."""
    k = gamma.k if k is None else k
    phi = np.asarray(phi, dtype=complex)
    if abs(np.linalg.norm(phi) - 1) > 1e-9:
        raise ValueError("phi must be normalized")
    if phi.size == gamma.D + 1:
        # phi carries one extra component orthogonal to the truncated modes
        g = embed(gamma.matrix, gamma.D, k, gamma.D + 1)
        return trace_norm(g - pure_power(phi, k))
    return trace_norm(gamma.matrix - pure_power(phi, k))


def embed(matrix: np.ndarray, D: int, k: int, D_new: int) -> np.ndarray:
    """Zero-pad a D^k operator to (D_new)^k, keeping the tensor structure."""
    T = np.asarray(matrix).reshape((D,) * (2 * k))
    out = np.zeros((D_new,) * (2 * k), dtype=complex)
    out[(slice(0, D),) * (2 * k)] = T
    return out.reshape(D_new ** k, D_new ** k)


def observable_family(dim: int, size: int, seed: int = 0) -> list[np.ndarray]:
    """Seeded Hermitian matrices normalized to operator norm 1."""
    rng = np.random.default_rng([seed, dim])
    out = []
    for _ in range(size):
        G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        J = 0.5 * (G + G.conj().T)
        out.append(J / np.abs(np.linalg.eigvalsh(J)).max())
    return out


def metric_dk(gamma: DensityMatrixK, sigma: DensityMatrixK, family_size: int = 32, seed: int = 0) -> float:
    """sum_i 2^-i |Tr J_i (gamma - sigma)| over a fixed finite observable family."""
    if gamma.matrix.shape != sigma.matrix.shape:
        raise ValueError("dimension mismatch")
    diff = gamma.matrix - sigma.matrix
    fam = observable_family(gamma.dim, family_size, seed)
    return float(sum(2.0 ** -(i + 1) * abs(np.trace(J @ diff)) for i, J in enumerate(fam)))


def compatibility_check(state: BosonicState, k: int = 1) -> float:
    """Tr | Tr_{k+1} gamma^(k+1) - gamma^(k) |."""
    if k + 1 > state.basis.N:
        raise ValueError("need k + 1 <= N")
    hi = reduce(state, k + 1)
    lo = reduce(state, k)
    return trace_norm(partial_trace(hi.matrix, hi.D, k + 1) - lo.matrix)


# --- de Finetti ---------------------------------------------------------------


def sphere_samples(D: int, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, D)) + 1j * rng.standard_normal((n, D))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def product_overlaps(phis: np.ndarray, state: BosonicState) -> np.ndarray:
    """<phi^{(x)N}, psi> for each row phi."""
    occ = state.basis
    m = occ.states
    logc = 0.5 * (gammaln(occ.N + 1) - gammaln(m + 1).sum(axis=1))
    # conj(phi)^m via log-magnitudes and phases; zero components handled by powers
    out = np.empty(len(phis), dtype=complex)
    chunk = max(1, 2_000_000 // max(occ.dim, 1))
    for s in range(0, len(phis), chunk):
        P = phis[s:s + chunk].conj()
        prod = np.ones((len(P), occ.dim), dtype=complex)
        for p in range(occ.D):
            prod *= P[:, p:p + 1] ** m[None, :, p]
        out[s:s + chunk] = (prod * np.exp(logc)) @ state.coefficients
    return out


@dataclass
class DeFinettiResult:
    estimate: float
    mc_error: float
    bound: float
    weight_mean: float
    exact: float | None = None

    @property
    def within_bound(self) -> bool:
        return self.estimate <= self.bound + 3 * self.mc_error


def definetti_distance(state: BosonicState, samples: int, seed: int = 0, blocks: int = 20,
                       exact: bool = True) -> DeFinettiResult:
    """Monte Carlo Tr|gamma^(2) - int |phi phi><phi phi| dmu| for dmu = dim_sym |<phi^N, psi>|^2 dphi.

    The error bar is a delete-one-block jackknife over ``blocks`` blocks; with
    ``exact`` the closed-form value of the measure's second moment is attached.
    """
    occ = state.basis
    N, D = occ.N, occ.D
    if N < 2:
        raise ValueError("need N >= 2")
    if samples < blocks:
        raise ValueError("need at least one sample per block")
    rng = np.random.default_rng(seed)
    phis = sphere_samples(D, samples, rng)
    w = occupation_dimension(D, N) * np.abs(product_overlaps(phis, state)) ** 2
    pp = np.einsum("ni,nj->nij", phis, phis).reshape(samples, D * D)
    gamma2 = reduce(state, 2).matrix
    size = samples // blocks
    block_sums = np.stack([
        (w[b * size:(b + 1) * size, None] * pp[b * size:(b + 1) * size]).T @ pp[b * size:(b + 1) * size].conj()
        for b in range(blocks)
    ])
    total = block_sums.sum(axis=0)
    used = size * blocks
    est = trace_norm(gamma2 - total / used)
    loo = np.array([trace_norm(gamma2 - (total - block_sums[b]) / (used - size)) for b in range(blocks)])
    mc_err = float(np.sqrt((blocks - 1) / blocks * np.sum((loo - loo.mean()) ** 2)))
    bound = 8 * D / N
    if mc_err > bound / 2:
        warnings.warn("insufficient samples for the de Finetti estimate", RuntimeWarning, stacklevel=2)
    exact_val = trace_norm(gamma2 - definetti_second_moment(state)) if exact else None
    return DeFinettiResult(est, mc_err, bound, float(w[:used].mean()), exact_val)


def definetti_second_moment(state: BosonicState) -> np.ndarray:
    """Closed form of int |phi phi><phi phi| dmu via the symmetric projector on N+2 particles.

    int |phi^{(x)m}><phi^{(x)m}| dphi = P_sym / dim_sym(m), hence the moment is
    dim_sym(N)/dim_sym(N+2) <psi| a_q a_p a_r^* a_s^* |psi> / ((N+1)(N+2)).
    """
    occ = state.basis
    N, D = occ.N, occ.D
    up1 = OccupationBasis(D, N + 1, cap=10 ** 7)
    up2 = OccupationBasis(D, N + 2, cap=10 ** 7)
    c1 = [a.T for a in up1.annihilators]  # a_p^*: N -> N+1
    c2 = [a.T for a in up2.annihilators]  # N+1 -> N+2
    psi = state.coefficients
    V = np.stack([c2[p] @ (c1[q] @ psi) for p in range(D) for q in range(D)])
    G = V.conj() @ V.T  # G[(pq),(rs)] = <a_p^* a_q^* psi, a_r^* a_s^* psi>
    scale = occupation_dimension(D, N) / occupation_dimension(D, N + 2) / ((N + 1) * (N + 2))
    return scale * G


# --- hierarchy ----------------------------------------------------------------


def _embed_pair(W: np.ndarray, D: int, i: int, j: int, k: int) -> np.ndarray:
    """Two-particle operator W (on factors 0,1) acting on factors (i, j) of k."""
    W4 = W.reshape(D, D, D, D)
    letters = "abcdefgh"
    out_idx = list(letters[:k])
    in_idx = list(letters[:k])
    in_idx[i], in_idx[j] = "x", "y"
    eye = [np.eye(D)] * k
    ops = [W4]
    spec = [f"{out_idx[i]}{out_idx[j]}xy"]
    for m in range(k):
        if m not in (i, j):
            in_idx[m] = letters[k + m]
            ops.append(eye[m])
            spec.append(f"{out_idx[m]}{in_idx[m]}")
    expr = ",".join(spec) + "->" + "".join(out_idx) + "".join(in_idx)
    return np.einsum(expr, *ops).reshape(D ** k, D ** k)


def _one_body_sum(lam: np.ndarray, k: int) -> np.ndarray:
    D = lam.size
    diag = np.zeros(D ** k)
    for j in range(k):
        shape = [1] * k
        shape[j] = D
        diag = diag + np.broadcast_to(lam.reshape(shape), (D,) * k).ravel()
    return np.diag(diag)


def hierarchy_rhs(gk: np.ndarray, gk1: np.ndarray, k: int, N: int, lam: np.ndarray, W: np.ndarray) -> np.ndarray:
    """sum_j [S_j^2, g] + (1/N) sum_{i<j<=k} [V_ij, g] + ((N-k)/N) sum_j Tr_{k+1}[V_{j,k+1}, g^(k+1)]."""
    D = lam.size
    h = _one_body_sum(lam, k)
    out = h @ gk - gk @ h
    for i in range(k):
        for j in range(i + 1, k):
            V = _embed_pair(W, D, i, j, k)
            out += (V @ gk - gk @ V) / N
    if gk1 is not None and N > k:
        for j in range(k):
            V = _embed_pair(W, D, j, k, k + 1)
            out += (N - k) / N * partial_trace(V @ gk1 - gk1 @ V, D, k + 1)
    return out


def bbgky_residual(trajectory, k: int, interaction: InteractionSpec, basis: HermiteBasis) -> list[tuple]:
    """Frobenius residual of the truncated BBGKY hierarchy at each interior sample.

    The time derivative is a central difference of the marginals, so the
    residual is O(h^2) plus the propagation error floor.
    """
    if len(trajectory) < 3:
        raise ValueError("need at least 3 time samples")
    ts = np.array([t for t, _ in trajectory])
    h = np.diff(ts)
    if np.max(np.abs(h - h[0])) > 1e-12 * max(1.0, abs(ts[-1])):
        raise ValueError("time samples must be uniformly spaced")
    h = h[0]
    N = trajectory[0][1].basis.N
    if interaction.N != N:
        raise ValueError("interaction scaled for a different N")
    lam = basis.eigenvalues
    W = interaction.pair_matrix(basis)
    gam = [reduce(s, k).matrix for _, s in trajectory]
    out = []
    for i in range(1, len(trajectory) - 1):
        lhs = 1j * (gam[i + 1] - gam[i - 1]) / (2 * h)
        st = trajectory[i][1]
        gk1 = reduce(st, k + 1).matrix if N > k else None
        rhs = hierarchy_rhs(gam[i], gk1, k, N, lam, W)
        out.append((float(ts[i]), float(np.linalg.norm(lhs - rhs))))
    return out


# --- delta comparison ------------------------------------------------------------


@dataclass
class DeltaComparison:
    rows: list  # (N, pairing_V, pairing_delta, pairing_rho, |V - delta|)
    exponent: float


def delta_comparison(gamma2: DensityMatrixK, basis: HermiteBasis, interactions, J=None,
                     mollifier_width: float = 0.05) -> DeltaComparison:
    """Pair gamma^(2) (weighted by J on particle 1) against -V_N, b0 delta and b0 rho_alpha.

    rho_alpha(x) = e^{-|x|^2/alpha^2} / (pi alpha^2). The decay exponent is the
    negative log-log slope of |<-V_N> - <b0 delta>| over the supplied N values.
    """
    D = basis.size
    if gamma2.D != D or gamma2.k != 2:
        raise ValueError("gamma2 must be a two-particle marginal over the basis")
    J = np.eye(D) if J is None else np.asarray(J)
    JJ = np.kron(J, np.eye(D))
    g = gamma2.matrix
    nmax, om = basis.max_degree, basis.omega
    delta = pair_matrix_from_axis(basis, contact_tensor(nmax, om))
    a = mollifier_width
    rho = pair_matrix_from_axis(basis, gaussian_pair_tensor(nmax, om, 1 / a ** 2)) / (np.pi * a * a)
    rows = []
    for inter in interactions:
        b0 = inter.b0
        pV = np.trace(JJ @ (-inter.pair_matrix(basis)) @ g).real
        pd = np.trace(JJ @ (b0 * delta) @ g).real
        pr = np.trace(JJ @ (b0 * rho) @ g).real
        rows.append((inter.N, pV, pd, pr, abs(pV - pd)))
    Ns = np.array([r[0] for r in rows], dtype=float)
    diffs = np.array([r[4] for r in rows])
    exponent = float("nan")
    if len(rows) >= 2 and np.all(diffs > 0):
        exponent = float(-np.polyfit(np.log(Ns), np.log(diffs), 1)[0])
    return DeltaComparison(rows, exponent)
