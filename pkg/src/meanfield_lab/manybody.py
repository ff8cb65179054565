"""Exact N-boson dynamics in the truncated Hermite basis (occupation-number form).

H_N = sum_p lam_p a_p^* a_p + (1/(2N)) sum W_{pq,rs} a_p^* a_q^* a_s a_r
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product as iproduct
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse import linalg as spla
from scipy.special import gammaln

from .hermite import HermiteBasis, Mode2D
from .interaction import InteractionSpec

DIM_CAP = 200_000
DENSE_CAP = 20_000
DENSE_EIG_CAP = 3_000  # above this min_eig switches to Lanczos


class DimensionError(ValueError):
    pass


def occupation_dimension(D: int, N: int) -> int:
    return math.comb(D + N - 1, N)


def _occupations(D: int, N: int) -> np.ndarray:
    """All length-D occupation vectors summing to N, descending lexicographic."""
    if D == 1:
        return np.array([[N]], dtype=np.int64)
    rows = []
    for first in range(N, -1, -1):
        rest = _occupations(D - 1, N - first)
        rows.append(np.column_stack([np.full(len(rest), first), rest]))
    return np.vstack(rows)


class OccupationBasis:
    """Symmetric N-boson sector over D modes; states in descending lex order."""

    def __init__(self, D: int, N: int, cap: int = DIM_CAP):
        if D < 1 or N < 0:
            raise ValueError("need D >= 1 and N >= 0")
        dim = occupation_dimension(D, N)
        if dim > cap:
            raise DimensionError(f"symmetric sector dimension {dim} exceeds cap {cap} (D={D}, N={N})")
        self.D, self.N = D, N
        self.states = _occupations(D, N)
        self.index = {tuple(s): i for i, s in enumerate(self.states.tolist())}

    def __len__(self):
        return len(self.states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def __eq__(self, other):
        return isinstance(other, OccupationBasis) and (self.D, self.N) == (other.D, other.N)

    def __hash__(self):
        return hash((self.D, self.N))

    def __repr__(self):
        return f"OccupationBasis(D={self.D}, N={self.N}, dim={self.dim})"

    @cached_property
    def lowered(self) -> "OccupationBasis":
        return OccupationBasis(self.D, self.N - 1, cap=max(DIM_CAP, self.dim))

    @cached_property
    def annihilators(self) -> list:
        """a_p as sparse maps from this sector to the (N-1)-sector."""
        if self.N == 0:
            raise ValueError("cannot lower the vacuum sector")
        low = self.lowered
        ops = []
        for p in range(self.D):
            cols = np.nonzero(self.states[:, p])[0]
            targets = self.states[cols].copy()
            targets[:, p] -= 1
            rows = np.array([low.index[tuple(t)] for t in targets.tolist()], dtype=np.int64)
            vals = np.sqrt(self.states[cols, p].astype(float))
            ops.append(sp.csr_matrix((vals, (rows, cols)), shape=(low.dim, self.dim)))
        return ops

    @cached_property
    def pair_annihilator(self) -> sp.csr_matrix:
        """Stacked a_s a_r for (r, s) in row-major order: shape (D^2 dim_{N-2}, dim_N)."""
        if self.N < 2:
            raise ValueError("pair operators need N >= 2")
        a1 = self.annihilators
        a2 = self.lowered.annihilators
        return sp.vstack([a2[s] @ a1[r] for r in range(self.D) for s in range(self.D)]).tocsr()

    def number_operators(self) -> np.ndarray:
        return self.states.astype(float)


def symmetric_basis(D: int, N: int, cap: int = DIM_CAP) -> OccupationBasis:
    return OccupationBasis(D, N, cap)


@dataclass
class BosonicState:
    basis: OccupationBasis
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.shape != (self.basis.dim,):
            raise ValueError("coefficient vector does not match the occupation basis")
        nrm = np.linalg.norm(self.coefficients)
        if abs(nrm - 1) > 1e-9:
            raise ValueError(f"state is not normalized (norm {nrm})")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def overlap(self, other: "BosonicState") -> complex:
        return complex(np.vdot(self.coefficients, other.coefficients))


def product_state(occ: OccupationBasis, phi) -> BosonicState:
    """phi^{(x)N}: coefficient sqrt(N!/prod m_i!) prod phi_i^{m_i}."""
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (occ.D,):
        raise ValueError("phi has the wrong number of modes")
    if abs(np.linalg.norm(phi) - 1) > 1e-9:
        raise ValueError("phi must be normalized")
    m = occ.states
    logc = 0.5 * (gammaln(occ.N + 1) - gammaln(m + 1).sum(axis=1))
    mag = np.abs(phi)
    with np.errstate(divide="ignore"):
        logmag = np.where(m > 0, m * np.log(np.where(mag > 0, mag, 1.0)), 0.0)
    zero_hit = ((m > 0) & (mag == 0)).any(axis=1)
    amp = np.exp(logc + logmag.sum(axis=1))
    amp[zero_hit] = 0.0
    phase = np.exp(1j * (m * np.angle(phi)).sum(axis=1))
    c = amp * phase
    return BosonicState(occ, c / np.linalg.norm(c))


def random_state(occ: OccupationBasis, rng: np.random.Generator) -> BosonicState:
    c = rng.standard_normal(occ.dim) + 1j * rng.standard_normal(occ.dim)
    return BosonicState(occ, c / np.linalg.norm(c))


def two_body_element(p: Mode2D, q: Mode2D, r: Mode2D, s: Mode2D,
                     interaction: InteractionSpec, basis: HermiteBasis) -> float:
    """<phi_p(x1) phi_q(x2)| V_N(x1-x2) |phi_r(x1) phi_s(x2)> by rotated Gauss-Hermite quadrature.

    Quadrature order grows with N^beta; the result is checked against a rule of
    doubled order.
    """
    if interaction.profile == "zero":
        return 0.0
    for m in (p, q, r, s):
        if m not in basis.index:
            raise ValueError(f"mode {m} is not in the basis")
    base = int(math.ceil((2 * basis.max_degree + 8) * max(1.0, interaction.scale)))
    vals = [_element_quadrature(p, q, r, s, interaction, basis.omega, order) for order in (base, 2 * base)]
    if abs(vals[1] - vals[0]) > 1e-6 * max(abs(vals[1]), 1e-300) and abs(vals[1] - vals[0]) > 1e-14:
        raise RuntimeError(f"quadrature refinement failed for {(p, q, r, s)}: {vals}")
    return vals[1]


def _element_quadrature(p, q, r, s, interaction, omega, order):
    """Full 4D rule: per axis, rotated coordinates with a Gauss-Hermite rule in each."""
    from .hermite import hermite_polynomial_part

    t, w = np.polynomial.hermite.hermgauss(order)
    nmax = max(m.degree for m in (p, q, r, s))
    total = interaction.kappa * interaction.amplitude
    for axis in (0, 1):
        a_u = 1.0 + 2.0 * interaction.kappa / omega
        u = t / np.sqrt(a_u)
        U, Vv = np.meshgrid(u, t, indexing="ij")
        wt = np.outer(w / np.sqrt(a_u), w)
        xi1, xi2 = (Vv + U) / np.sqrt(2), (Vv - U) / np.sqrt(2)
        h1 = hermite_polynomial_part(nmax, xi1)
        h2 = hermite_polynomial_part(nmax, xi2)
        n = [(m.n1, m.n2)[axis] for m in (p, q, r, s)]
        total *= float(np.sum(wt * h1[n[0]] * h2[n[1]] * h1[n[2]] * h2[n[3]]))
    return total


def second_quantize_one_body(occ: OccupationBasis, h: np.ndarray) -> sp.csr_matrix:
    """sum_j h_j = sum_{pq} h_{pq} a_p^* a_q on the symmetric sector."""
    h = np.asarray(h)
    if h.ndim == 1:
        return sp.diags(occ.number_operators() @ h).tocsr()
    a = occ.annihilators
    out = sp.csr_matrix((occ.dim, occ.dim), dtype=h.dtype)
    for p, q in iproduct(range(occ.D), repeat=2):
        if h[p, q] != 0:
            out = out + h[p, q] * (a[p].T @ a[q])
    return out.tocsr()


def second_quantize_pair(occ: OccupationBasis, K: np.ndarray) -> sp.csr_matrix:
    """sum_{i<j} K_ij for an exchange-symmetric two-particle matrix K on C^D (x) C^D."""
    if occ.N < 2:
        return sp.csr_matrix((occ.dim, occ.dim))
    B = occ.pair_annihilator
    low = B.shape[0] // (occ.D * occ.D)
    KI = sp.kron(sp.csr_matrix(K), sp.identity(low, format="csr"), format="csr")
    return (0.5 * (B.T @ (KI @ B))).tocsr()


@dataclass
class ManyBodyOperator:
    occ: OccupationBasis
    basis: HermiteBasis
    interaction: InteractionSpec
    one_body: np.ndarray
    two_body: np.ndarray
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return self.occ.dim

    def __matmul__(self, v):
        return self.matrix @ v

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_residual(self) -> float:
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0


def _cache_key(basis: HermiteBasis, interaction: InteractionSpec) -> str:
    payload = json.dumps({"omega": basis.omega, "cutoff": basis.cutoff_energy,
                          "V": interaction.to_dict()}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:20]


def assemble_hamiltonian(occ: OccupationBasis, basis: HermiteBasis, interaction: InteractionSpec,
                         cache_dir: str | os.PathLike | None = None) -> ManyBodyOperator:
    """H_N = sum_j S_j^2 + (1/N) sum_{i<j} V_N(x_i - x_j) on the symmetric sector.

    The matrix is cached on disk when ``cache_dir`` (or MEANFIELD_CACHE_DIR) is set.
    """
    if occ.D != basis.size:
        raise ValueError(f"dimension mismatch: occupation basis has D={occ.D}, Hermite basis {basis.size}")
    if interaction.N != occ.N:
        raise ValueError(f"interaction scaled for N={interaction.N}, sector has N={occ.N}")
    lam = basis.eigenvalues
    W = interaction.pair_matrix(basis)
    cache_dir = cache_dir or os.environ.get("MEANFIELD_CACHE_DIR")
    path = None
    if cache_dir:
        path = Path(cache_dir) / f"H_{_cache_key(basis, interaction)}_N{occ.N}.npz"
        if path.exists():
            return ManyBodyOperator(occ, basis, interaction, lam, W, sp.load_npz(path).tocsr())
    H = second_quantize_one_body(occ, lam)
    if interaction.profile != "zero" and occ.N >= 2:
        H = H + second_quantize_pair(occ, W) / occ.N
    H = H.tocsr()
    H.sum_duplicates()
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        sp.save_npz(path, H)
    return ManyBodyOperator(occ, basis, interaction, lam, W, H)


# --- first-quantized oracle ---------------------------------------------------


def symmetrizer_isometry(occ: OccupationBasis) -> np.ndarray:
    """Columns: occupation states as normalized symmetric tensors in (C^D)^{(x) N}."""
    D, N = occ.D, occ.N
    iso = np.zeros((D ** N, occ.dim))
    for idx in iproduct(range(D), repeat=N):
        m = np.bincount(idx, minlength=D)
        j = occ.index[tuple(m)]
        flat = np.ravel_multi_index(idx, (D,) * N) if N else 0
        iso[flat, j] = 1.0
    return iso / np.linalg.norm(iso, axis=0)


def first_quantized_hamiltonian(basis: HermiteBasis, interaction: InteractionSpec, N: int) -> np.ndarray:
    """Dense sum_j S_j^2 + (1/N) sum_{i<j} V_N,ij on the full tensor space (tiny D, N only)."""
    D = basis.size
    if D ** N > 4096:
        raise DimensionError("first-quantized oracle limited to D^N <= 4096")
    eye = np.eye(D)
    H = np.zeros((D ** N, D ** N))
    for j in range(N):
        ops = [eye] * N
        ops[j] = np.diag(basis.eigenvalues)
        H += _kron_all(ops)
    W = interaction.pair_matrix(basis).reshape(D, D, D, D)
    for i in range(N):
        for j in range(i + 1, N):
            H += _embed_pair(W, i, j, N, D) / N
    return H


def _kron_all(ops):
    out = np.ones((1, 1))
    for o in ops:
        out = np.kron(out, o)
    return out


def _embed_pair(W4, i, j, N, D):
    """Two-particle tensor W4[p,q,r,s] acting on factors (i, j) of an N-fold product."""
    shape = (D,) * N
    M = np.zeros((D ** N, D ** N))
    for col in range(D ** N):
        idx = np.unravel_index(col, shape)
        r, s = idx[i], idx[j]
        block = W4[:, :, r, s]
        for p in range(D):
            for q in range(D):
                if block[p, q] != 0:
                    out = list(idx)
                    out[i], out[j] = p, q
                    M[np.ravel_multi_index(out, shape), col] += block[p, q]
    return M


# --- dynamics -----------------------------------------------------------------


class KrylovError(RuntimeError):
    pass


def _lanczos(matvec, v, m):
    beta0 = np.linalg.norm(v)
    n = v.size
    V = np.zeros((m + 1, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v / beta0
    k = m
    for j in range(m):
        w = matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j] - (beta[j - 1] * V[j - 1] if j else 0)
        # full reorthogonalization keeps the tridiagonal reduction honest
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-13 * max(1.0, abs(alpha[j])):
            k = j + 1
            break
        V[j + 1] = w / beta[j]
    return V, alpha[:k], beta[:k], beta0, k


def expm_krylov(H, v, t: float, tol: float = 1e-10, m: int = 30, max_substeps: int = 100000):
    """exp(-i t H) v by Lanczos with adaptive substeps.

    The a-posteriori error per substep is beta0 h_{m+1,m} |[exp(-i tau T) e1]_m|.
    """
    matvec = (lambda x: H @ x)
    w = np.asarray(v, dtype=complex).copy()
    if t == 0:
        return w
    m = min(m, w.size)
    done, tau, steps = 0.0, t, 0
    while done < t - 1e-15 * t:
        tau = min(tau, t - done)
        V, a, b, beta0, k = _lanczos(matvec, w, m)
        T = np.diag(a) + np.diag(b[: k - 1], 1) + np.diag(b[: k - 1], -1)
        while True:
            y = sla.expm(-1j * tau * T)[:, 0]
            invariant = k < m or (k == w.size)
            err = 0.0 if invariant else beta0 * b[k - 1] * abs(y[k - 1])
            if err <= tol * tau / t:
                break
            tau *= 0.5
            steps += 1
            if steps > max_substeps or tau < 1e-14 * t:
                raise KrylovError(f"Krylov step control failed (error {err:.2e})")
        w = beta0 * (V[:k].T @ y)
        done += tau
        steps += 1
        if steps > max_substeps:
            raise KrylovError("too many Krylov substeps")
        tau *= 1.5
    return w


def evolve_manybody(state: BosonicState, H: ManyBodyOperator, t: float, tol: float = 1e-10) -> BosonicState:
    """e^{-itH} psi with norm checked to 1e-9."""
    if state.basis != H.occ:
        raise ValueError("state and Hamiltonian live on different sectors")
    if t < 0:
        raise ValueError("t must be nonnegative")
    w = expm_krylov(H.matrix, state.coefficients, t, tol)
    drift = abs(np.linalg.norm(w) - 1)
    if drift > 1e-9:
        raise KrylovError(f"norm drift {drift:.2e}")
    return BosonicState(state.basis, w / np.linalg.norm(w))


def evolve_trajectory(state: BosonicState, H: ManyBodyOperator, times, tol: float = 1e-10) -> list:
    """[(t, state)] at increasing ``times``, chaining the propagator between samples."""
    out, cur, t_prev = [], state, 0.0
    for t in times:
        if t < t_prev:
            raise ValueError("times must be nondecreasing")
        cur = evolve_manybody(cur, H, t - t_prev, tol)
        out.append((float(t), cur))
        t_prev = t
    return out


def energy_moment(state: BosonicState, H: ManyBodyOperator, k: int = 1) -> float:
    """<psi, H^k psi> for k <= 4."""
    if not 1 <= k <= 4:
        raise ValueError("k must be in 1..4")
    c = state.coefficients
    left = c
    right = c
    for _ in range(k // 2):
        left = H.matrix @ left
    right = left
    if k % 2:
        right = H.matrix @ left
    val = np.vdot(left, right)
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        raise RuntimeError(f"non-real moment {val}")
    return float(val.real)


def chi_cutoff(s):
    """Smooth cutoff: 1 on (-inf, 1], 0 on [2, inf), exp(-1/t) smoothstep between."""
    s = np.asarray(s, dtype=float)

    def f(t):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)

    a, b = f(2.0 - s), f(s - 1.0)
    return np.where(s <= 1, 1.0, np.where(s >= 2, 0.0, a / np.where(a + b > 0, a + b, 1.0)))


def smooth_cutoff(state: BosonicState, H: ManyBodyOperator, kappa: float) -> BosonicState:
    """chi(kappa H / N) psi, renormalized, by dense diagonalization."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if H.dim > DENSE_CAP:
        raise DimensionError(f"dimension {H.dim} above the dense cap {DENSE_CAP}")
    E, U = _dense_eigh(H)
    N = H.occ.N
    c = U @ (chi_cutoff(kappa * E / N) * (U.conj().T @ state.coefficients))
    nrm = np.linalg.norm(c)
    if nrm < 1e-12:
        raise ValueError("cutoff annihilates the state")
    out = BosonicState(state.basis, c / nrm)
    for k in (1, 2):
        if energy_moment(out, H, k) > (2 * N / kappa) ** k * (1 + 1e-10):
            warnings.warn(f"moment bound k={k} violated after smoothing", RuntimeWarning, stacklevel=2)
    return out


_EIGH_CACHE: dict = {}


def _dense_eigh(H: ManyBodyOperator):
    key = id(H.matrix)
    hit = _EIGH_CACHE.get(key)
    if hit is not None and hit[0] is H.matrix:
        return hit[1]
    res = np.linalg.eigh(H.dense())
    _EIGH_CACHE.clear()
    _EIGH_CACHE[key] = (H.matrix, res)
    return res


@dataclass
class EigCertificate:
    value: float
    residual: float
    method: str


def min_eig_certified(op, tol: float = 1e-10, force_iterative: bool = False) -> EigCertificate:
    """Smallest eigenvalue of a Hermitian operator with eigen-residual ||Av - lv||."""
    A = op.matrix if isinstance(op, ManyBodyOperator) else op
    n = A.shape[0]
    if n <= DENSE_EIG_CAP and not force_iterative:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        herm = np.abs(Ad - Ad.conj().T).max()
        if herm > 1e-8 * max(1.0, np.abs(Ad).max()):
            raise ValueError(f"operator not Hermitian (residual {herm:.2e})")
        w, v = np.linalg.eigh(0.5 * (Ad + Ad.conj().T))
        res = np.linalg.norm(Ad @ v[:, 0] - w[0] * v[:, 0])
        return EigCertificate(float(w[0]), float(res), "dense")
    if n < 3:
        raise ValueError("iterative solver needs dimension >= 3")
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(n)
    try:
        w, v = spla.eigsh(A, k=1, which="SA", tol=tol, v0=v0, maxiter=20 * n)
    except spla.ArpackNoConvergence as exc:
        raise RuntimeError(f"Lanczos did not converge: {exc}") from exc
    res = np.linalg.norm(A @ v[:, 0] - w[0] * v[:, 0])
    if res > 1e-6:
        raise RuntimeError(f"Lanczos eigenpair residual {res:.2e} above 1e-6")
    return EigCertificate(float(w[0]), float(res), "lanczos")


def min_eig_symmetric(op, force_iterative: bool = False) -> float:
    return min_eig_certified(op, force_iterative=force_iterative).value


# --- snapshots ------------------------------------------------------------------


def basis_hash(occ: OccupationBasis) -> str:
    return hashlib.sha256(occ.states.astype(np.int64).tobytes()).hexdigest()[:16]


def save_state(state: BosonicState, path) -> None:
    """Binary complex64 coefficients at ``path`` plus ``path``.json header."""
    path = Path(path)
    state.coefficients.astype(np.complex64).tofile(path)
    header = {"D": state.basis.D, "N": state.basis.N, "basis_hash": basis_hash(state.basis)}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(header, sort_keys=True))


def load_state(path) -> BosonicState:
    path = Path(path)
    header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    occ = OccupationBasis(header["D"], header["N"])
    if basis_hash(occ) != header["basis_hash"]:
        raise ValueError("basis hash mismatch")
    c = np.fromfile(path, dtype=np.complex64).astype(complex)
    return BosonicState(occ, c / np.linalg.norm(c))
