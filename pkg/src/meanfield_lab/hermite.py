"""2D harmonic-oscillator (Hermite) single-particle basis.

Modes are eigenfunctions of ``S^2 = -Laplace + omega^2 |x|^2`` on R^2,
phi_{n1,n2}(x, y) = h_{n1}(x) h_{n2}(y), with eigenvalue 2*omega*(n1+n2+1).
The basis is truncated by an S^2-eigenvalue shell, so spectral projectors
onto ``S <= M`` are exact masks over the mode list.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

PI_QUARTER = np.pi ** -0.25


@dataclass(frozen=True, order=True)
class Mode2D:
    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0:
            raise ValueError(f"quantum numbers must be nonnegative, got {self}")

    @property
    def degree(self) -> int:
        return self.n1 + self.n2


def mode_eigenvalue(mode: Mode2D, omega: float) -> float:
    """Eigenvalue of S^2 for ``mode``: 2|omega|(n1 + n2 + 1)."""
    return 2.0 * abs(omega) * (mode.n1 + mode.n2 + 1)


def enumerate_modes(omega: float, cutoff_energy: float) -> list[Mode2D]:
    """All modes with S^2 eigenvalue <= cutoff_energy, graded-lex ordered.

    Ordering is by total degree n1+n2, then by n1 ascending.
    """
    omega = abs(omega)
    if omega == 0:
        raise ValueError("omega must be nonzero")
    if cutoff_energy < 2 * omega:
        raise ValueError(
            f"invalid cutoff {cutoff_energy}: below the ground energy {2 * omega}"
        )
    max_degree = int(math.floor(cutoff_energy / (2 * omega) + 1e-12)) - 1
    return [Mode2D(n1, d - n1) for d in range(max_degree + 1) for n1 in range(d + 1)]


def dim_leq(omega: float, M: float) -> int:
    """D_M: number of modes whose S^2 eigenvalue is <= M^2."""
    omega = abs(omega)
    top = int(math.floor(M * M / (2 * omega) + 1e-12)) - 1  # largest admissible degree
    if top < 0:
        return 0
    return (top + 1) * (top + 2) // 2


def hermite_functions(nmax: int, xi) -> np.ndarray:
    """Normalized Hermite functions psi_0..psi_nmax at ``xi`` (unit frequency).

    Uses the normalized three-term recurrence, so no factorials appear.
    Returns an array of shape (nmax + 1, *xi.shape).
    """
    xi = np.asarray(xi, dtype=float)
    out = np.empty((nmax + 1,) + xi.shape)
    out[0] = PI_QUARTER * np.exp(-0.5 * xi * xi)
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for n in range(1, nmax):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * xi * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_polynomial_part(nmax: int, xi) -> np.ndarray:
    """psi_n(xi) * exp(xi^2 / 2): the polynomial factor of each Hermite function.

    Paired with Gauss-Hermite weights this integrates products exactly.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.empty((nmax + 1,) + xi.shape)
    out[0] = PI_QUARTER
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * xi * PI_QUARTER
    for n in range(1, nmax):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * xi * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def axis_functions(nmax: int, x, omega: float) -> np.ndarray:
    """1D eigenfunctions of -d^2/dx^2 + omega^2 x^2: omega^{1/4} psi_n(sqrt(omega) x)."""
    omega = abs(omega)
    return omega ** 0.25 * hermite_functions(nmax, np.sqrt(omega) * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class HermiteBasis:
    """Truncated 2D Hermite basis with exact per-axis Gauss-Hermite quadrature."""

    omega: float
    cutoff_energy: float
    modes: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "omega", abs(float(self.omega)))
        enumerated = tuple(enumerate_modes(self.omega, self.cutoff_energy))
        if self.modes is None:
            object.__setattr__(self, "modes", enumerated)
        else:
            modes = tuple(Mode2D(*m) if not isinstance(m, Mode2D) else m for m in self.modes)
            if modes != enumerated:
                raise ValueError("mode list does not match the cutoff shell")
            object.__setattr__(self, "modes", modes)

    def __len__(self):
        return len(self.modes)

    @property
    def size(self) -> int:
        return len(self.modes)

    @cached_property
    def max_degree(self) -> int:
        return max(m.degree for m in self.modes)

    @cached_property
    def n1(self) -> np.ndarray:
        return np.array([m.n1 for m in self.modes])

    @cached_property
    def n2(self) -> np.ndarray:
        return np.array([m.n2 for m in self.modes])

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return 2.0 * self.omega * (self.n1 + self.n2 + 1).astype(float)

    @cached_property
    def index(self) -> dict:
        return {m: i for i, m in enumerate(self.modes)}

    @cached_property
    def quadrature_order(self) -> int:
        return 2 * self.max_degree + 8

    @cached_property
    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis nodes (in x, rescaled by omega^{-1/2}) and raw Gauss-Hermite weights."""
        xi, w = np.polynomial.hermite.hermgauss(self.quadrature_order)
        return xi / np.sqrt(self.omega), w

    def gram(self) -> np.ndarray:
        """Gram matrix of the 2D modes under the tensor Gauss-Hermite rule."""
        xi, w = np.polynomial.hermite.hermgauss(self.quadrature_order)
        p = hermite_polynomial_part(self.max_degree, xi)
        g1 = (p * w) @ p.T  # 1D gram, exact
        return g1[np.ix_(self.n1, self.n1)] * g1[np.ix_(self.n2, self.n2)]

    def eval_modes(self, points) -> np.ndarray:
        """Mode values at 2D points; returns an array of shape (modes, points)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        fx = axis_functions(self.max_degree, pts[:, 0], self.omega)
        fy = axis_functions(self.max_degree, pts[:, 1], self.omega)
        return fx[self.n1] * fy[self.n2]

    def projector_leq(self, M: float) -> np.ndarray:
        """0/1 mask selecting modes with S^2 eigenvalue <= M^2."""
        return (self.eigenvalues <= M * M * (1 + 1e-12)).astype(float)

    def apply_S_power(self, coefficients, p: float) -> np.ndarray:
        """Apply S^p = (S^2)^{p/2} to a coefficient array (mode axis first)."""
        if p < -2:
            raise ValueError("powers below -2 are not supported")
        c = np.asarray(coefficients)
        scale = self.eigenvalues ** (p / 2.0)
        return c * scale.reshape((-1,) + (1,) * (c.ndim - 1))

    def to_json(self) -> str:
        return json.dumps(
            {
                "omega": self.omega,
                "cutoff_energy": self.cutoff_energy,
                "modes": [[m.n1, m.n2] for m in self.modes],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "HermiteBasis":
        d = json.loads(text)
        return cls(d["omega"], d["cutoff_energy"], tuple(Mode2D(*m) for m in d["modes"]))


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-L, L)^2 with ``points_per_axis`` points per axis."""

    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.points_per_axis < 16 or self.points_per_axis % 2:
            raise ValueError("points_per_axis must be an even integer >= 16")

    @classmethod
    def default(cls, omega: float, points_per_axis: int = 256) -> "GridSpec":
        return cls(8.0 / np.sqrt(abs(omega)), points_per_axis)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.points_per_axis)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    @cached_property
    def r2(self) -> np.ndarray:
        X, Y = self.mesh
        return X * X + Y * Y

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.spacing)

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky = np.meshgrid(self.wavenumbers, self.wavenumbers, indexing="ij")
        return kx * kx + ky * ky

    def integrate(self, values) -> float:
        return float(np.sum(values).real * self.cell_area)


_AXIS_CACHE: dict = {}


def axis_matrix(basis: HermiteBasis, grid: GridSpec) -> np.ndarray:
    """1D mode functions sampled on the grid axis, checked for resolution.

    Every 1D function must have discrete norm 1 within 1e-10, which fails both
    when the box clips a mode's tail and when the spacing aliases it.
    """
    key = (basis.omega, basis.max_degree, grid.half_width, grid.points_per_axis)
    A = _AXIS_CACHE.get(key)
    if A is None:
        A = axis_functions(basis.max_degree, grid.axis, basis.omega)
        norms = (A * A).sum(axis=1) * grid.spacing
        bad = np.abs(norms - 1.0) > 1e-10
        if bad.any():
            raise ValueError(
                f"grid (L={grid.half_width}, n={grid.points_per_axis}) does not resolve "
                f"Hermite degree {int(np.argmax(bad))}; worst norm error "
                f"{np.max(np.abs(norms - 1.0)):.2e}"
            )
        _AXIS_CACHE[key] = A
    return A


def grid_to_spectral(values, basis: HermiteBasis, grid: GridSpec) -> np.ndarray:
    """Project grid values onto the basis modes (grid-quadrature inner products)."""
    A = axis_matrix(basis, grid)
    C = A @ np.asarray(values) @ A.T * grid.cell_area
    return C[basis.n1, basis.n2]


def spectral_to_grid(coefficients, basis: HermiteBasis, grid: GridSpec) -> np.ndarray:
    A = axis_matrix(basis, grid)
    c = np.asarray(coefficients)
    C = np.zeros((basis.max_degree + 1,) * 2, dtype=c.dtype)
    C[basis.n1, basis.n2] = c
    return A.T @ C @ A


def gaussian_pair_tensor(nmax: int, omega: float, kappa: float) -> np.ndarray:
    """1D pair integrals T[a,b,c,d] = int h_a(x1) h_b(x2) h_c(x1) h_d(x2) e^{-kappa (x1-x2)^2}.

    In rotated coordinates u=(x1-x2)/sqrt2, v=(x1+x2)/sqrt2 the integrand is a
    polynomial times e^{-(1+2kappa/omega)u^2 - v^2}, so a Gauss-Hermite rule of
    order 2*nmax+2 per axis is exact for any kappa >= 0.
    """
    omega = abs(omega)
    q = 2 * nmax + 2
    t, w = np.polynomial.hermite.hermgauss(q)
    a_u = 1.0 + 2.0 * kappa / omega
    u = t / np.sqrt(a_u)
    U, Vv = np.meshgrid(u, t, indexing="ij")
    weights = np.outer(w / np.sqrt(a_u), w).ravel()
    xi1 = ((Vv + U) / np.sqrt(2)).ravel()
    xi2 = ((Vv - U) / np.sqrt(2)).ravel()
    p1 = hermite_polynomial_part(nmax, xi1)
    p2 = hermite_polynomial_part(nmax, xi2)
    n = nmax + 1
    X = (p1[:, None, :] * p1[None, :, :]).reshape(n * n, -1)  # (a,c)
    Y = (p2[:, None, :] * p2[None, :, :]).reshape(n * n, -1)  # (b,d)
    T = (X * weights) @ Y.T  # [(a,c),(b,d)]
    return T.reshape(n, n, n, n).transpose(0, 2, 1, 3)


def contact_tensor(nmax: int, omega: float) -> np.ndarray:
    """1D contact integrals int h_a h_b h_c h_d dx (kernel of delta(x1 - x2))."""
    omega = abs(omega)
    q = 2 * nmax + 2
    t, w = np.polynomial.hermite.hermgauss(q)
    # product of four functions carries e^{-2 xi^2}; substitute xi = t / sqrt2
    p = hermite_polynomial_part(nmax, t / np.sqrt(2))
    weights = w / np.sqrt(2) * np.sqrt(omega)
    return np.einsum("ak,bk,ck,dk,k->abcd", p, p, p, p, weights)


def pair_matrix_from_axis(basis: HermiteBasis, Tx: np.ndarray, Ty: np.ndarray | None = None) -> np.ndarray:
    """Assemble the D^2 x D^2 two-particle matrix <pq|K|rs> from separable 1D tensors."""
    Ty = Tx if Ty is None else Ty
    a, b = basis.n1, basis.n2
    D = basis.size
    Kx = Tx[np.ix_(a, a, a, a)]
    Ky = Ty[np.ix_(b, b, b, b)]
    return (Kx * Ky).reshape(D * D, D * D)
