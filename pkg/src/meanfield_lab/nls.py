"""Focusing cubic NLS with harmonic trap, Townes profile, and the sharp G-N constant.

    i d_t phi = (-Laplace + omega^2 |x|^2) phi - b0 |phi|^2 phi

Time stepping is Strang split-step Fourier on a uniform periodic grid; the
trap confines the solution, so periodic kinetic steps are harmless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .hermite import GridSpec, HermiteBasis, grid_to_spectral, spectral_to_grid
from .interaction import InteractionSpec


class UnderResolvedError(RuntimeError):
    pass


@dataclass
class Field2D:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        n = self.grid.points_per_axis
        if self.values.shape != (n, n):
            raise ValueError(f"field shape {self.values.shape} does not match grid {n}x{n}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @classmethod
    def from_coefficients(cls, coefficients, basis: HermiteBasis, grid: GridSpec) -> "Field2D":
        return cls(grid, spectral_to_grid(np.asarray(coefficients, dtype=complex), basis, grid))

    def coefficients(self, basis: HermiteBasis) -> np.ndarray:
        return grid_to_spectral(self.values, basis, self.grid)

    def __mul__(self, s):
        return Field2D(self.grid, self.values * s)

    __rmul__ = __mul__


@dataclass(frozen=True)
class NLSParams:
    omega: float = 1.0
    b0: float = 0.0
    dt: float = 1e-3
    t_final: float = 1.0

    def __post_init__(self):
        if self.omega == 0:
            raise ValueError("omega must be nonzero")
        if self.b0 < 0:
            raise ValueError("b0 must be nonnegative (focusing sign is built in)")
        if self.dt <= 0 or self.t_final < 0:
            raise ValueError("dt must be positive and t_final nonnegative")
        if self.t_final > 0 and self.dt > self.t_final:
            raise ValueError("dt exceeds t_final")

    def check_coupling(self, interaction: InteractionSpec) -> None:
        if abs(self.b0 - interaction.b0) > 1e-8:
            raise ValueError(f"b0={self.b0} does not match |int V|={interaction.b0}")


def mass(field: Field2D) -> float:
    return field.grid.integrate(np.abs(field.values) ** 2)


def _kinetic(field: Field2D) -> float:
    g = field.grid
    fk = np.fft.fft2(field.values)
    return float(np.sum(g.k2 * np.abs(fk) ** 2) * g.cell_area / g.points_per_axis ** 2)


def energy_nls(field: Field2D, params: NLSParams) -> float:
    """int |grad phi|^2 + omega^2 |x|^2 |phi|^2 - (b0/2) |phi|^4."""
    g = field.grid
    rho = np.abs(field.values) ** 2
    potential = g.integrate(params.omega ** 2 * g.r2 * rho)
    quartic = g.integrate(rho * rho)
    return _kinetic(field) + potential - 0.5 * params.b0 * quartic


@dataclass
class NLSTrajectory:
    snapshots: list = field(default_factory=list)  # (t, Field2D)
    mass_drift: float = 0.0

    def __iter__(self):
        return iter(self.snapshots)

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    def diagnostics(self, params: NLSParams) -> list[tuple]:
        """Rows (t, mass, energy, max_amplitude) per snapshot."""
        return [
            (t, mass(f), energy_nls(f, params), float(np.abs(f.values).max()))
            for t, f in self.snapshots
        ]


def _step_counts(params: NLSParams, times) -> list[int]:
    total = int(round(params.t_final / params.dt))
    if abs(total * params.dt - params.t_final) > 1e-9 * max(1.0, params.t_final):
        raise ValueError("t_final must be an integer multiple of dt")
    if times is None:
        return sorted({0, total})
    counts = []
    for t in times:
        k = int(round(t / params.dt))
        if abs(k * params.dt - t) > 1e-9 * max(1.0, t) or k > total:
            raise ValueError(f"snapshot time {t} is not a step multiple within [0, t_final]")
        counts.append(k)
    return sorted(set(counts))


def evolve_nls(initial: Field2D, params: NLSParams, times=None) -> NLSTrajectory:
    """Strang split-step evolution; snapshots at ``times`` (default: start and end).

    Raises UnderResolvedError when the mass drifts by more than 1e-6.
    """
    m0 = mass(initial)
    if abs(m0 - 1.0) > 1e-8:
        raise ValueError(f"initial field is not normalized (mass {m0})")
    g = initial.grid
    dt = params.dt
    half_trap = np.exp(-0.5j * dt * params.omega ** 2 * g.r2)
    kinetic = np.exp(-1j * dt * g.k2)
    coupling = 0.5 * dt * params.b0
    save = _step_counts(params, times)
    psi = initial.values.copy()
    traj = NLSTrajectory()
    step = 0
    for target in save:
        while step < target:
            psi *= half_trap
            if coupling:
                psi *= np.exp(1j * coupling * np.abs(psi) ** 2)
            psi = np.fft.ifft2(kinetic * np.fft.fft2(psi))
            psi *= half_trap
            if coupling:
                psi *= np.exp(1j * coupling * np.abs(psi) ** 2)
            step += 1
        if not np.all(np.isfinite(psi)):
            raise UnderResolvedError(f"non-finite field at t={step * dt}")
        snap = Field2D(g, psi.copy())
        drift = abs(mass(snap) - m0)
        traj.mass_drift = max(traj.mass_drift, drift)
        if drift > 1e-6:
            raise UnderResolvedError(f"under-resolved evolution: mass drift {drift:.2e} at t={step * dt}")
        traj.snapshots.append((step * dt, snap))
    return traj


# --- Townes profile ---------------------------------------------------------


@dataclass
class RadialProfile:
    r_nodes: np.ndarray
    q_values: np.ndarray
    mass: float
    q0: float
    residual: float

    def __call__(self, r):
        """Profile value at radius r; exponential K0 tail beyond the last node."""
        r = np.asarray(r, dtype=float)
        inner = np.interp(r, self.r_nodes, self.q_values)
        rc, qc = self.r_nodes[-1], self.q_values[-1]
        tail = qc * special.k0(np.maximum(r, rc)) / special.k0(rc)
        return np.where(r <= rc, inner, tail)


def _townes_rhs(r, y):
    q, dq = y[0], y[1]
    return [dq, -dq / r + q - q ** 3, q * q * r]


def _start(q0: float, r0: float):
    f = q0 - q0 ** 3
    fp = 1 - 3 * q0 ** 2
    # third component accumulates int Q^2 r dr, seeded with the part on [0, r0]
    return [q0 + f * r0 ** 2 / 4 + fp * f * r0 ** 4 / 64, f * r0 / 2 + fp * f * r0 ** 3 / 16,
            q0 * q0 * r0 ** 2 / 2 + q0 * f * r0 ** 4 / 8]


def _crossing(r, y):
    return y[0]


_crossing.terminal = True
_crossing.direction = -1


def _turning(r, y):
    return y[1]


_turning.terminal = True
_turning.direction = 1

_R0 = 1e-3


def shoot_townes(q0: float, r_max: float = 30.0, t_eval=None):
    """Integrate Q'' + Q'/r - Q + Q^3 = 0 from Q(0)=q0; returns (solution, overshoot flag).

    Overshoot: Q crosses zero. Undershoot: Q' turns positive while Q > 0.
    """
    sol = integrate.solve_ivp(
        _townes_rhs, (_R0, r_max), _start(q0, _R0), method="DOP853",
        rtol=1e-13, atol=1e-15, events=[_crossing, _turning], t_eval=t_eval,
    )
    return sol, len(sol.t_events[0]) > 0


def _fd_residual(r, q, h):
    d1 = (-q[4:] + 8 * q[3:-1] - 8 * q[1:-3] + q[:-4]) / (12 * h)
    d2 = (-q[4:] + 16 * q[3:-1] - 30 * q[2:-2] + 16 * q[1:-3] - q[:-4]) / (12 * h * h)
    rr, qq = r[2:-2], q[2:-2]
    return d2 + d1 / rr - qq + qq ** 3


def townes_profile(tolerance: float = 1e-12, bracket=(1.5, 3.0), h: float = 0.005) -> RadialProfile:
    """Positive radial ground state of Laplace Q - Q + Q^3 = 0 by bisection shooting.

    The profile is kept up to the radius where the two bracketing solutions
    separate by 1% of Q; beyond it Q is continued by its K0 asymptote.
    """
    if tolerance < 1e-12:
        raise ValueError("tolerance must be at least 1e-12")
    lo, hi = bracket
    if shoot_townes(lo)[1] or not shoot_townes(hi)[1]:
        raise RuntimeError("shooting bracket not found")
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if shoot_townes(mid)[1]:
            hi = mid
        else:
            lo = mid
    r_grid = _R0 + h * np.arange(int(30.0 / h))
    sol_lo, _ = shoot_townes(lo, t_eval=r_grid)
    sol_hi, _ = shoot_townes(hi, t_eval=r_grid)
    n = min(sol_lo.t.size, sol_hi.t.size)
    q_lo, q_hi = sol_lo.y[0, :n], sol_hi.y[0, :n]
    sep = np.abs(q_hi - q_lo) > 1e-2 * np.abs(q_lo)
    cut = int(np.argmax(sep)) if sep.any() else n
    cut -= 1
    r = sol_lo.t[:cut]
    q = 0.5 * (q_lo[:cut] + q_hi[:cut])
    inner_mass = 2 * np.pi * 0.5 * (sol_lo.y[2, cut - 1] + sol_hi.y[2, cut - 1])
    # tail: Q(r) ~ c K0(r) matched at the cut radius
    rc, qc = r[-1], q[-1]
    c = qc / special.k0(rc)
    tail, _ = integrate.quad(lambda s: (c * special.k0(s)) ** 2 * s, rc, np.inf, epsabs=1e-16)
    total = inner_mass + 2 * np.pi * tail
    residual = float(np.max(np.abs(_fd_residual(r, q, h)[10:])))
    return RadialProfile(r, q, float(total), 0.5 * (lo + hi), residual)


@lru_cache(maxsize=1)
def _default_townes() -> RadialProfile:
    return townes_profile()


def gn_constant(cross_validate: bool = False, seed: int = 0, restarts: int = 3) -> float:
    """Sharp 2D Gagliardo-Nirenberg constant C_gn = (2 / ||Q||_2^2)^{1/4}.

    With ``cross_validate`` the value is checked against direct maximization of
    the Weinstein quotient; a maximum above C_gn^4 by more than 0.1% is an error.
    """
    C4 = 2.0 / _default_townes().mass
    if cross_validate:
        best = maximize_gn_quotient(seed=seed, restarts=restarts).best
        if best > C4 * (1 + 1e-3):
            raise RuntimeError(f"inconsistent G-N constant: quotient {best} exceeds {C4}")
    return C4 ** 0.25


def townes_mass() -> float:
    return _default_townes().mass


def gn_functional(field: Field2D) -> float:
    """Weinstein quotient ||phi||_4^4 / (||phi||_2^2 ||grad phi||_2^2)."""
    g = field.grid
    rho = np.abs(field.values) ** 2
    m = g.integrate(rho)
    if m == 0:
        raise ValueError("zero field")
    return g.integrate(rho * rho) / (m * _kinetic(field))


@dataclass
class QuotientSearch:
    best: float
    values: list
    best_field: Field2D


def maximize_gn_quotient(
    seed: int = 0, restarts: int = 3, grid: GridSpec | None = None, basis_cutoff: float = 44.0,
    maxiter: int = 2000,
) -> QuotientSearch:
    """Gradient ascent of the Weinstein quotient from random smooth real fields.

    Fields are Hermite expansions (frequency 1/2, shell cutoff ``basis_cutoff``),
    so every iterate is smooth and resolved; the ascent runs in coefficient space.
    """
    rng = np.random.default_rng(seed)
    basis = HermiteBasis(0.5, basis_cutoff)
    grid = grid or GridSpec(18.0, 224)
    k2 = grid.k2
    n = grid.points_per_axis
    dA = grid.cell_area

    def negq(c):
        f = spectral_to_grid(c, basis, grid)
        f2 = f * f
        m, q4 = f2.sum() * dA, (f2 * f2).sum() * dA
        fk = np.fft.fft2(f)
        lap = np.fft.ifft2(k2 * fk).real  # -Laplace f
        kin = (f * lap).sum() * dA
        val = q4 / (m * kin)
        grad_grid = val * (4 * f2 * f / q4 - 2 * f / m - 2 * lap / kin)
        return -val, -grid_to_spectral(grad_grid, basis, grid)

    values, best, best_c = [], -np.inf, None
    for _ in range(restarts):
        c0 = rng.standard_normal(basis.size) * np.exp(-0.15 * (basis.n1 + basis.n2))
        res = optimize.minimize(negq, c0, jac=True, method="L-BFGS-B",
                                options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-10})
        values.append(-res.fun)
        if -res.fun > best:
            best, best_c = -res.fun, res.x
    f = spectral_to_grid(best_c, basis, grid)
    f = f / math.sqrt(grid.integrate(f * f))
    return QuotientSearch(float(best), values, Field2D(grid, f))


def threshold_L1(alpha: float) -> float:
    """Admissible coupling bound 2 alpha / C_gn^4 on ||V||_1."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return 2 * alpha / gn_constant() ** 4


def pinned_epsilon(alpha: float, l1: float, kmax: int = 60) -> float:
    """Largest eps in {2^-k, k>=1} with (1 + 2 eps^2) C_gn^4 ||V||_1 <= 2 alpha."""
    C4 = gn_constant() ** 4
    for k in range(1, kmax + 1):
        eps = 2.0 ** -k
        if (1 + 2 * eps * eps) * C4 * l1 <= 2 * alpha:
            return eps
    raise ValueError(f"||V||_1={l1} is not below the threshold {threshold_L1(alpha)}")


def pair_energy(field: Field2D, interaction: InteractionSpec, absolute: bool = False) -> float:
    """int (V_N * |phi|^2) |phi|^2 by Fourier convolution (|V_N| if ``absolute``)."""
    g = field.grid
    rho = np.abs(field.values) ** 2
    rk = np.fft.fft2(rho) * g.cell_area
    vk = interaction.fourier_V_N(g.k2)
    if absolute:
        vk = np.abs(vk)
    return float(np.sum(vk * np.abs(rk) ** 2).real / (4 * g.half_width ** 2))


def hartree_energy(phi: Field2D, interaction: InteractionSpec, alpha: float, epsilon: float,
                   omega: float) -> float:
    """<phi phi, H^eps_{12,alpha} phi phi> for normalized phi."""
    if abs(mass(phi) - 1) > 1e-8:
        raise ValueError("phi must be normalized")
    g = phi.grid
    s2 = _kinetic(phi) + g.integrate(omega ** 2 * g.r2 * np.abs(phi.values) ** 2)
    N = interaction.N
    return (2 * alpha * s2 + (N - 1) / N * pair_energy(phi, interaction)
            - 2 * epsilon ** 2 * pair_energy(phi, interaction, absolute=True))
