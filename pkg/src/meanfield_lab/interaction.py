"""Pair potentials V and their scaled versions V_N(x) = N^{2 beta} V(N^beta x)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np

from .hermite import HermiteBasis, gaussian_pair_tensor, pair_matrix_from_axis

PROFILES = ("gaussian", "repulsive_gaussian", "zero")


@dataclass(frozen=True)
class InteractionSpec:
    """Gaussian pair interaction V(x) = -lam * exp(-|x|^2) scaled with (beta, N).

    ``repulsive_gaussian`` flips the sign (test potential only); ``zero`` is V = 0.
    """

    lam: float = 1.0
    beta: float = 0.1
    N: int = 2
    profile: str = "gaussian"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative; use profile='repulsive_gaussian' for V >= 0")
        if self.beta > 1 / 6:
            warnings.warn(f"beta={self.beta} is outside (0, 1/6)", stacklevel=3)

    @classmethod
    def from_l1(cls, l1: float, beta: float = 0.1, N: int = 2) -> "InteractionSpec":
        """Attractive Gaussian with prescribed ||V||_1 (= lam * pi)."""
        if l1 == 0:
            return cls(0.0, beta, N, "zero")
        return cls(l1 / np.pi, beta, N, "gaussian")

    def with_N(self, N: int) -> "InteractionSpec":
        return InteractionSpec(self.lam, self.beta, N, self.profile)

    @property
    def sign(self) -> float:
        return {"gaussian": -1.0, "repulsive_gaussian": 1.0, "zero": 0.0}[self.profile]

    @property
    def amplitude(self) -> float:
        """V(0)."""
        return self.sign * self.lam

    @property
    def scale(self) -> float:
        """N^beta."""
        return float(self.N) ** self.beta

    @property
    def kappa(self) -> float:
        """Exponent of the scaled Gaussian: V_N(x) = N^{2beta} V(0) e^{-kappa |x|^2}."""
        return self.scale ** 2

    @property
    def l1_norm(self) -> float:
        return abs(self.amplitude) * np.pi

    @property
    def sup_norm(self) -> float:
        return abs(self.amplitude)

    @property
    def b0(self) -> float:
        """Coupling |int V| of the limiting NLS."""
        return abs(self.integral)

    @property
    def integral(self) -> float:
        return self.amplitude * np.pi

    def V(self, r2):
        return self.amplitude * np.exp(-np.asarray(r2))

    def V_N(self, r2):
        return self.kappa * self.amplitude * np.exp(-self.kappa * np.asarray(r2))

    def fourier_V_N(self, k2):
        """Continuous Fourier transform int V_N(x) e^{-ik.x} dx."""
        return self.amplitude * np.pi * np.exp(-np.asarray(k2) / (4 * self.kappa))

    def check(self, n: int = 801, half_width: float = 10.0) -> None:
        """Sample-based checks: evenness, sign, decay, and the scaling identity ||V_N||_1 = ||V||_1."""
        x = np.linspace(-half_width, half_width, n)
        X, Y = np.meshgrid(x, x, indexing="ij")
        r2 = X * X + Y * Y
        v = self.V(r2)
        if not np.allclose(v, v[::-1, ::-1]):
            raise ValueError("V is not even")
        if self.profile == "gaussian" and np.any(v > 0):
            raise ValueError("V must be nonpositive")
        if abs(v[0, 0]) > 1e-12 * max(self.sup_norm, 1):
            raise ValueError("V does not decay inside the sampling box")
        h = x[1] - x[0]
        l1 = np.abs(v).sum() * h * h
        # V_N is narrower by N^beta; sample it on a proportionally finer box
        xs = x / self.scale
        Xs, Ys = np.meshgrid(xs, xs, indexing="ij")
        l1N = np.abs(self.V_N(Xs * Xs + Ys * Ys)).sum() * (h / self.scale) ** 2
        if abs(l1 - self.l1_norm) > 1e-8 * max(1.0, self.l1_norm) or abs(l1N - l1) > 1e-8 * max(1.0, l1):
            raise ValueError(f"L1 scaling identity violated: {l1}, {l1N}, {self.l1_norm}")

    def pair_matrix(self, basis: HermiteBasis, absolute: bool = False) -> np.ndarray:
        """Two-particle matrix W[(p,q),(r,s)] = <phi_p phi_q | V_N(x1-x2) | phi_r phi_s>.

        With ``absolute`` the multiplication operator is |V_N| instead.
        """
        D = basis.size
        if self.profile == "zero":
            return np.zeros((D * D, D * D))
        T = _pair_tensor(basis.max_degree, basis.omega, self.kappa)
        amp = abs(self.amplitude) if absolute else self.amplitude
        return self.kappa * amp * pair_matrix_from_axis(basis, T)

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=64)
def _pair_tensor(nmax: int, omega: float, kappa: float) -> np.ndarray:
    T = gaussian_pair_tensor(nmax, omega, kappa)
    T.setflags(write=False)
    return T
