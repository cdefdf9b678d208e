"""Physical configuration and the derived admissibility constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .coulomb import NuclearModel
from .lattice import Lattice

__all__ = ["ModelParams", "ScfSettings"]


@dataclass(frozen=True)
class ModelParams:
    """Speed of light, electron count, nucleus and lattice, plus derived constants.

    kappa_c   = 2 (q + z) / c
    lambda_0c = 1 - max(q, z) / c
    a_c       = pi / (4 c sqrt((1 - kappa_c) lambda_0c))

    kappa_c < 1 is required by every Dirac-side routine; q <= z is expected for
    the ground-state experiments and only flagged, not enforced.
    """

    c: float
    q: float
    nuclear: NuclearModel
    lattice: Lattice

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.q <= 0:
            raise ValueError("electron count q must be positive")

    @property
    def z(self) -> float:
        return self.nuclear.total_charge

    @property
    def kappa_c(self) -> float:
        return 2.0 * (self.q + self.z) / self.c

    @property
    def lambda_0c(self) -> float:
        return 1.0 - max(self.q, self.z) / self.c

    @property
    def a_c(self) -> float:
        k, lam = self.kappa_c, self.lambda_0c
        if k >= 1 or lam <= 0:
            raise ValueError(f"a_c undefined: kappa_c={k:.3f}, lambda_0c={lam:.3f}")
        return math.pi / (4.0 * self.c * math.sqrt((1.0 - k) * lam))

    @property
    def r_df(self) -> float:
        """Minimizer-containing radius (1 - kappa_c - pi q / 4c)^(-1/2) q + 1."""
        base = 1.0 - self.kappa_c - 0.25 * math.pi * self.q / self.c
        if base <= 0:
            raise ValueError("r_df undefined at this c")
        return self.q / math.sqrt(base) + 1.0

    def contraction_factor(self, radius: float) -> float:
        """L_c = 2 a_c R."""
        return 2.0 * self.a_c * radius

    def amplification_constant(self, radius: float) -> float:
        """A_c = max(1 / (1 - 2 a_c R), (2 + a_c q) / 2); needs 2 a_c R < 1."""
        lc = self.contraction_factor(radius)
        if lc >= 1:
            raise ValueError(f"2 a_c R = {lc:.3f} >= 1: outside the contraction regime")
        return max(1.0 / (1.0 - lc), (2.0 + self.a_c * self.q) / 2.0)

    def admissible_heavy_regime(self) -> bool:
        """Whether kappa_c < 1 - pi q / 4c and r_df < 1 / (2 a_c) both hold."""
        try:
            return (
                self.kappa_c < 1.0 - 0.25 * math.pi * self.q / self.c
                and self.r_df < 1.0 / (2.0 * self.a_c)
            )
        except ValueError:
            return False

    def r_zero(self, hf_x2_norm: float) -> float:
        """Radius max{2 + 4q, 1 + ||g||_X2 + 4 (pi + 2 sqrt(2) z)(1 + ||g||_X2)^2}."""
        x2 = float(hf_x2_norm)
        return max(
            2.0 + 4.0 * self.q,
            1.0 + x2 + 4.0 * (math.pi + 2.0 * math.sqrt(2.0) * self.z) * (1.0 + x2) ** 2,
        )

    def large_c_condition(self, r_zero: float) -> bool:
        """c >= max{1, 4q + 4z, 4 pi R_0}: the asymptotic regime of the bounds."""
        return self.c >= max(1.0, 4.0 * (self.q + self.z), 4.0 * math.pi * r_zero)

    def flags(self) -> dict:
        return {
            "kappa_c": self.kappa_c,
            "lambda_0c": self.lambda_0c,
            "a_c": self.a_c if self.kappa_c < 1 else math.nan,
            "kappa_lt_1": self.kappa_c < 1,
            "q_le_z": self.q <= self.z,
            "hf_existence_margin": self.q <= self.z - 1,
        }


@dataclass(frozen=True)
class ScfSettings:
    """Fixed-point iteration controls shared by the HF and DF solvers."""

    tol_energy: float = 1e-10
    tol_density: float = 1e-8
    damping: float = 0.5
    max_iter: int = 200
    degeneracy_tol: float | None = None
    n_extra_states: int = 6
    eigensolver: str = "auto"  # auto | dense | lobpcg

    def __post_init__(self):
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
