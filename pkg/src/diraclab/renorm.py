"""Renormalization between the 2-spinor and 4-spinor pictures.

Going relativistic, the occupied orbitals u_n are lifted to (u_n, L u_n / 2c)
and re-orthonormalized through the overlap matrix

    S = 1 + (1/4c^2) S_tilde,      S_tilde_mn = <L u_m, L u_n>.

Going nonrelativistic, the large components of a filled-shell 4-spinor state
are kept and re-orthonormalized through

    S = 1 - (1/4c^2) S_tilde,      S_tilde_mn = 4c^2 <u^S_m, u^S_n>.

In both directions the exact construction contracts the lifted orbitals
against S^{-1} (a rank-q projector); the first-order construction replaces
S^{-1} by 1 -/+ S_tilde / 4c^2, and the inverse-expansion residual
|| S^{-1} - (1 -/+ S_tilde/4c^2) ||_S1 decays like c^{-4}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityMatrix, sandwiched_gram
from .lattice import Lattice
from .operators import pauli_dot_k

__all__ = ["OverlapPack", "renormalize", "expansion_residual"]

TO_RELATIVISTIC = "to_relativistic"
TO_NONRELATIVISTIC = "to_nonrelativistic"


@dataclass
class OverlapPack:
    direction: str
    c: float
    s_tilde: np.ndarray

    @property
    def sign(self) -> float:
        return +1.0 if self.direction == TO_RELATIVISTIC else -1.0

    @property
    def overlap(self) -> np.ndarray:
        q = self.s_tilde.shape[0]
        return np.eye(q) + self.sign * self.s_tilde / (4.0 * self.c**2)

    def first_order_inverse(self) -> np.ndarray:
        q = self.s_tilde.shape[0]
        return np.eye(q) - self.sign * self.s_tilde / (4.0 * self.c**2)

    def inverse(self) -> np.ndarray:
        s = self.overlap
        evals = np.linalg.eigvalsh(s)
        if evals.min() <= 1e-12:
            raise ValueError(
                f"overlap matrix is singular (min eigenvalue {evals.min():.3e}); c too small"
            )
        return np.linalg.inv(s)

    def inverse_spectrum(self) -> np.ndarray:
        return np.sort(np.linalg.eigvalsh(self.inverse()))

    def diagonal_dominance_bounds(self) -> tuple[float, float]:
        """[1 - 2 maxdiag / 4c^2, 1 + 2 maxdiag / 4c^2] bracketing spec(S^-1)."""
        peak = float(np.max(np.abs(np.diagonal(self.s_tilde)))) if self.s_tilde.size else 0.0
        shift = 2.0 * peak / (4.0 * self.c**2)
        return 1.0 - shift, 1.0 + shift


def _pauli_gradient_stack(lattice: Lattice, orbitals: np.ndarray) -> np.ndarray:
    hats = np.fft.fftn(orbitals, axes=(-3, -2, -1))
    out = np.stack([pauli_dot_k(lattice, h) for h in hats])
    return np.fft.ifftn(out, axes=(-3, -2, -1))


def _check_filled(dm: DensityMatrix):
    if dm.rank == 0:
        raise ValueError("cannot renormalize an empty density matrix")
    if np.max(np.abs(dm.occupations - 1.0)) > 1e-8:
        raise ValueError("renormalization requires integer occupations")


def renormalize(dm: DensityMatrix, c: float, direction: str):
    """Exact and first-order renormalized density matrices plus the overlap data.

    Returns (gamma_exact, gamma_first_order, pack). The exact state is a rank-q
    projector built by the Loewdin factor of the lifted orbital set, operator
    identical to the S^{-1} contraction.
    """
    _check_filled(dm)
    lattice = dm.lattice
    if direction == TO_RELATIVISTIC:
        if dm.components != 2:
            raise ValueError("to_relativistic expects a 2-spinor state")
        grads = _pauli_gradient_stack(lattice, dm.orbitals)
        flat = grads.reshape(dm.rank, -1)
        s_tilde = lattice.cell_volume * (flat.conj() @ flat.T)
        basis = np.concatenate([dm.orbitals, grads / (2.0 * c)], axis=1)
    elif direction == TO_NONRELATIVISTIC:
        if dm.components != 4:
            raise ValueError("to_nonrelativistic expects a 4-spinor state")
        small = dm.orbitals[:, 2:]
        flat = small.reshape(dm.rank, -1)
        s_tilde = 4.0 * c**2 * lattice.cell_volume * (flat.conj() @ flat.T)
        basis = dm.orbitals[:, :2].copy()
    else:
        raise ValueError(f"unknown renormalization direction {direction!r}")

    s_tilde = (s_tilde + s_tilde.conj().T) / 2.0
    pack = OverlapPack(direction=direction, c=float(c), s_tilde=s_tilde)
    inv = pack.inverse()

    gamma_exact = DensityMatrix.from_operator_basis(
        lattice, basis, inv, occupation_tol=1e-9, clip_occupations=True
    )
    gamma_first = DensityMatrix.from_operator_basis(
        lattice, basis, pack.first_order_inverse(), occupation_tol=1e-5, clip_occupations=True
    )
    return gamma_exact, gamma_first, pack


def expansion_residual(pack: OverlapPack) -> float:
    """Trace norm of S^{-1} - (1 -/+ S_tilde / 4c^2) on C^q."""
    diff = pack.inverse() - pack.first_order_inverse()
    return float(np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2.0))))
