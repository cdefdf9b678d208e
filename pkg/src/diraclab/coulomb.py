"""Periodic Coulomb machinery: nuclear attraction and the electron mean field.

The interaction kernel is the periodized 1/|x| with multiplier 4*pi/|k|^2 and
the k=0 coefficient set to zero (neutralizing background). The nucleus is a
normalized Gaussian charge distribution of total charge z centered at the box
midpoint, so the attraction V = mu * 1/|x| is smooth and all its derivatives
are exact Fourier expressions. Absolute one-body energies are shifted by the
zero-mean convention; the shift is identical in every model compared here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice, SpinorField

__all__ = [
    "NuclearModel",
    "CoulombKernel",
    "nuclear_potential",
    "coulomb_convolve",
    "apply_mean_field",
    "mean_field_energies",
]


@dataclass(frozen=True)
class NuclearModel:
    """Gaussian nuclear charge: total charge z, width sigma, centered in the box."""

    total_charge: float
    gaussian_width: float

    def __post_init__(self):
        if self.total_charge < 0:
            raise ValueError("total_charge must be nonnegative")
        if not (self.gaussian_width > 0):
            raise ValueError("gaussian_width must be positive")

    def density_fourier(self, lattice: Lattice) -> np.ndarray:
        """mu_hat(k) = z exp(-sigma^2 |k|^2 / 2) * centering phase; mu_hat(0) = z."""
        kx, ky, kz = lattice.k_vectors()
        k2 = kx**2 + ky**2 + kz**2
        x0 = lattice.box_length / 2.0
        phase = np.exp(-1j * (kx + ky + kz) * x0)
        return self.total_charge * np.exp(-0.5 * self.gaussian_width**2 * k2) * phase


class CoulombKernel:
    """Multiplier 4*pi/|k|^2 with the k=0 coefficient zeroed."""

    def __init__(self, lattice: Lattice):
        k2 = lattice.k_squared()
        w = np.zeros_like(k2)
        nonzero = k2 > 0
        w[nonzero] = 4.0 * np.pi / k2[nonzero]
        self.lattice = lattice
        self.multiplier = w

    def gradient_multipliers(self) -> list[np.ndarray]:
        """Multipliers i*k_j * W_hat(k) of the kernel gradient components."""
        return [1j * k * self.multiplier for k in self.lattice.k_vectors()]

    def laplacian_multiplier(self) -> np.ndarray:
        """Multiplier -|k|^2 * W_hat(k) (equals -4*pi except at k=0)."""
        return -self.lattice.k_squared() * self.multiplier


def nuclear_potential(
    model: NuclearModel,
    lattice: Lattice,
    with_gradient: bool = False,
    with_laplacian: bool = False,
):
    """V = mu * 1/|x| on the grid; optionally its exact gradient and Laplacian.

    The spacing guard keeps sigma resolvable: below one grid spacing the
    Gaussian is essentially a point charge for this lattice and we refuse to
    continue; below two spacings a warning records that mu is coarsely sampled.
    """
    h = lattice.spacing
    if model.total_charge > 0:
        if model.gaussian_width < h:
            raise ValueError(
                f"nuclear width {model.gaussian_width} is under-resolved on spacing {h}"
            )
        if model.gaussian_width < 2.0 * h:
            warnings.warn(
                f"nuclear width {model.gaussian_width} below twice the grid spacing {h}",
                stacklevel=2,
            )
    kernel = CoulombKernel(lattice)
    mu_hat = model.density_fourier(lattice)
    v_hat = kernel.multiplier * mu_hat
    v = lattice.to_position(v_hat).real
    out = [v]
    if with_gradient:
        grad = [
            lattice.to_position(1j * k * v_hat).real for k in lattice.k_vectors()
        ]
        out.append(grad)
    if with_laplacian:
        out.append(lattice.to_position(-lattice.k_squared() * v_hat).real)
    return out[0] if len(out) == 1 else tuple(out)


def coulomb_convolve(lattice: Lattice, f: np.ndarray) -> np.ndarray:
    """(W * f)(x) through the periodic kernel; zero-mean output."""
    kernel = CoulombKernel(lattice)
    out = lattice.convolve(f, kernel.multiplier)
    return out.real if np.isrealobj(f) else out


def apply_mean_field(density_matrix, psi: SpinorField):
    """Direct and exchange parts of the electron-electron mean field on psi.

    Returns (W_1 psi, W_2 psi) with W_1 = multiplication by W * rho and
    W_2 psi = sum_n lam_n u_n(x) [W * (u_n^dag psi)](x); one FFT convolution
    per occupied orbital.
    """
    lattice = psi.lattice
    if density_matrix.lattice is not lattice and density_matrix.lattice != lattice:
        raise ValueError("density matrix and field live on different lattices")
    if density_matrix.rank and density_matrix.components != psi.components:
        raise ValueError("component mismatch between density matrix and field")
    kernel = CoulombKernel(lattice)

    if density_matrix.rank == 0:
        return SpinorField.zero(lattice, psi.components), SpinorField.zero(lattice, psi.components)

    rho = density_matrix.one_particle_density()
    direct = SpinorField(lattice, lattice.convolve(rho, kernel.multiplier).real * psi.values)

    exch = np.zeros_like(psi.values)
    for lam, orb in density_matrix.iter_orbitals():
        overlap = np.sum(orb.conj() * psi.values, axis=0)
        exch += lam * orb * lattice.convolve(overlap, kernel.multiplier)
    return direct, SpinorField(lattice, exch)


def mean_field_energies(density_matrix) -> tuple[float, float]:
    """(Tr[W_1 gamma], Tr[W_2 gamma]) with the 1/2 prefactors NOT included.

    The direct trace is the Coulomb self-energy of rho; the exchange trace is
    the q^2 pair sum evaluated with one kernel convolution per orbital pair.
    """
    lattice = density_matrix.lattice
    kernel = CoulombKernel(lattice)
    rho = density_matrix.one_particle_density()
    hartree = lattice.integrate(rho * lattice.convolve(rho, kernel.multiplier).real).real

    orbs = density_matrix.orbitals
    occ = density_matrix.occupations
    exchange = 0.0
    for m in range(len(occ)):
        for n in range(m, len(occ)):
            pair = np.sum(orbs[m].conj() * orbs[n], axis=0)
            val = lattice.integrate(pair.conj() * lattice.convolve(pair, kernel.multiplier)).real
            weight = occ[m] * occ[n] * (1.0 if m == n else 2.0)
            exchange += weight * val
    return float(hartree), float(exchange)
