"""Leading-order relativistic correction of a converged HF state.

The correction divides by 4c^2 a c-independent quantity with three pieces:
an eigenvalue-weighted Pauli-gradient term, a potential term, and an exchange
pair sum. Eliminating the eigenvalues through the mean-field equation turns
4c^2 E2 into the textbook mass-velocity + Darwin + spin-orbit sum; on the
collocation grid the two evaluations differ only by product aliasing, which
decays spectrally with the grid size. Both sides are always computed as
written and compared, never substituted for one another.

All exchange pair sums run through kernel convolutions with the analytic
multipliers W_hat, |k|^2 W_hat and i k W_hat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coulomb import CoulombKernel, nuclear_potential
from .density import DensityMatrix
from .df import DfGroundState
from .lattice import Lattice, SpinorField
from .operators import pauli_dot_k, PAULI
from .params import ModelParams

__all__ = [
    "CorrectionReport",
    "e2_total",
    "e2_decompose",
    "e2_tilde_df",
    "commutator_residual",
]

_EPS_LEVI = [(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0),
             (0, 2, 1, -1.0), (2, 1, 0, -1.0), (1, 0, 2, -1.0)]


@dataclass
class CorrectionReport:
    e2_total: float
    e2_eigen_term: float
    e2_direct_term: float
    e2_exchange_term: float
    c: float
    e_mv: float = math.nan
    e_d: float = math.nan
    e_so: float = math.nan

    @property
    def consistency_residual(self) -> float:
        return abs(4.0 * self.c**2 * self.e2_total - (self.e_mv + self.e_d + self.e_so))


def _require_filled(dm: DensityMatrix, what: str):
    if dm.rank and np.max(np.abs(dm.occupations - 1.0)) > 1e-8:
        raise ValueError(f"{what} needs integer occupations (fractional Fermi level present)")


def _pauli_gradients(lattice: Lattice, orbitals: np.ndarray) -> np.ndarray:
    hats = np.fft.fftn(orbitals, axes=(-3, -2, -1))
    out = np.stack([pauli_dot_k(lattice, h) for h in hats])
    return np.fft.ifftn(out, axes=(-3, -2, -1))


def _e2_terms(
    lattice: Lattice,
    orbitals: np.ndarray,
    eps: np.ndarray,
    v_field: np.ndarray,
    w1_field: np.ndarray,
    c: float,
) -> tuple[float, float, float]:
    """The three trace-form pieces (eigen, direct, exchange), already / 4c^2."""
    kernel = CoulombKernel(lattice)
    h3 = lattice.cell_volume
    grads = _pauli_gradients(lattice, orbitals)

    eigen = 0.0
    direct = 0.0
    for n in range(orbitals.shape[0]):
        g2 = np.sum(np.abs(grads[n]) ** 2, axis=0)
        eigen -= eps[n] * h3 * float(np.sum(g2))
        direct += h3 * float(np.sum((w1_field - v_field) * g2))

    exchange = 0.0
    q = orbitals.shape[0]
    for m in range(q):
        for n in range(q):
            pair_nm = np.sum(orbitals[n].conj() * orbitals[m], axis=0)
            grad_pair = np.sum(grads[m].conj() * grads[n], axis=0)
            conv = lattice.convolve(grad_pair, kernel.multiplier)
            exchange -= h3 * float(np.sum(pair_nm * conv).real)

    scale = 1.0 / (4.0 * c * c)
    return eigen * scale, direct * scale, exchange * scale


def e2_total(
    params: ModelParams,
    dm_hf: DensityMatrix,
    eigenvalues,
    c: float | None = None,
) -> CorrectionReport:
    """Trace-form leading correction of a converged HF minimizer."""
    _require_filled(dm_hf, "the leading-order correction")
    if dm_hf.rank and dm_hf.components != 2:
        raise ValueError("expected a 2-spinor HF density matrix")
    c = float(c if c is not None else params.c)
    lattice = params.lattice
    eps = np.asarray(list(eigenvalues)[: dm_hf.rank], float)
    if eps.size != dm_hf.rank:
        raise ValueError("need one mean-field eigenvalue per occupied orbital")
    v = nuclear_potential(params.nuclear, lattice)
    kernel = CoulombKernel(lattice)
    w1 = lattice.convolve(dm_hf.one_particle_density(), kernel.multiplier).real
    eigen, direct, exch = _e2_terms(lattice, dm_hf.orbitals, eps, v, w1, c)
    return CorrectionReport(
        e2_total=eigen + direct + exch,
        e2_eigen_term=eigen,
        e2_direct_term=direct,
        e2_exchange_term=exch,
        c=c,
    )


def e2_decompose(params: ModelParams, dm_hf: DensityMatrix, c: float | None = None):
    """(E_mv, E_D, E_so): mass-velocity, Darwin and spin-orbit pieces of 4c^2 E2."""
    _require_filled(dm_hf, "the correction decomposition")
    lattice = params.lattice
    h3 = lattice.cell_volume
    kernel = CoulombKernel(lattice)
    orbitals = dm_hf.orbitals
    q = orbitals.shape[0]

    v, grad_v, lap_v = nuclear_potential(
        params.nuclear, lattice, with_gradient=True, with_laplacian=True
    )
    rho_hat = np.fft.fftn(dm_hf.one_particle_density())
    grad_w1 = [
        np.fft.ifftn(1j * k * kernel.multiplier * rho_hat).real for k in lattice.k_vectors()
    ]
    lap_w1 = np.fft.ifftn(-lattice.k_squared() * kernel.multiplier * rho_hat).real

    hats = np.fft.fftn(orbitals, axes=(-3, -2, -1))
    k2 = lattice.k_squared()
    weight = h3 / lattice.n_points

    # mass-velocity: -(1/2) sum <u, (-Delta)^2 u>
    e_mv = -0.5 * weight * float(np.sum(k2**2 * np.abs(hats) ** 2))

    # Darwin, one-body part: (1/2) sum <u, [Delta(-V + W1)] u>
    lap_pot = -lap_v + lap_w1
    e_d = 0.0
    for n in range(q):
        dens_n = np.sum(np.abs(orbitals[n]) ** 2, axis=0)
        e_d += 0.5 * h3 * float(np.sum(lap_pot * dens_n))

    # spin-orbit, one-body part: (1/2) sum <u, sigma.[(grad(-V+W1)) x (-i grad)] u>
    a_field = [gw - gv for gw, gv in zip(grad_w1, grad_v)]  # grad(-V + W1)
    kvecs = lattice.k_vectors()
    p_orbs = [
        np.fft.ifftn(kvecs[l] * hats, axes=(-3, -2, -1)) for l in range(3)
    ]  # (-i d_l u), stacked over orbitals
    e_so = 0.0
    for n in range(q):
        acc = np.zeros(lattice.shape, dtype=np.complex128)
        for j, k, l, sgn in _EPS_LEVI:
            sig_pl = np.einsum("ab,bxyz->axyz", PAULI[j], p_orbs[l][n])
            acc += sgn * a_field[k] * np.sum(orbitals[n].conj() * sig_pl, axis=0)
        e_so += 0.5 * h3 * float(np.sum(acc).real)

    # exchange counterparts: pair convolutions against |k|^2 W_hat and i k W_hat
    grads = _pauli_gradients(lattice, orbitals)
    lap_kernel = -k2 * kernel.multiplier
    grad_kernels = [1j * k * kernel.multiplier for k in kvecs]
    for m in range(q):
        for n in range(q):
            pair_nm = np.sum(orbitals[n].conj() * orbitals[m], axis=0)
            pair_mn = np.sum(orbitals[m].conj() * orbitals[n], axis=0)
            # Darwin exchange: -(1/2) sum int (u_n^* u_m)(x) [(Delta W) * (u_m^* u_n)](x)
            conv = lattice.convolve(pair_mn, lap_kernel)
            e_d -= 0.5 * h3 * float(np.sum(pair_nm * conv).real)
            # spin-orbit exchange; grad_y W(x-.) = -(grad W)(x-.) flips the sign
            # of the pair term, cancelling the -1/2 prefactor's sign
            acc = 0.0
            for j, k, l, sgn in _EPS_LEVI:
                sig_pl = np.einsum("ab,bxyz->axyz", PAULI[j], p_orbs[l][n])
                t_field = np.sum(orbitals[m].conj() * sig_pl, axis=0)
                conv = lattice.convolve(t_field, grad_kernels[k])
                acc += sgn * float(np.sum(pair_nm * conv).real)
            e_so += 0.5 * h3 * acc
    return float(e_mv), float(e_d), float(e_so)


def e2_report(params: ModelParams, dm_hf: DensityMatrix, eigenvalues, c=None) -> CorrectionReport:
    """e2_total plus decomposition in one report."""
    rep = e2_total(params, dm_hf, eigenvalues, c)
    rep.e_mv, rep.e_d, rep.e_so = e2_decompose(params, dm_hf, c)
    return rep


def e2_tilde_df(params: ModelParams, state: DfGroundState) -> float:
    """DF-side correction evaluated on the large components of the minimizer."""
    dm = state.density
    if dm.components != 4:
        raise ValueError("expected a 4-spinor DF ground state")
    if state.delta_mass > 1e-10:
        raise ValueError("DF-side correction requires a filled shell (delta = 0)")
    _require_filled(dm, "the DF-side correction")
    lattice = params.lattice
    large = dm.orbitals[:, :2]
    eps = np.asarray(state.eigenvalues_shifted[: dm.rank], float)
    v = nuclear_potential(params.nuclear, lattice)
    kernel = CoulombKernel(lattice)
    rho_l = np.einsum("ncxyz,ncxyz->xyz", large.conj(), large).real
    w1 = lattice.convolve(rho_l, kernel.multiplier).real
    eigen, direct, exch = _e2_terms(lattice, large, eps, v, w1, params.c)
    return float(eigen + direct + exch)


def commutator_residual(lattice: Lattice, potential: np.ndarray, u: SpinorField) -> float:
    """|| [L,[L,V]]u - (-Delta V) u - 2i sigma.((grad V) x grad) u || / ||u||_H2.

    The left side nests exact Pauli-gradient multipliers with pointwise
    products; the right side uses analytic multipliers for the potential
    derivatives. Any discrepancy is collocation aliasing.
    """
    if u.components != 2:
        raise ValueError("the commutator identity is stated on 2-spinors")

    def pauli(vals):
        return np.fft.ifftn(
            pauli_dot_k(lattice, np.fft.fftn(vals, axes=(-3, -2, -1))), axes=(-3, -2, -1)
        )

    vu = potential * u.values
    lhs = pauli(pauli(vu)) - 2.0 * pauli(potential * pauli(u.values)) + potential * pauli(pauli(u.values))

    pot_hat = np.fft.fftn(potential)
    lap_v = np.fft.ifftn(-lattice.k_squared() * pot_hat).real
    grad_v = [np.fft.ifftn(1j * k * pot_hat).real for k in lattice.k_vectors()]
    u_hat = np.fft.fftn(u.values, axes=(-3, -2, -1))
    grad_u = [np.fft.ifftn(k * u_hat, axes=(-3, -2, -1)) * 1j for k in lattice.k_vectors()]

    rhs = -lap_v * u.values
    cross = np.zeros_like(u.values)
    for j, k, l, sgn in _EPS_LEVI:
        sig_gl = np.einsum("ab,bxyz->axyz", PAULI[j], grad_u[l])
        cross += sgn * grad_v[k] * sig_gl
    rhs = rhs + 2j * cross

    from .operators import sobolev_norm

    diff = SpinorField(lattice, lhs - rhs)
    return diff.norm() / max(sobolev_norm(u, 2.0), 1e-300)
