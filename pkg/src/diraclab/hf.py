"""Hartree-Fock model on 2-spinors: Fock operator, energies and a damped SCF.

The mean-field operator is  H_{0,gamma} = -Delta/2 - V + W_{1,gamma} - W_{2,gamma}
restricted to the large 2-spinor space. The minimizer is found by a damped
fixed-point iteration on the density matrix: diagonalize the Fock operator of
the current iterate, refill by aufbau, mix with the previous iterate, and
safeguard monotone energy descent by halving the mixing weight on an increase
(restoring it after three accepted steps).

Two eigensolver backends drive the same iteration: a dense one for desk-scale
grids, and a preconditioned LOBPCG one (orbital representation throughout) for
grids past the dense cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .coulomb import CoulombKernel, mean_field_energies, nuclear_potential
from .density import AufbauResult, DensityMatrix, aufbau_fill
from .lattice import Lattice, SpinorField
from .operators import DENSE_DIMENSION_CAP, dense_kinetic_matrix
from .params import ModelParams, ScfSettings

__all__ = ["EnergyReport", "HartreeFock", "hf_apply_fock", "hf_energy", "solve_hf"]

_DENSE_DEFAULT_LIMIT = 4608  # prefer LOBPCG above this dimension (still under the cap)


@dataclass
class EnergyReport:
    """Energy decomposition; the 1/2 factors sit inside the two-body entries."""

    total: float
    kinetic: float
    nuclear_attraction: float
    hartree_direct: float
    exchange: float
    eigenvalues: list[float] = field(default_factory=list)
    fermi: float = math.nan
    fermi_gap: float = math.nan
    iterations: int = 0
    converged: bool = True

    def recomposed(self) -> float:
        return self.kinetic - self.nuclear_attraction + self.hartree_direct - self.exchange


class _Safeguard:
    """Monotone-descent damping control: halve on increase, restore after 3."""

    def __init__(self, damping: float, floor: float = 1e-4):
        self.t0 = damping
        self.t = damping
        self.successes = 0
        self.floor = floor

    def reject(self):
        self.t = max(self.t / 2.0, self.floor)
        self.successes = 0

    def accept(self):
        self.successes += 1
        if self.successes >= 3 and self.t < self.t0:
            self.t = min(self.t * 2.0, self.t0)
            self.successes = 0

    @property
    def stalled(self) -> bool:
        return self.t <= self.floor


class HartreeFock:
    """Workspace caching the lattice-level pieces of the HF problem."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.lattice = params.lattice
        self.kernel = CoulombKernel(self.lattice)
        self.v = nuclear_potential(params.nuclear, self.lattice)
        self._kinetic_dense = None
        self._conv_matrix = None

    # -- operator application (FFT path) ---------------------------------------

    def apply_fock(self, dm: DensityMatrix, psi: SpinorField) -> SpinorField:
        """(-Delta/2 - V + W_{1,gamma} - W_{2,gamma}) psi on a 2-spinor."""
        if psi.components != 2:
            raise ValueError("the HF operator acts on 2-spinors")
        if psi.lattice != self.lattice:
            raise ValueError("field lives on a different lattice")
        lattice = self.lattice
        hat = np.fft.fftn(psi.values, axes=(-3, -2, -1))
        out = np.fft.ifftn(0.5 * lattice.k_squared() * hat, axes=(-3, -2, -1))
        local = -self.v
        if dm.rank:
            local = local + lattice.convolve(dm.one_particle_density(), self.kernel.multiplier).real
        out += local * psi.values
        for lam, orb in dm.iter_orbitals():
            overlap = np.sum(orb.conj() * psi.values, axis=0)
            out -= lam * orb * lattice.convolve(overlap, self.kernel.multiplier)
        return SpinorField(lattice, out)

    # -- energies ----------------------------------------------------------------

    def energy(self, dm: DensityMatrix, spectrum: AufbauResult | None = None) -> EnergyReport:
        lattice = self.lattice
        k2 = lattice.k_squared()
        kinetic = 0.0
        for lam, orb in dm.iter_orbitals():
            hat = np.fft.fftn(orb, axes=(-3, -2, -1))
            kinetic += lam * 0.5 * np.sum(k2 * np.abs(hat) ** 2) * lattice.cell_volume / lattice.n_points
        rho = dm.one_particle_density()
        nuclear = lattice.integrate(self.v * rho).real
        hartree, exchange = mean_field_energies(dm)
        report = EnergyReport(
            total=float(kinetic - nuclear + 0.5 * hartree - 0.5 * exchange),
            kinetic=float(kinetic),
            nuclear_attraction=float(nuclear),
            hartree_direct=float(0.5 * hartree),
            exchange=float(0.5 * exchange),
        )
        if spectrum is not None:
            report.fermi = spectrum.fermi
            report.fermi_gap = spectrum.fermi_gap
        return report

    # -- dense pieces --------------------------------------------------------------

    @property
    def dimension(self) -> int:
        return 2 * self.lattice.n_points

    def kinetic_dense(self) -> np.ndarray:
        if self._kinetic_dense is None:
            m = self.lattice.n_points
            block = dense_kinetic_matrix(self.lattice)
            out = np.zeros((2 * m, 2 * m), dtype=np.complex128)
            out[:m, :m] = block
            out[m:, m:] = block
            self._kinetic_dense = out
        return self._kinetic_dense

    def convolution_matrix(self) -> np.ndarray:
        """C_ij = w(x_i - x_j): the kernel as a dense matrix on vec coordinates."""
        if self._conv_matrix is None:
            n = self.lattice.n_per_axis
            w_grid = np.fft.ifftn(self.kernel.multiplier).real
            i = np.arange(self.lattice.n_points)
            coords = np.stack(np.unravel_index(i, self.lattice.shape), axis=0)
            d0 = (coords[0][:, None] - coords[0][None, :]) % n
            d1 = (coords[1][:, None] - coords[1][None, :]) % n
            d2 = (coords[2][:, None] - coords[2][None, :]) % n
            self._conv_matrix = w_grid[d0, d1, d2]
        return self._conv_matrix

    def fock_dense(self, dm_dense: np.ndarray) -> np.ndarray:
        """Dense Fock matrix of the (dense) density matrix iterate."""
        m = self.lattice.n_points
        h3 = self.lattice.cell_volume
        rho = (
            np.diagonal(dm_dense)[:m] + np.diagonal(dm_dense)[m:]
        ).real / h3
        local = -self.v.ravel() + self.convolution_matrix() @ rho
        fock = self.kinetic_dense().copy()
        idx = np.arange(m)
        fock[idx, idx] += local
        fock[m + idx, m + idx] += local
        c_over_h3 = self.convolution_matrix() / h3
        for a in range(2):
            for b in range(2):
                fock[a * m:(a + 1) * m, b * m:(b + 1) * m] -= (
                    c_over_h3 * dm_dense[a * m:(a + 1) * m, b * m:(b + 1) * m]
                )
        return fock

    def energy_dense(self, dm_dense: np.ndarray) -> float:
        """HF functional of a dense density-matrix iterate (mixing path)."""
        m = self.lattice.n_points
        h3 = self.lattice.cell_volume
        kinetic = np.einsum("ij,ji->", self.kinetic_dense(), dm_dense).real
        rho = (np.diagonal(dm_dense)[:m] + np.diagonal(dm_dense)[m:]).real / h3
        nuclear = float(self.v.ravel() @ rho) * h3
        hartree = 0.5 * float((self.convolution_matrix() @ rho) @ rho) * h3
        c_over_h3 = self.convolution_matrix() / h3
        exch = 0.0
        for a in range(2):
            for b in range(2):
                blk = dm_dense[a * m:(a + 1) * m, b * m:(b + 1) * m]
                exch += np.sum(c_over_h3 * np.abs(blk) ** 2)
        return float(kinetic - nuclear + hartree - 0.5 * exch)

    def dm_to_dense(self, dm: DensityMatrix) -> np.ndarray:
        d = self.dimension
        out = np.zeros((d, d), dtype=np.complex128)
        for lam, orb in dm.iter_orbitals():
            vec = np.sqrt(self.lattice.cell_volume) * orb.ravel()
            out += lam * np.outer(vec, vec.conj())
        return out

    def _fields_from_columns(self, cols: np.ndarray) -> list[SpinorField]:
        return [
            SpinorField.from_vector(self.lattice, 2, cols[:, j])
            for j in range(cols.shape[1])
        ]

    # -- eigensolver backends -------------------------------------------------------

    def _lowest_dense(self, fock: np.ndarray, nstates: int):
        evals, evecs = scipy.linalg.eigh(
            (fock + fock.conj().T) / 2.0, subset_by_index=[0, nstates - 1]
        )
        return evals, self._fields_from_columns(evecs)

    def _lowest_lobpcg(self, dm: DensityMatrix, nstates: int, guess, tol: float):
        lattice = self.lattice
        d = self.dimension
        h3 = lattice.cell_volume

        def matvec_block(x):
            out = np.empty_like(x)
            for j in range(x.shape[1]):
                f = SpinorField.from_vector(lattice, 2, x[:, j])
                out[:, j] = self.apply_fock(dm, f).to_vector()
            return out

        k2 = lattice.k_squared()
        pre = 1.0 / (0.5 * k2 + 1.0)

        def precond(x):
            out = np.empty_like(x)
            for j in range(x.shape[1]):
                vals = x[:, j].reshape(2, *lattice.shape)
                out[:, j] = np.fft.ifftn(
                    pre * np.fft.fftn(vals, axes=(-3, -2, -1)), axes=(-3, -2, -1)
                ).ravel()
            return out

        a_op = scipy.sparse.linalg.LinearOperator(
            (d, d),
            matvec=lambda x: matvec_block(x.reshape(-1, 1)).ravel(),
            matmat=matvec_block,
            dtype=np.complex128,
        )
        m_op = scipy.sparse.linalg.LinearOperator(
            (d, d),
            matvec=lambda x: precond(x.reshape(-1, 1)).ravel(),
            matmat=precond,
            dtype=np.complex128,
        )
        if guess is None or guess.shape[1] < nstates:
            rng = np.random.default_rng(1234)
            extra = nstates - (0 if guess is None else guess.shape[1])
            rnd = rng.standard_normal((d, extra)) + 1j * rng.standard_normal((d, extra))
            guess = rnd if guess is None else np.hstack([guess, rnd])
        guess, _ = np.linalg.qr(guess[:, :nstates])
        evals, evecs = scipy.sparse.linalg.lobpcg(
            a_op, guess, M=m_op, largest=False, tol=tol, maxiter=400
        )
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]
        # vec coordinates carry the quadrature weight, so l2-normalized columns
        # are already L2-normalized fields
        return evals, self._fields_from_columns(evecs)

    # -- the solver -------------------------------------------------------------------

    def initial_density(self, q: float, nstates: int) -> tuple[AufbauResult, np.ndarray | None]:
        """Integer-filled lowest eigenstates of H_0 - V (symmetry-broken for odd q)."""
        if self.dimension <= _DENSE_DEFAULT_LIMIT:
            m = self.lattice.n_points
            core = self.kinetic_dense().copy()
            idx = np.arange(m)
            core[idx, idx] -= self.v.ravel()
            core[m + idx, m + idx] -= self.v.ravel()
            evals, fields = self._lowest_dense(core, nstates)
            guess = None
        else:
            empty = DensityMatrix.empty(self.lattice, 2)
            evals, fields = self._lowest_lobpcg(empty, nstates, None, 1e-8)
            guess = np.stack([f.to_vector() for f in fields], axis=1)
        fill = aufbau_fill(evals, fields, q, (-math.inf, math.inf), integer_fill=True)
        return fill, guess

    def solve(self, settings: ScfSettings, initial: DensityMatrix | None = None):
        params = self.params
        q = params.q
        nstates = int(math.ceil(q)) + settings.n_extra_states
        nstates = min(nstates, self.dimension)
        use_dense = settings.eigensolver == "dense" or (
            settings.eigensolver == "auto" and self.dimension <= _DENSE_DEFAULT_LIMIT
        )
        if self.dimension > DENSE_DIMENSION_CAP and use_dense:
            raise ValueError("dense eigensolver requested above the dimension cap")

        if use_dense:
            return self._solve_dense(settings, q, nstates, initial)
        return self._solve_orbital(settings, q, nstates, initial)

    def _solve_dense(self, settings, q, nstates, initial):
        if initial is None:
            fill, _ = self.initial_density(q, nstates)
            current_dm = fill.density
        else:
            current_dm = initial
        dense = self.dm_to_dense(current_dm)
        energy = self.energy_dense(dense)
        guard = _Safeguard(settings.damping)
        rho_prev = current_dm.one_particle_density()
        converged = False
        last_fill = None
        it = 0
        for it in range(1, settings.max_iter + 1):
            fock = self.fock_dense(dense)
            evals, fields = self._lowest_dense(fock, nstates)
            fill = aufbau_fill(
                evals, fields, q, (-math.inf, math.inf), degeneracy_tol=settings.degeneracy_tol
            )
            last_fill = fill
            fill_dense = self.dm_to_dense(fill.density)
            accepted = False
            while not accepted:
                trial = (1.0 - guard.t) * dense + guard.t * fill_dense
                e_trial = self.energy_dense(trial)
                if e_trial <= energy + max(1e-13 * (1.0 + abs(energy)), 0.25 * settings.tol_energy):
                    accepted = True
                elif guard.stalled:
                    accepted = True  # accept the stalled step; convergence test decides
                else:
                    guard.reject()
            guard.accept()
            rho_new = self._rho_of_dense(trial)
            de = abs(e_trial - energy)
            drho = float(np.sum(np.abs(rho_new - rho_prev))) * self.lattice.cell_volume
            dense, energy, rho_prev = trial, e_trial, rho_new
            if de <= settings.tol_energy and drho <= settings.tol_density:
                converged = True
                break

        report = self.energy(last_fill.density, last_fill)
        report.eigenvalues = [float(v) for v in evals]
        report.iterations = it
        report.converged = converged
        return last_fill.density, report, last_fill

    def _rho_of_dense(self, dense: np.ndarray) -> np.ndarray:
        m = self.lattice.n_points
        rho = (np.diagonal(dense)[:m] + np.diagonal(dense)[m:]).real / self.lattice.cell_volume
        return rho.reshape(self.lattice.shape)

    def _solve_orbital(self, settings, q, nstates, initial):
        """LOBPCG-driven SCF keeping the iterate as a low-rank DensityMatrix."""
        if initial is None:
            fill0, guess = self.initial_density(q, nstates)
            current = fill0.density
        else:
            current = initial
            guess = np.stack([
                SpinorField(self.lattice, o).to_vector() for o in current.orbitals
            ], axis=1)
        energy = self.energy(current).total
        guard = _Safeguard(settings.damping)
        rho_prev = current.one_particle_density()
        converged = False
        last_fill = None
        eig_tol = max(settings.tol_energy * 10.0, 1e-12)
        it = 0
        for it in range(1, settings.max_iter + 1):
            evals, fields = self._lowest_lobpcg(current, nstates, guess, eig_tol)
            guess = np.stack([f.to_vector() for f in fields], axis=1)
            fill = aufbau_fill(
                evals, fields, q, (-math.inf, math.inf), degeneracy_tol=settings.degeneracy_tol
            )
            last_fill = fill
            accepted = False
            while not accepted:
                trial = _mix_density(current, fill.density, guard.t)
                e_trial = self.energy(trial).total
                if e_trial <= energy + max(1e-13 * (1.0 + abs(energy)), 0.25 * settings.tol_energy):
                    accepted = True
                elif guard.stalled:
                    accepted = True
                else:
                    guard.reject()
            guard.accept()
            rho_new = trial.one_particle_density()
            de = abs(e_trial - energy)
            drho = float(np.sum(np.abs(rho_new - rho_prev))) * self.lattice.cell_volume
            current, energy, rho_prev = trial, e_trial, rho_new
            if de <= settings.tol_energy and drho <= settings.tol_density:
                converged = True
                break

        report = self.energy(last_fill.density, last_fill)
        report.eigenvalues = [float(v) for v in evals]
        report.iterations = it
        report.converged = converged
        return last_fill.density, report, last_fill


def _mix_density(a: DensityMatrix, b: DensityMatrix, t: float) -> DensityMatrix:
    """(1-t) a + t b as an exact low-rank operator, tiny occupations dropped."""
    orbs = np.concatenate([a.orbitals, b.orbitals])
    coeff = np.diag(np.concatenate([(1.0 - t) * a.occupations, t * b.occupations]))
    return DensityMatrix.from_operator_basis(
        a.lattice, orbs, coeff, occupation_tol=1e-8, rank_tol=1e-13
    )


def hf_apply_fock(params: ModelParams, dm: DensityMatrix, psi: SpinorField) -> SpinorField:
    return HartreeFock(params).apply_fock(dm, psi)


def hf_energy(params: ModelParams, dm: DensityMatrix) -> EnergyReport:
    return HartreeFock(params).energy(dm)


def solve_hf(
    params: ModelParams,
    settings: ScfSettings | None = None,
    initial: DensityMatrix | None = None,
):
    """Minimize the HF functional; returns (density matrix, energy report)."""
    settings = settings or ScfSettings()
    dm, report, _ = HartreeFock(params).solve(settings, initial=initial)
    return dm, report
