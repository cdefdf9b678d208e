"""Dirac-Fock model on 4-spinors: mean-field operator, projectors, retraction, SCF.

The mean-field Dirac operator is D^c_gamma = D^c - V + W_gamma. Ground states
are sought in the window (0, c^2) of its spectrum; all spectra here are handled
with the rest mass subtracted (the dense matrices are built from the symbol of
D^c - c^2 directly), so occupied eigenvalues are O(1) numbers and the window
becomes (-c^2, 0).

The retraction theta(gamma) iterates T(gamma) = P^+_gamma gamma P^+_gamma to a
self-consistently projected state; its contraction diagnostics (step norms in
the c-dependent trace norm, ratios against L_c = 2 a_c R) are recorded
verbatim for the acceptance experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .coulomb import CoulombKernel, mean_field_energies, nuclear_potential
from .density import (
    AufbauResult,
    DensityMatrix,
    aufbau_fill,
    difference_frobenius_norm,
    difference_trace_norm,
    matrix_norms,
    schatten_one_weighted,
    xc_multiplier,
)
from .hf import EnergyReport, _Safeguard
from .lattice import Lattice, SpinorField
from .operators import DENSE_DIMENSION_CAP, dense_dirac_matrix, dirac_minus_c2
from .params import ModelParams, ScfSettings

__all__ = [
    "DiracFock",
    "MeanFieldProjector",
    "RetractionTrace",
    "DfGroundState",
    "AdmissibilityReport",
    "df_apply_operator",
    "df_energy",
    "positive_projector",
    "tc_map",
    "retract_theta",
    "admissibility_check",
    "solve_df",
]


@dataclass
class RetractionTrace:
    """Verbatim record of one retraction run."""

    iterations: int
    step_norms: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    contraction_factor: float = math.nan  # L_c = 2 a_c R
    amplification: float = math.nan  # A_c
    radius: float = math.nan
    final_residual: float = math.nan
    converged: bool = False
    failure: str | None = None
    # Lemma-style diagnostic on |E_c(gamma) - E_cal_c(gamma)|
    error_bound: float = math.nan
    measured_energy_shift: float = math.nan
    negative_part_norm: float = math.nan


@dataclass
class DfGroundState:
    density: DensityMatrix
    report: EnergyReport
    eigenvalues_shifted: list[float]
    fermi_shifted: float
    fermi_gap: float
    delta_mass: float
    projector_residual: float
    near_window_edge: int
    c: float

    @property
    def eigenvalues(self) -> list[float]:
        return [v + self.c**2 for v in self.eigenvalues_shifted]

    @property
    def fermi(self) -> float:
        return self.fermi_shifted + self.c**2


@dataclass
class AdmissibilityReport:
    orbit_norm_term: float  # (1/c) || gamma |D^c|^(1/2) ||_S1
    residual_term: float  # (A_c / c^2) || T(gamma) - gamma ||_Xc
    radius: float
    contraction_factor: float
    amplification: float
    member: bool
    r_zero: float | None = None

    @property
    def total(self) -> float:
        return self.orbit_norm_term + self.residual_term


class MeanFieldProjector:
    """Spectral projectors of D^c_gamma from one dense eigendecomposition.

    Eigenvalues are stored with the rest mass subtracted; the positive subspace
    is { lambda_shifted > -c^2 }.
    """

    def __init__(self, lattice: Lattice, c: float, evals_shifted: np.ndarray, evecs: np.ndarray):
        self.lattice = lattice
        self.c = c
        self.evals_shifted = evals_shifted
        self.evecs = evecs
        gap = np.min(np.abs(evals_shifted + c * c))
        if gap <= 1e-8:
            offender = evals_shifted[np.argmin(np.abs(evals_shifted + c * c))]
            raise ValueError(
                f"mean-field Dirac operator has a near-kernel eigenvalue: "
                f"lambda = {offender + c * c:.3e}"
            )
        self.positive_mask = evals_shifted > -c * c

    def apply(self, psi: SpinorField, sign: int) -> SpinorField:
        if psi.components != 4:
            raise ValueError("projector acts on 4-spinors")
        cols = self.evecs[:, self.positive_mask if sign > 0 else ~self.positive_mask]
        vec = psi.to_vector()
        out = cols @ (cols.conj().T @ vec)
        return SpinorField.from_vector(self.lattice, 4, out)

    def dense(self, sign: int) -> np.ndarray:
        cols = self.evecs[:, self.positive_mask if sign > 0 else ~self.positive_mask]
        return cols @ cols.conj().T

    def sandwich(self, dm: DensityMatrix, sign: int) -> DensityMatrix:
        """P gamma P represented exactly (occupations from the projected Gram)."""
        return _sandwich(dm, lambda f: self.apply(f, sign))


def lambda_sandwich(dm: DensityMatrix, c: float, sign: int) -> DensityMatrix:
    """Free-picture sandwich Lambda^{+/-} gamma Lambda^{+/-}."""
    from .operators import project_free

    return _sandwich(dm, lambda f: project_free(f, c, sign))


def _sandwich(dm: DensityMatrix, project) -> DensityMatrix:
    if dm.rank == 0:
        return dm
    basis = dm.map_orbitals(project)
    h3 = dm.lattice.cell_volume
    norms = h3 * np.sum(np.abs(basis.reshape(dm.rank, -1)) ** 2, axis=1).real
    keep = norms > 1e-12
    if not np.any(keep):
        return DensityMatrix.empty(dm.lattice, dm.components)
    return DensityMatrix.from_operator_basis(
        dm.lattice,
        basis[keep],
        np.diag(dm.occupations[keep]),
        occupation_tol=1e-12,
        clip_occupations=True,
        rank_tol=0.0,
    )


class DiracFock:
    """Workspace caching the dense pieces of the DF problem at one (lattice, c)."""

    def __init__(self, params: ModelParams):
        if params.kappa_c >= 1:
            raise ValueError(f"kappa_c = {params.kappa_c:.3f} >= 1: DF routines unavailable")
        self.params = params
        self.lattice = params.lattice
        self.c = params.c
        self.kernel = CoulombKernel(self.lattice)
        self.v = nuclear_potential(params.nuclear, self.lattice)
        self._base_dense = None  # D^c - c^2 - V
        self._conv_matrix = None
        self._conv_tiled = None

    @property
    def dimension(self) -> int:
        return 4 * self.lattice.n_points

    # -- FFT-path operator application ------------------------------------------

    def apply_operator(self, dm: DensityMatrix, psi: SpinorField, subtract_rest_mass=False) -> SpinorField:
        """(D^c - V + W_gamma) psi, optionally with the c^2 shift removed."""
        if psi.components != 4:
            raise ValueError("the DF operator acts on 4-spinors")
        if psi.lattice != self.lattice:
            raise ValueError("field lives on a different lattice")
        lattice = self.lattice
        c = self.c
        hat = np.fft.fftn(psi.values, axes=(-3, -2, -1))
        from .operators import _dirac_hat, dirac_minus_c2_hat

        kin = dirac_minus_c2_hat(lattice, hat, c) if subtract_rest_mass else _dirac_hat(lattice, hat, c)
        out = np.fft.ifftn(kin, axes=(-3, -2, -1))
        local = -self.v
        if dm.rank:
            local = local + lattice.convolve(dm.one_particle_density(), self.kernel.multiplier).real
        out += local * psi.values
        for lam, orb in dm.iter_orbitals():
            overlap = np.sum(orb.conj() * psi.values, axis=0)
            out -= lam * orb * lattice.convolve(overlap, self.kernel.multiplier)
        return SpinorField(lattice, out)

    # -- energies -----------------------------------------------------------------

    def energy(self, dm: DensityMatrix, spectrum: AufbauResult | None = None) -> EnergyReport:
        """DF functional with the rest mass subtracted inside the kinetic entry."""
        lattice = self.lattice
        kinetic = 0.0
        for lam, orb in dm.iter_orbitals():
            f = SpinorField(lattice, orb)
            kinetic += lam * f.inner(dirac_minus_c2(f, self.c)).real
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

    # -- dense pieces ---------------------------------------------------------------

    def base_dense(self) -> np.ndarray:
        """Dense (D^c - c^2) - V, cached."""
        if self._base_dense is None:
            if self.dimension > DENSE_DIMENSION_CAP:
                raise ValueError(
                    f"DF dense dimension {self.dimension} exceeds cap {DENSE_DIMENSION_CAP}"
                )
            base = dense_dirac_matrix(self.lattice, self.c, subtract_rest_mass=True)
            m = self.lattice.n_points
            idx = np.arange(m)
            vr = self.v.ravel()
            for a in range(4):
                base[a * m + idx, a * m + idx] -= vr
            self._base_dense = base
        return self._base_dense

    def convolution_matrix(self) -> np.ndarray:
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

    def _conv_tiled_over_spin(self) -> np.ndarray:
        if self._conv_tiled is None:
            self._conv_tiled = np.tile(
                self.convolution_matrix() / self.lattice.cell_volume, (4, 4)
            )
        return self._conv_tiled

    def operator_dense(self, dm_dense: np.ndarray) -> np.ndarray:
        """Dense D^c_gamma - c^2 for a dense density-matrix iterate."""
        m = self.lattice.n_points
        h3 = self.lattice.cell_volume
        diag = np.diagonal(dm_dense).real
        rho = sum(diag[a * m:(a + 1) * m] for a in range(4)) / h3
        wrho = self.convolution_matrix() @ rho
        fock = self.base_dense() - self._conv_tiled_over_spin() * dm_dense
        idx = np.arange(4 * m)
        fock[idx, idx] += np.tile(wrho, 4)
        return fock

    def energy_dense(self, dm_dense: np.ndarray) -> float:
        m = self.lattice.n_points
        h3 = self.lattice.cell_volume
        core = np.einsum("ij,ji->", self.base_dense(), dm_dense).real
        diag = np.diagonal(dm_dense).real
        rho = sum(diag[a * m:(a + 1) * m] for a in range(4)) / h3
        hartree = 0.5 * float((self.convolution_matrix() @ rho) @ rho) * h3
        exch = 0.5 * np.sum(self._conv_tiled_over_spin() * np.abs(dm_dense) ** 2)
        return float(core + hartree - exch)

    def dm_to_dense(self, dm: DensityMatrix) -> np.ndarray:
        d = self.dimension
        out = np.zeros((d, d), dtype=np.complex128)
        for lam, orb in dm.iter_orbitals():
            vec = np.sqrt(self.lattice.cell_volume) * orb.ravel()
            out += lam * np.outer(vec, vec.conj())
        return out

    def _fields_from_columns(self, cols: np.ndarray) -> list[SpinorField]:
        return [SpinorField.from_vector(self.lattice, 4, cols[:, j]) for j in range(cols.shape[1])]

    def projector(self, dm: DensityMatrix) -> MeanFieldProjector:
        """P^{+/-}_{c,gamma} from the dense eigendecomposition of D^c_gamma."""
        fock = self.operator_dense(self.dm_to_dense(dm))
        evals, evecs = scipy.linalg.eigh((fock + fock.conj().T) / 2.0)
        return MeanFieldProjector(self.lattice, self.c, evals, evecs)

    def tc(self, dm: DensityMatrix, projector: MeanFieldProjector | None = None):
        """T_c(gamma) = P^+ gamma P^+ and the projector used to compute it."""
        proj = projector or self.projector(dm)
        return proj.sandwich(dm, +1), proj

    # -- retraction ------------------------------------------------------------------

    def retract(
        self,
        dm: DensityMatrix,
        radius: float,
        tol: float = 1e-10,
        max_iter: int = 40,
    ) -> tuple[DensityMatrix, RetractionTrace]:
        params = self.params
        lc = params.contraction_factor(radius)
        if lc >= 1:
            raise ValueError(
                f"2 a_c R = {lc:.3f} >= 1: outside the contraction hypothesis"
            )
        a_c = params.amplification_constant(radius)
        mult = xc_multiplier(self.lattice, self.c)
        threshold = tol * self.c**2

        trace = RetractionTrace(
            iterations=0,
            contraction_factor=lc,
            amplification=a_c,
            radius=radius,
        )
        energy_in = self.energy(dm).total
        current = dm
        bad_streak = 0
        for step in range(max_iter + 1):
            tc_dm, proj = self.tc(current)
            dist = difference_trace_norm(tc_dm, current, mult)
            trace.step_norms.append(dist)
            if step == 0:
                trace.negative_part_norm = matrix_norms(
                    proj.sandwich(dm, -1), "X_c", c=self.c
                )
            if len(trace.step_norms) >= 2 and trace.step_norms[-2] > 0:
                ratio = dist / trace.step_norms[-2]
                trace.ratios.append(ratio)
                if ratio > 1.0:
                    bad_streak += 1
                    if bad_streak >= 3:
                        trace.failure = "non-contraction: ratio > 1 for 3 consecutive steps"
                        trace.final_residual = dist
                        return current, trace
                else:
                    bad_streak = 0
            if dist <= threshold:
                trace.converged = True
                trace.final_residual = dist
                break
            current = tc_dm
            trace.iterations += 1
        else:
            trace.final_residual = trace.step_norms[-1]
            trace.failure = "max_iter reached"

        if not trace.converged and trace.failure is None:
            trace.failure = "max_iter reached"

        # Diagnostic bound on |E_c(gamma) - E_cal_c(gamma)|, recorded not asserted
        kc, lam0 = params.kappa_c, params.lambda_0c
        c_const = 5.0 * math.pi**2 / (4.0 * (1 - kc) ** 2 * lam0**1.5 * (1 - lc) ** 2)
        first = trace.step_norms[0]
        trace.error_bound = (
            c_const
            * (3.0 * radius / self.c + 3.0 * params.q / self.c + 1.0)
            * first**2
            / self.c**3
            + 3.0 * trace.negative_part_norm
        )
        trace.measured_energy_shift = abs(self.energy(current).total - energy_in)
        return current, trace

    # -- admissibility -------------------------------------------------------------

    def admissibility(
        self, dm: DensityMatrix, radius: float, hf_x2_norm: float | None = None
    ) -> AdmissibilityReport:
        params = self.params
        mult_half = xc_multiplier(self.lattice, self.c)
        summand1 = schatten_one_weighted(self.lattice, dm, mult_half) / self.c
        tc_dm, _ = self.tc(dm) if dm.rank else (dm, None)
        residual = difference_trace_norm(tc_dm, dm, mult_half) if dm.rank else 0.0
        lc = params.contraction_factor(radius)
        if lc < 1:
            a_c = params.amplification_constant(radius)
            summand2 = a_c * residual / self.c**2
            member = summand1 + summand2 < radius
        else:
            a_c = math.inf
            summand2 = math.inf
            member = False
        r0 = params.r_zero(hf_x2_norm) if hf_x2_norm is not None else None
        return AdmissibilityReport(
            orbit_norm_term=float(summand1),
            residual_term=float(summand2),
            radius=radius,
            contraction_factor=lc,
            amplification=a_c,
            member=bool(member),
            r_zero=r0,
        )

    # -- ground-state SCF ------------------------------------------------------------

    def initial_density(self, q: float, nstates: int) -> AufbauResult:
        evals, fields = self._window_states(self.base_dense(), nstates)
        return aufbau_fill(evals, fields, q, (-self.c**2, -1e-12 * self.c**2), integer_fill=True)

    def _window_states(self, fock: np.ndarray, nstates: int):
        """Lowest states of the positive branch (rest mass already removed)."""
        m2 = 2 * self.lattice.n_points
        hi = min(m2 + nstates - 1, self.dimension - 1)
        evals, evecs = scipy.linalg.eigh(
            (fock + fock.conj().T) / 2.0, subset_by_index=[m2 - 1, hi]
        )
        if evals[0] > -1.5 * self.c**2:
            # branch separation unclear; fall back on the full spectrum
            evals, evecs = scipy.linalg.eigh((fock + fock.conj().T) / 2.0)
            evals, evecs = evals[m2 - 1:hi + 1], evecs[:, m2 - 1:hi + 1]
        return evals[1:], self._fields_from_columns(evecs[:, 1:])

    def solve(self, settings: ScfSettings, initial: DensityMatrix | None = None) -> DfGroundState:
        params = self.params
        q = params.q
        c2 = self.c**2
        nstates = min(int(math.ceil(q)) + settings.n_extra_states, 2 * self.lattice.n_points)
        window = (-c2, -1e-12 * c2)

        if initial is None:
            fill = self.initial_density(q, nstates)
            current_dm = fill.density
        else:
            current_dm = initial
        dense = self.dm_to_dense(current_dm)
        energy = self.energy_dense(dense)
        guard = _Safeguard(settings.damping)
        rho_prev = current_dm.one_particle_density()
        converged = False
        last_fill = None
        evals = np.zeros(0)
        it = 0
        for it in range(1, settings.max_iter + 1):
            fock = self.operator_dense(dense)
            evals, fields = self._window_states(fock, nstates)
            fill = aufbau_fill(
                evals, fields, q, window, degeneracy_tol=settings.degeneracy_tol
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
                    accepted = True
                else:
                    guard.reject()
            guard.accept()
            m = self.lattice.n_points
            diag = np.diagonal(trial).real
            rho_new = (
                sum(diag[a * m:(a + 1) * m] for a in range(4)) / self.lattice.cell_volume
            ).reshape(self.lattice.shape)
            de = abs(e_trial - energy)
            drho = float(np.sum(np.abs(rho_new - rho_prev))) * self.lattice.cell_volume
            dense, energy, rho_prev = trial, e_trial, rho_new
            if de <= settings.tol_energy and drho <= settings.tol_density:
                converged = True
                break

        gamma = last_fill.density
        report = self.energy(gamma, last_fill)
        report.eigenvalues = [float(v) for v in evals]
        report.iterations = it
        report.converged = converged

        proj = self.projector(gamma)
        residual = difference_frobenius_norm(proj.sandwich(gamma, +1), gamma)
        near_edge = int(np.sum((evals > -1e-6 * c2) & (evals < window[1])))
        return DfGroundState(
            density=gamma,
            report=report,
            eigenvalues_shifted=[float(v) for v in evals],
            fermi_shifted=last_fill.fermi,
            fermi_gap=last_fill.fermi_gap,
            delta_mass=last_fill.delta_mass,
            projector_residual=float(residual),
            near_window_edge=near_edge,
            c=self.c,
        )


# -- module-level spec surface -------------------------------------------------------


def df_apply_operator(params: ModelParams, dm: DensityMatrix, psi: SpinorField) -> SpinorField:
    return DiracFock(params).apply_operator(dm, psi)


def df_energy(params: ModelParams, dm: DensityMatrix) -> EnergyReport:
    return DiracFock(params).energy(dm)


def positive_projector(
    params: ModelParams, dm: DensityMatrix, psi: SpinorField, sign: int
) -> SpinorField:
    return DiracFock(params).projector(dm).apply(psi, sign)


def tc_map(params: ModelParams, dm: DensityMatrix) -> DensityMatrix:
    return DiracFock(params).tc(dm)[0]


def retract_theta(
    params: ModelParams,
    dm: DensityMatrix,
    radius: float,
    tol: float = 1e-10,
    max_iter: int = 40,
):
    return DiracFock(params).retract(dm, radius, tol=tol, max_iter=max_iter)


def admissibility_check(
    params: ModelParams, dm: DensityMatrix, radius: float, hf_x2_norm: float | None = None
) -> AdmissibilityReport:
    return DiracFock(params).admissibility(dm, radius, hf_x2_norm)


def solve_df(params: ModelParams, settings: ScfSettings | None = None, initial=None) -> DfGroundState:
    return DiracFock(params).solve(settings or ScfSettings(), initial=initial)
