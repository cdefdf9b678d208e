"""diraclab: a periodic-box Fourier laboratory for Dirac-Fock vs Hartree-Fock.

Everything runs on a cubic collocation lattice: free operators are exact
Fourier multipliers, mean fields are FFT convolutions, and both the
relativistic (4-spinor Dirac) and nonrelativistic (2-spinor) ground states
are found by damped self-consistent iterations with dense spectral oracles.
The harness reproduces the c^-2 gap between the two ground-state energies,
the leading correction (mass-velocity + Darwin + spin-orbit), and the
projector-retraction machinery with its contraction diagnostics.
"""

from .coulomb import CoulombKernel, NuclearModel, apply_mean_field, coulomb_convolve, nuclear_potential
from .correction import (
    CorrectionReport,
    commutator_residual,
    e2_decompose,
    e2_report,
    e2_tilde_df,
    e2_total,
)
from .density import AufbauResult, DensityMatrix, aufbau_fill, matrix_norms, one_particle_density
from .df import (
    AdmissibilityReport,
    DfGroundState,
    DiracFock,
    MeanFieldProjector,
    RetractionTrace,
    admissibility_check,
    df_apply_operator,
    df_energy,
    lambda_sandwich,
    positive_projector,
    retract_theta,
    solve_df,
    tc_map,
)
from .harness import SweepConfig, SweepResult, SweepRow, fit_slope, load_config, run_sweep, verify_suite
from .hf import EnergyReport, HartreeFock, hf_apply_fock, hf_energy, solve_hf
from .lattice import Lattice, SpinorField, build_lattice, random_field
from .operators import (
    OperatorKind,
    apply_symbol,
    dense_eigensolve,
    project_free,
    sobolev_norm,
    spinor_map,
)
from .params import ModelParams, ScfSettings
from .renorm import TO_NONRELATIVISTIC, TO_RELATIVISTIC, OverlapPack, expansion_residual, renormalize

__version__ = "0.1.0"
