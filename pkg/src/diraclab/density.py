"""Rank-q density matrices: occupations, orbitals, filling and norms.

A DensityMatrix is gamma = sum_n lam_n |u_n><u_n| with orthonormal orbitals
and occupations in [0, 1]. Norms of gamma (and of differences of gammas) are
always evaluated through rank-sized Gram matrices sandwiched by the relevant
Fourier multiplier; dense M x M kernels appear only in test oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice, SpinorField

__all__ = [
    "DensityMatrix",
    "AufbauResult",
    "aufbau_fill",
    "one_particle_density",
    "matrix_norms",
    "sandwiched_trace_norm",
    "sandwiched_gram",
    "difference_trace_norm",
    "difference_frobenius_norm",
]


class DensityMatrix:
    """Occupations + orthonormal orbitals; all 2- or all 4-component."""

    __slots__ = ("lattice", "orbitals", "occupations")

    def __init__(
        self,
        lattice: Lattice,
        orbitals: np.ndarray,
        occupations: np.ndarray,
        validate: bool = True,
        occupation_tol: float = 1e-9,
        gram_tol: float = 1e-10,
    ):
        orbitals = np.asarray(orbitals, dtype=np.complex128)
        occupations = np.atleast_1d(np.asarray(occupations, dtype=np.float64))
        if orbitals.ndim == 4:  # a single orbital
            orbitals = orbitals[None]
        if orbitals.size and orbitals.shape[1] not in (2, 4):
            raise ValueError("orbitals must be 2- or 4-component spinors")
        if orbitals.shape[0] != occupations.shape[0]:
            raise ValueError("orbital / occupation count mismatch")
        self.lattice = lattice
        self.orbitals = orbitals
        self.occupations = occupations
        if validate and self.rank:
            if occupations.min() < -occupation_tol or occupations.max() > 1.0 + occupation_tol:
                raise ValueError(
                    f"occupations outside [0, 1]: range "
                    f"[{occupations.min():.3e}, {occupations.max():.3e}]"
                )
            gram = self.gram()
            err = np.max(np.abs(gram - np.eye(self.rank)))
            if err > gram_tol:
                raise ValueError(f"orbitals are not orthonormal: Gram error {err:.3e}")

    # -- constructors ----------------------------------------------------------

    @classmethod
    def empty(cls, lattice: Lattice, components: int = 2) -> "DensityMatrix":
        shape = (0, components, *lattice.shape)
        return cls(lattice, np.zeros(shape, np.complex128), np.zeros(0))

    @classmethod
    def from_fields(cls, fields, occupations, **kw) -> "DensityMatrix":
        if not fields:
            raise ValueError("from_fields needs at least one orbital")
        lattice = fields[0].lattice
        orbitals = np.stack([f.values for f in fields])
        return cls(lattice, orbitals, np.asarray(occupations, float), **kw)

    @classmethod
    def from_operator_basis(
        cls,
        lattice: Lattice,
        basis: np.ndarray,
        coeff: np.ndarray,
        gram: np.ndarray | None = None,
        occupation_tol: float = 1e-9,
        rank_tol: float = 0.0,
        clip_occupations: bool = False,
    ) -> "DensityMatrix":
        """Exact eigendecomposition of the operator  B C B^dag  with B the
        (possibly non-orthonormal) stacked basis and C Hermitian.

        The basis is Loewdin-orthonormalized with G^{-1/2}; the coefficient
        matrix in the new basis is G^{1/2} C G^{1/2}, whose eigenvalues become
        the occupations. Raises on a singular basis Gram. With
        ``clip_occupations`` eigenvalues within occupation_tol of [0, 1] are
        clipped onto the interval (values beyond still raise).
        """
        h3 = lattice.cell_volume
        r = basis.shape[0]
        flat = basis.reshape(r, -1)
        gram = h3 * (flat.conj() @ flat.T) if gram is None else gram
        gvals, gvecs = np.linalg.eigh((gram + gram.conj().T) / 2.0)
        if gvals.min() <= 1e-12 * max(gvals.max(), 1.0):
            raise ValueError(f"rank collapse: basis Gram eigenvalue {gvals.min():.3e}")
        g_half = (gvecs * np.sqrt(gvals)) @ gvecs.conj().T
        g_inv_half = (gvecs / np.sqrt(gvals)) @ gvecs.conj().T
        core = g_half @ ((coeff + coeff.conj().T) / 2.0) @ g_half.conj().T
        occ, rot = np.linalg.eigh((core + core.conj().T) / 2.0)
        if clip_occupations:
            if occ.min() < -occupation_tol or occ.max() > 1.0 + occupation_tol:
                raise ValueError(
                    f"projected occupations outside [0, 1] beyond {occupation_tol:.0e} slack"
                )
            occ = np.clip(occ, 0.0, 1.0)
        mix = g_inv_half @ rot
        new = np.tensordot(mix.T, basis, axes=(1, 0))
        keep = np.abs(occ) > rank_tol
        order = np.argsort(occ[keep])[::-1]
        return cls(
            lattice,
            new[keep][order],
            occ[keep][order],
            occupation_tol=occupation_tol,
        )

    # -- basic queries ----------------------------------------------------------

    @property
    def rank(self) -> int:
        return self.orbitals.shape[0]

    @property
    def components(self) -> int:
        return self.orbitals.shape[1] if self.rank else 0

    def trace(self) -> float:
        return float(self.occupations.sum())

    def gram(self) -> np.ndarray:
        flat = self.orbitals.reshape(self.rank, -1)
        return self.lattice.cell_volume * (flat.conj() @ flat.T)

    def orbital(self, n: int) -> SpinorField:
        return SpinorField(self.lattice, self.orbitals[n].copy())

    def iter_orbitals(self):
        for lam, orb in zip(self.occupations, self.orbitals):
            yield float(lam), orb

    def one_particle_density(self) -> np.ndarray:
        """rho(x) = sum_n lam_n |u_n(x)|^2, a real grid field."""
        if self.rank == 0:
            return np.zeros(self.lattice.shape)
        dens = np.einsum(
            "n,ncxyz,ncxyz->xyz", self.occupations, self.orbitals.conj(), self.orbitals
        )
        return dens.real

    def scaled(self, factor: float) -> "DensityMatrix":
        return DensityMatrix(self.lattice, self.orbitals, self.occupations * factor)

    def map_orbitals(self, fn, components: int | None = None) -> np.ndarray:
        """Apply a field-level map to every orbital, returning stacked values."""
        out = [fn(SpinorField(self.lattice, o)).values for o in self.orbitals]
        if not out:
            comp = components or self.components or 2
            return np.zeros((0, comp, *self.lattice.shape), np.complex128)
        return np.stack(out)


@dataclass
class AufbauResult:
    density: DensityMatrix
    fermi: float
    fermi_gap: float
    delta_mass: float
    n_in_window: int


def aufbau_fill(
    eigenvalues: np.ndarray,
    eigenvectors,
    q: float,
    window: tuple[float, float],
    degeneracy_tol: float | None = None,
    integer_fill: bool = False,
) -> AufbauResult:
    """Occupy the lowest in-window eigenstates until the electron budget q is spent.

    A degenerate level straddling the budget receives the remainder split
    equally across its members (the fractional Fermi occupation delta); with
    ``integer_fill`` the remainder instead goes to the first members in order,
    which is the symmetry-broken initial guess used by the solvers.
    """
    if q < 0:
        raise ValueError("electron budget must be nonnegative")
    eigenvalues = np.asarray(eigenvalues, float)
    if eigenvalues.size and np.any(np.diff(eigenvalues) < -1e-12):
        raise ValueError("eigenvalues must be sorted ascending")
    fields = list(eigenvectors)
    if len(fields) != eigenvalues.size:
        raise ValueError("eigenvalue / eigenvector count mismatch")
    lo, hi = window
    if not (lo < hi):
        raise ValueError(f"empty occupation window ({lo}, {hi})")

    inside = [(lam, f) for lam, f in zip(eigenvalues, fields) if lo < lam < hi]
    lattice = fields[0].lattice if fields else None
    if q == 0 or not inside:
        if q > 0:
            raise ValueError(f"no eigenvalues inside window ({lo}, {hi}) for q={q}")
        comp = fields[0].components if fields else 2
        return AufbauResult(DensityMatrix.empty(lattice, comp), math.nan, math.nan, 0.0, len(inside))

    vals = np.array([lam for lam, _ in inside])
    if degeneracy_tol is None:
        degeneracy_tol = 1e-8 * max(1.0, float(np.abs(vals).max()))

    # group by degeneracy
    groups: list[list[int]] = [[0]]
    for i in range(1, len(vals)):
        if vals[i] - vals[groups[-1][0]] < degeneracy_tol:
            groups[-1].append(i)
        else:
            groups.append([i])

    occ = np.zeros(len(vals))
    budget = float(q)
    fermi = math.nan
    delta_mass = 0.0
    filled_groups = 0
    for g in groups:
        if budget <= 0:
            break
        size = len(g)
        if budget >= size - 1e-12:
            occ[g] = 1.0
            budget -= size
            fermi = vals[g[-1]]
        else:
            if integer_fill:
                whole = int(budget)
                for j in range(whole):
                    occ[g[j]] = 1.0
                frac = budget - whole
                if frac > 1e-12:
                    occ[g[whole]] = frac
                    delta_mass = frac
            else:
                occ[g] = budget / size
                delta_mass = budget
            budget = 0.0
            fermi = vals[g[0]]
        filled_groups += 1
    if budget > 1e-9:
        raise ValueError(
            f"only {len(vals)} in-window states for electron budget q={q}"
        )

    occupied = occ > 0
    nonzero_idx = np.flatnonzero(occupied)
    density = DensityMatrix.from_fields(
        [inside[i][1] for i in nonzero_idx], occ[nonzero_idx]
    )
    # gap to the next level of the operator, windowed or not
    above = eigenvalues[eigenvalues > fermi + degeneracy_tol]
    gap = float(above.min() - fermi) if above.size else math.inf
    return AufbauResult(density, float(fermi), gap, float(delta_mass), len(inside))


def one_particle_density(density_matrix: DensityMatrix) -> np.ndarray:
    return density_matrix.one_particle_density()


# -- norms through rank-sized Gram matrices --------------------------------------


def sandwiched_gram(
    lattice: Lattice, orbitals: np.ndarray, multiplier: np.ndarray | None
) -> np.ndarray:
    """Gram matrix <B u_m, B u_n> for the scalar Fourier multiplier B."""
    r = orbitals.shape[0]
    if r == 0:
        return np.zeros((0, 0))
    hats = np.fft.fftn(orbitals, axes=(-3, -2, -1))
    if multiplier is not None:
        hats = hats * multiplier
    flat = hats.reshape(r, -1)
    return (lattice.cell_volume / lattice.n_points) * (flat.conj() @ flat.T)


def sandwiched_trace_norm(
    lattice: Lattice,
    orbitals: np.ndarray,
    coeff: np.ndarray,
    multiplier: np.ndarray | None,
) -> float:
    """Trace norm || B (U C U^dag) B ||_S1 via the rank-sized sandwiched Gram.

    The nonzero spectrum of B U C U^dag B equals that of the Hermitian matrix
    G^{1/2} C G^{1/2} with G = <B u_m, B u_n>.
    """
    if orbitals.shape[0] == 0:
        return 0.0
    gram = sandwiched_gram(lattice, orbitals, multiplier)
    gvals, gvecs = np.linalg.eigh((gram + gram.conj().T) / 2.0)
    g_half = (gvecs * np.sqrt(np.clip(gvals, 0.0, None))) @ gvecs.conj().T
    core = g_half @ ((coeff + coeff.conj().T) / 2.0) @ g_half.conj().T
    return float(np.sum(np.abs(np.linalg.eigvalsh(core))))


def schatten_one_weighted(
    lattice: Lattice,
    density_matrix: DensityMatrix,
    multiplier: np.ndarray,
) -> float:
    """One-sided trace norm || gamma B ||_S1 for a scalar multiplier B."""
    if density_matrix.rank == 0:
        return 0.0
    gram = sandwiched_gram(lattice, density_matrix.orbitals, multiplier)
    lam = density_matrix.occupations
    core = (lam[:, None] * gram) * lam[None, :]
    sing_sq = np.clip(np.linalg.eigvalsh((core + core.conj().T) / 2.0), 0.0, None)
    return float(np.sum(np.sqrt(sing_sq)))


def _stack_difference(a: DensityMatrix, b: DensityMatrix):
    orbs = np.concatenate([a.orbitals, b.orbitals]) if b.rank else a.orbitals
    coeff = np.diag(np.concatenate([a.occupations, -b.occupations]))
    return orbs, coeff


def difference_trace_norm(
    a: DensityMatrix, b: DensityMatrix, multiplier: np.ndarray | None = None
) -> float:
    """|| B (a - b) B ||_S1 for two low-rank density matrices."""
    orbs, coeff = _stack_difference(a, b)
    return sandwiched_trace_norm(a.lattice, orbs, coeff, multiplier)


def difference_frobenius_norm(a: DensityMatrix, b: DensityMatrix) -> float:
    """Hilbert-Schmidt norm || a - b ||_F from the joint Gram matrix."""
    orbs, coeff = _stack_difference(a, b)
    if orbs.shape[0] == 0:
        return 0.0
    gram = sandwiched_gram(a.lattice, orbs, None)
    cg = coeff @ gram
    return float(np.sqrt(max(np.einsum("ij,ji->", cg, cg).real, 0.0)))


def xc_multiplier(lattice: Lattice, c: float) -> np.ndarray:
    """|D_c|^{1/2} multiplier (c^4 + c^2 |k|^2)^{1/4}."""
    return (c**4 + c**2 * lattice.k_squared()) ** 0.25


def xs_multiplier(lattice: Lattice, s: float) -> np.ndarray:
    """(1 - Delta)^{s/4} multiplier (1 + |k|^2)^{s/4}."""
    return (1.0 + lattice.k_squared()) ** (s / 4.0)


def matrix_norms(
    density_matrix: DensityMatrix,
    which: str,
    p: float = 1.0,
    s: float = 1.0,
    c: float = 1.0,
) -> float:
    """Norm family of a density matrix.

    which = "trace"     : sum of occupations
            "schatten"  : (sum lam^p)^(1/p)
            "X"         : ||(1-Delta)^{s/4} gamma (1-Delta)^{s/4}||_S1
            "X_c"       : same with the |D_c|^{1/2} multiplier
    """
    lattice = density_matrix.lattice
    if which == "trace":
        return density_matrix.trace()
    if which == "schatten":
        if p < 1:
            raise ValueError("schatten order must satisfy p >= 1")
        lam = np.abs(density_matrix.occupations)
        return float(np.sum(lam**p) ** (1.0 / p)) if lam.size else 0.0
    if which == "X":
        mult = xs_multiplier(lattice, s)
    elif which == "X_c":
        mult = xc_multiplier(lattice, c)
    else:
        raise ValueError(f"unknown norm kind {which!r}")
    coeff = np.diag(density_matrix.occupations)
    return sandwiched_trace_norm(lattice, density_matrix.orbitals, coeff, mult)
