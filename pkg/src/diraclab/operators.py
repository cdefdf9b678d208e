"""Free-operator Fourier symbols: Dirac, Schrodinger, Pauli gradient, projectors.

All operators here are exact per-mode multipliers. The free Dirac operator is

    D_c = -i c (alpha . grad) + c^2 beta,

acting on 4-spinors, whose 4x4 symbol at wavevector k is c (alpha.k) + c^2 beta
with the standard alpha_i / beta matrices. Its square is the scalar multiplier
c^4 + c^2 |k|^2. The Pauli gradient L = -i sigma.grad has symbol sigma.k and
L^2 = -Delta.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg

from .lattice import Lattice, SpinorField

__all__ = [
    "OperatorKind",
    "apply_symbol",
    "apply_multiplier",
    "pauli_dot_k",
    "project_free",
    "spinor_map",
    "sobolev_norm",
    "dense_eigensolve",
    "dense_multiplier_matrix",
    "dense_dirac_matrix",
    "dense_kinetic_matrix",
]

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)

DENSE_DIMENSION_CAP = 8192


@dataclass(frozen=True)
class OperatorKind:
    """Tagged multiplier family: which free operator, and its parameters."""

    tag: str  # dirac | abs_dirac | schrodinger_kinetic | pauli_gradient | sobolev_power | multiplier
    c: float | None = None
    s: float | None = None
    symbol: object = None  # custom scalar multiplier array for tag == "multiplier"

    @classmethod
    def dirac(cls, c: float) -> "OperatorKind":
        return cls("dirac", c=float(c))

    @classmethod
    def abs_dirac(cls, c: float) -> "OperatorKind":
        return cls("abs_dirac", c=float(c))

    @classmethod
    def schrodinger_kinetic(cls) -> "OperatorKind":
        return cls("schrodinger_kinetic")

    @classmethod
    def pauli_gradient(cls) -> "OperatorKind":
        return cls("pauli_gradient")

    @classmethod
    def sobolev_power(cls, s: float) -> "OperatorKind":
        return cls("sobolev_power", s=float(s))

    @classmethod
    def multiplier(cls, symbol: np.ndarray) -> "OperatorKind":
        return cls("multiplier", symbol=symbol)


def _fft(values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values, axes=(-3, -2, -1))


def _ifft(values: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(values, axes=(-3, -2, -1))


def pauli_dot_k(lattice: Lattice, u_hat: np.ndarray) -> np.ndarray:
    """(sigma . k) applied per mode to a 2-component Fourier-space block."""
    kx, ky, kz = lattice.k_vectors()
    a, b = u_hat[0], u_hat[1]
    return np.stack([kz * a + (kx - 1j * ky) * b, (kx + 1j * ky) * a - kz * b])


def _dirac_hat(lattice: Lattice, u_hat: np.ndarray, c: float) -> np.ndarray:
    large, small = u_hat[:2], u_hat[2:]
    top = c * c * large + c * pauli_dot_k(lattice, small)
    bottom = c * pauli_dot_k(lattice, large) - c * c * small
    return np.concatenate([top, bottom])


def dirac_minus_c2_hat(lattice: Lattice, u_hat: np.ndarray, c: float) -> np.ndarray:
    """(D_c - c^2) in Fourier space, assembled without the c^2 cancellation.

    The symbol is [[0, c sigma.k], [c sigma.k, -2c^2]]; evaluating it this way
    keeps the rest-mass subtraction exact at large c.
    """
    large, small = u_hat[:2], u_hat[2:]
    top = c * pauli_dot_k(lattice, small)
    bottom = c * pauli_dot_k(lattice, large) - 2.0 * c * c * small
    return np.concatenate([top, bottom])


def apply_multiplier(field: SpinorField, symbol: np.ndarray) -> SpinorField:
    """Apply a scalar Fourier multiplier to every component."""
    return SpinorField(field.lattice, _ifft(symbol * _fft(field.values)))


def apply_symbol(kind: OperatorKind, u: SpinorField, c: float | None = None) -> SpinorField:
    """Apply a free-operator symbol per mode (no quadrature error).

    Dirac / abs_dirac need 4 components; schrodinger_kinetic, pauli_gradient,
    sobolev_power and custom multipliers act blockwise on 2-component slices.
    """
    if not np.all(np.isfinite(u.values)):
        raise ValueError("NaN or Inf in spinor input")
    lattice = u.lattice
    tag = kind.tag
    if tag in ("dirac", "abs_dirac"):
        cc = kind.c if kind.c is not None else c
        if cc is None:
            raise ValueError(f"{tag} requires a speed of light")
        if u.components != 4:
            raise ValueError(f"{tag} acts on 4-spinors, got {u.components} components")
        if tag == "dirac":
            return SpinorField(lattice, _ifft(_dirac_hat(lattice, _fft(u.values), cc)))
        w = np.sqrt(cc**4 + cc**2 * lattice.k_squared())
        return apply_multiplier(u, w)
    if tag == "schrodinger_kinetic":
        return apply_multiplier(u, 0.5 * lattice.k_squared())
    if tag == "pauli_gradient":
        if u.components == 2:
            return SpinorField(lattice, _ifft(pauli_dot_k(lattice, _fft(u.values))))
        u_hat = _fft(u.values)
        out = np.concatenate(
            [pauli_dot_k(lattice, u_hat[:2]), pauli_dot_k(lattice, u_hat[2:])]
        )
        return SpinorField(lattice, _ifft(out))
    if tag == "sobolev_power":
        return apply_multiplier(u, (1.0 + lattice.k_squared()) ** (kind.s / 2.0))
    if tag == "multiplier":
        return apply_multiplier(u, np.asarray(kind.symbol))
    raise ValueError(f"unknown operator tag {tag!r}")


def dirac_minus_c2(u: SpinorField, c: float) -> SpinorField:
    if u.components != 4:
        raise ValueError("dirac_minus_c2 acts on 4-spinors")
    return SpinorField(u.lattice, _ifft(dirac_minus_c2_hat(u.lattice, _fft(u.values), c)))


def project_free(u: SpinorField, c: float, sign: int) -> SpinorField:
    """Free-picture spectral projector Lambda^+/- = 1/2 +/- D_c / (2|D_c|)."""
    if u.components != 4:
        raise ValueError("free projectors act on 4-spinors")
    if c <= 0:
        raise ValueError("c must be positive")
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    lattice = u.lattice
    u_hat = _fft(u.values)
    w = np.sqrt(c**4 + c**2 * lattice.k_squared())
    out = 0.5 * (u_hat + sign * _dirac_hat(lattice, u_hat, c) / w)
    return SpinorField(lattice, _ifft(out))


def spinor_map(kind: str, u: SpinorField, c: float | None = None) -> SpinorField:
    """Block transforms between 2- and 4-spinors.

    S_c      : 2-spinor u -> (u, L u / 2c), a 4-spinor
    K_L, K_S : zero the small / large block of a 4-spinor (kept 4-component)
    embed_L  : 2-spinor u -> (u, 0)
    """
    lattice = u.lattice
    if kind == "S_c":
        if u.components != 2:
            raise ValueError("S_c takes a 2-component field")
        if c is None or c <= 0:
            raise ValueError("S_c requires c > 0")
        small = _ifft(pauli_dot_k(lattice, _fft(u.values))) / (2.0 * c)
        return SpinorField(lattice, np.concatenate([u.values, small]))
    if kind == "embed_L":
        if u.components != 2:
            raise ValueError("embed_L takes a 2-component field")
        return SpinorField(lattice, np.concatenate([u.values, np.zeros_like(u.values)]))
    if kind in ("K_L", "K_S"):
        if u.components != 4:
            raise ValueError(f"{kind} takes a 4-component field")
        out = u.values.copy()
        if kind == "K_L":
            out[2:] = 0.0
        else:
            out[:2] = 0.0
        return SpinorField(lattice, out)
    raise ValueError(f"unknown spinor map {kind!r}")


def large_block(u: SpinorField) -> SpinorField:
    """The upper 2-spinor of a 4-spinor, as a 2-component field."""
    if u.components != 4:
        raise ValueError("large_block takes a 4-component field")
    return SpinorField(u.lattice, u.values[:2].copy())


def small_block(u: SpinorField) -> SpinorField:
    if u.components != 4:
        raise ValueError("small_block takes a 4-component field")
    return SpinorField(u.lattice, u.values[2:].copy())


def sobolev_norm(u: SpinorField, s: float) -> float:
    """H^s norm via the multiplier (1+|k|^2)^(s/2); s=0 is the L^2 norm."""
    lattice = u.lattice
    weight = (1.0 + lattice.k_squared()) ** s
    u_hat = _fft(u.values)
    total = np.sum(weight * np.abs(u_hat) ** 2) * lattice.cell_volume / lattice.n_points
    return float(np.sqrt(total))


# -- dense-matrix machinery (test oracles and solver internals) -----------------


@lru_cache(maxsize=8)
def _cached_dft_matrix(n_per_axis: int, box_length: float) -> np.ndarray:
    return Lattice(n_per_axis, box_length).dft_matrix()


def dense_multiplier_matrix(lattice: Lattice, symbol: np.ndarray) -> np.ndarray:
    """Dense M x M matrix of a scalar Fourier multiplier in the impulse basis."""
    u = _cached_dft_matrix(lattice.n_per_axis, lattice.box_length)
    return (u.conj().T * symbol.ravel()) @ u


def dense_kinetic_matrix(lattice: Lattice) -> np.ndarray:
    """Dense -Delta/2 on one component."""
    return dense_multiplier_matrix(lattice, 0.5 * lattice.k_squared())


def dense_dirac_matrix(lattice: Lattice, c: float, subtract_rest_mass: bool = False) -> np.ndarray:
    """Dense 4M x 4M free Dirac matrix (optionally with c^2 already removed)."""
    m = lattice.n_points
    u = _cached_dft_matrix(lattice.n_per_axis, lattice.box_length)
    kx, ky, kz = (k.ravel() for k in lattice.k_vectors())
    out = np.zeros((4 * m, 4 * m), dtype=np.complex128)

    def block(symbol):
        return (u.conj().T * symbol) @ u

    sk = [
        [kz, kx - 1j * ky],
        [kx + 1j * ky, -kz],
    ]
    for a in range(2):
        for b in range(2):
            off = block(c * sk[a][b])
            out[a * m:(a + 1) * m, (2 + b) * m:(3 + b) * m] = off
            out[(2 + a) * m:(3 + a) * m, b * m:(1 + b) * m] = off
    eye = np.eye(m)
    if subtract_rest_mass:
        for a in (2, 3):
            out[a * m:(a + 1) * m, a * m:(a + 1) * m] = -2.0 * c * c * eye
    else:
        for a in (0, 1):
            out[a * m:(a + 1) * m, a * m:(a + 1) * m] = c * c * eye
        for a in (2, 3):
            out[a * m:(a + 1) * m, a * m:(a + 1) * m] = -c * c * eye
    return out


def _operator_to_matrix(op: Callable[[np.ndarray], np.ndarray], d: int) -> np.ndarray:
    mat = np.empty((d, d), dtype=np.complex128)
    e = np.zeros(d, dtype=np.complex128)
    for j in range(d):
        e[j] = 1.0
        mat[:, j] = op(e)
        e[j] = 0.0
    return mat


def dense_eigensolve(
    op,
    d: int,
    hermitian_tol: float = 1e-10,
    dimension_cap: int = DENSE_DIMENSION_CAP,
    rng: np.random.Generator | None = None,
):
    """Full Hermitian eigendecomposition oracle.

    ``op`` is either a dense matrix or a closure acting on C^d vectors. The
    operator is checked for Hermiticity on sampled pairs, eigenvalues come back
    ascending with deterministic tie order, and the residual ||A V - V L|| is
    verified against 1e-10 * ||A||.
    """
    if d > dimension_cap:
        raise ValueError(f"dimension {d} exceeds dense cap {dimension_cap}")
    mat = np.asarray(op) if isinstance(op, np.ndarray) else _operator_to_matrix(op, d)
    if mat.shape != (d, d):
        raise ValueError(f"operator matrix has shape {mat.shape}, expected ({d}, {d})")

    rng = rng or np.random.default_rng(0)
    scale = max(float(np.linalg.norm(mat, ord="fro")) / np.sqrt(d), 1e-30)
    if d <= 512:
        worst = float(np.max(np.abs(mat - mat.conj().T)))
    else:
        idx = rng.choice(d, size=(64, 2))
        worst = max(abs(mat[i, j] - np.conj(mat[j, i])) for i, j in idx)
    if worst > hermitian_tol * max(1.0, scale):
        raise ValueError(f"operator is not Hermitian: max asymmetry {worst:.3e}")

    evals, evecs = scipy.linalg.eigh((mat + mat.conj().T) / 2.0)
    residual = np.linalg.norm(mat @ evecs - evecs * evals)
    if residual > 1e-10 * max(np.linalg.norm(mat), 1.0):
        raise RuntimeError(f"eigendecomposition residual {residual:.3e} too large")
    return evals, evecs
