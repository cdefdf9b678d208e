"""Periodic cubic box with plane-wave collocation.

Everything in the package lives on one of these lattices: fields are sampled
on the n^3 collocation grid, derivatives are exact Fourier multipliers, and
pointwise products are evaluated on the grid without dealiasing.

Conventions
-----------
Fourier coefficients follow the continuum-style normalization

    f_hat(k) = h^3 * sum_x f(x) exp(-i k.x),    f(x) = (1/|box|) * sum_k f_hat(k) exp(i k.x)

with h = box_length / n, so that the convolution theorem (f*g)_hat = f_hat * g_hat
holds exactly for the periodic convolution  (f*g)(x) = h^3 sum_y f(y) g(x-y).
Plain ``numpy.fft`` transforms are used internally; the h^3 factors only enter
at quadrature boundaries.

Inner products are the L^2 quadrature  <f, g> = h^3 sum_x conj(f) g.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Lattice", "SpinorField", "build_lattice"]


@dataclass(frozen=True)
class Lattice:
    """Uniform periodic grid on [0, box_length)^3 with its wavevector tables."""

    n_per_axis: int
    box_length: float
    k_axis: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        n, length = self.n_per_axis, self.box_length
        if n < 4 or n % 2 != 0:
            raise ValueError(f"n_per_axis must be an even integer >= 4, got {n}")
        if not (length > 0):
            raise ValueError(f"box_length must be positive, got {length}")
        # signed wavevectors (2*pi/L) * {0, 1, ..., n/2-1, -n/2, ..., -1} per axis;
        # the Nyquist row -n/2 is unpaired and kept with its stored sign.
        k1 = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
        object.__setattr__(self, "k_axis", k1)

    @property
    def n_points(self) -> int:
        return self.n_per_axis**3

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_per_axis

    @property
    def cell_volume(self) -> float:
        """Quadrature weight h^3 of one grid point."""
        return self.spacing**3

    @property
    def volume(self) -> float:
        return self.box_length**3

    @property
    def shape(self) -> tuple[int, int, int]:
        n = self.n_per_axis
        return (n, n, n)

    def k_vectors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Component grids (kx, ky, kz), each of shape (n, n, n)."""
        k = self.k_axis
        return np.meshgrid(k, k, k, indexing="ij")

    def k_squared(self) -> np.ndarray:
        kx, ky, kz = self.k_vectors()
        return kx**2 + ky**2 + kz**2

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position grids (x, y, z), each of shape (n, n, n)."""
        x1 = np.arange(self.n_per_axis) * self.spacing
        return np.meshgrid(x1, x1, x1, indexing="ij")

    # -- scalar-field transforms ------------------------------------------------

    def to_fourier(self, f: np.ndarray) -> np.ndarray:
        """Continuum-normalized Fourier coefficients of a grid field."""
        return self.cell_volume * np.fft.fftn(f, axes=(-3, -2, -1))

    def to_position(self, f_hat: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(f_hat, axes=(-3, -2, -1)) / self.cell_volume

    def convolve(self, f: np.ndarray, kernel_hat: np.ndarray) -> np.ndarray:
        """Periodic convolution of f with the kernel given by its multiplier."""
        return np.fft.ifftn(kernel_hat * np.fft.fftn(f, axes=(-3, -2, -1)), axes=(-3, -2, -1))

    def integrate(self, f: np.ndarray) -> complex:
        return self.cell_volume * np.sum(f)

    def dft_matrix(self) -> np.ndarray:
        """Unitary DFT matrix U with (U psi_vec) = fftn(psi)/sqrt(M), flattened C-order.

        Used only by the dense-operator builders; cached by callers.
        """
        n = self.n_per_axis
        j = np.arange(n)
        w = np.exp(-2j * np.pi * np.outer(j, j) / n)
        u = np.einsum("ad,be,cf->abcdef", w, w, w).reshape(self.n_points, self.n_points)
        return u / np.sqrt(self.n_points)


def build_lattice(n_per_axis: int, box_length: float) -> Lattice:
    """Construct the periodic discretization shared by all fields and operators."""
    return Lattice(int(n_per_axis), float(box_length))


class SpinorField:
    """A 2- or 4-component complex field sampled on a lattice.

    values has shape (components, n, n, n). Left/large block is components
    [0, 1], the small block of a 4-spinor is [2, 3].
    """

    __slots__ = ("lattice", "values")

    def __init__(self, lattice: Lattice, values: np.ndarray):
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (2, *lattice.shape) and values.shape != (4, *lattice.shape):
            raise ValueError(f"spinor values must have shape (2|4, n, n, n), got {values.shape}")
        self.lattice = lattice
        self.values = values

    @property
    def components(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zero(cls, lattice: Lattice, components: int) -> "SpinorField":
        return cls(lattice, np.zeros((components, *lattice.shape), dtype=np.complex128))

    def copy(self) -> "SpinorField":
        return SpinorField(self.lattice, self.values.copy())

    def inner(self, other: "SpinorField") -> complex:
        """L^2 inner product <self, other>, antilinear in self."""
        if other.components != self.components:
            raise ValueError("component mismatch in inner product")
        return self.lattice.cell_volume * np.vdot(self.values, other.values)

    def norm(self) -> float:
        return float(np.sqrt(self.lattice.cell_volume) * np.linalg.norm(self.values))

    def __add__(self, other: "SpinorField") -> "SpinorField":
        return SpinorField(self.lattice, self.values + other.values)

    def __sub__(self, other: "SpinorField") -> "SpinorField":
        return SpinorField(self.lattice, self.values - other.values)

    def __mul__(self, scalar) -> "SpinorField":
        return SpinorField(self.lattice, self.values * scalar)

    __rmul__ = __mul__

    def pointwise_dot(self, other: "SpinorField") -> np.ndarray:
        """Pointwise C^m inner product conj(self).other, a scalar grid field."""
        return np.sum(self.values.conj() * other.values, axis=0)

    def to_vector(self) -> np.ndarray:
        """Coordinates in the orthonormal impulse basis (for dense operators)."""
        return np.sqrt(self.lattice.cell_volume) * self.values.ravel()

    @classmethod
    def from_vector(cls, lattice: Lattice, components: int, vec: np.ndarray) -> "SpinorField":
        vals = vec.reshape(components, *lattice.shape) / np.sqrt(lattice.cell_volume)
        return cls(lattice, vals)


def random_field(
    lattice: Lattice,
    components: int,
    rng: np.random.Generator,
    smoothness: float = 2.0,
    normalize: bool = True,
) -> SpinorField:
    """Seeded random spinor with Fourier coefficients ~ (1+|k|^2)^(-s/2-3/4) * gaussian.

    Samples are H^s-normalizable for s < smoothness; used throughout the tests
    and the inequality verification suite.
    """
    shape = (components, *lattice.shape)
    coeff = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    decay = (1.0 + lattice.k_squared()) ** (-smoothness / 2.0 - 0.75)
    vals = np.fft.ifftn(coeff * decay, axes=(-3, -2, -1))
    f = SpinorField(lattice, vals)
    if normalize:
        nrm = f.norm()
        if nrm > 0:
            f = f * (1.0 / nrm)
    return f
