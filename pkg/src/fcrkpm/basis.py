"""Monomial basis, cubic B-spline kernel, and the seam-adjusted node arrays.

The reproducing kernel approximation is built from a vector of monomials
H(x) = [1, x, y, x^2, xy, y^2, ...] up to total degree n and a compactly
supported kernel phi_a with tensor-product cubic B-spline profile

    phi(z) = 2/3 - 4 z^2 + 4 z^3              0 <= z <= 1/2
           = 4/3 - 4 z + 4 z^2 - (4/3) z^3    1/2 <= z <= 1     z = |x|/a
           = 0                                z > 1

which is C^2 across both breakpoints.

On the periodic box the convolution kernels must be positioned so their
zero coincides with the box origin: the per-node argument is the
minimal-image offset xi of the node index (grid.wrapped_offsets), which is
pointwise equivalent to splitting the centered function into 2^d corner
blocks and reordering them onto the box.  For each basis entry p the table
stores the adjusted monomial field H_p, the kernel-weighted H_p^a, its
reflection Hbar_p^a(xi) = H_p^a(-xi), and the cached spectra of the two
kernel-weighted fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PeriodicGrid
from .spectral import FFTProvider, forward

__all__ = [
    "BasisIndex",
    "enumerate_basis",
    "KernelSpec",
    "eval_kernel_1d",
    "eval_kernel",
    "gradient_selector",
    "value_selector",
    "BasisTable",
    "build_basis_table",
]


@dataclass(frozen=True)
class BasisIndex:
    """Graded monomial basis up to total degree n in d dimensions.

    Exponent tuples are ordered by total degree, and within a degree by the
    x-exponent descending, then the y-exponent descending; this reproduces
    the 2D sequence [1, x, y, x^2, xy, y^2] and fixes the 3D degree-2 order
    as [x^2, xy, xz, y^2, yz, z^2].
    """

    degree: int
    dim: int
    exponents: tuple[tuple[int, ...], ...]

    @property
    def size(self) -> int:
        return len(self.exponents)

    @property
    def min_neighbors(self) -> int:
        """Minimum non-degenerate neighbor count for an invertible moment
        matrix (equals the basis size)."""
        return self.size


def enumerate_basis(n: int, d: int) -> BasisIndex:
    """Enumerate the monomial exponent tuples for degree n in d dimensions."""
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2, or 3, got {d}")
    exps = []
    for total in range(n + 1):
        level = [
            alpha
            for alpha in np.ndindex(*([total + 1] * d))
            if sum(alpha) == total
        ]
        level.sort(key=lambda alpha: tuple(-a for a in alpha))
        exps.extend(tuple(alpha) for alpha in level)
    return BasisIndex(degree=n, dim=d, exponents=tuple(exps))


@dataclass(frozen=True)
class KernelSpec:
    """Tensor-product cubic B-spline kernel with per-axis support a_k."""

    support: tuple[float, ...]

    def __post_init__(self):
        if any(a <= 0 for a in self.support):
            raise ValueError(f"kernel supports must be positive, got {self.support}")

    @property
    def dim(self) -> int:
        return len(self.support)


def eval_kernel_1d(x, a: float):
    """Cubic B-spline profile in z = |x|/a (vectorized).

    Both polynomial branches are kept in exact rational-coefficient form so
    they agree at z = 1/2 (value 1/6, matching first and second derivatives).
    """
    z = np.abs(np.asarray(x, dtype=float)) / a
    inner = 2.0 / 3.0 - 4.0 * z**2 + 4.0 * z**3
    outer = 4.0 / 3.0 - 4.0 * z + 4.0 * z**2 - (4.0 / 3.0) * z**3
    return np.where(z <= 0.5, inner, np.where(z < 1.0, outer, 0.0))


def eval_kernel(coords, kernel: KernelSpec):
    """Tensor-product kernel value at per-axis coordinate arrays."""
    phi = eval_kernel_1d(coords[0], kernel.support[0])
    for x, a in zip(coords[1:], kernel.support[1:]):
        phi = phi * eval_kernel_1d(x, a)
    return phi


def value_selector(basis: BasisIndex) -> np.ndarray:
    """H(0): selects the first row of the inverse moment matrix."""
    e = np.zeros(basis.size)
    e[0] = 1.0
    return e


def gradient_selector(axis: int, basis: BasisIndex) -> np.ndarray:
    """Constant selector vector for the implicit gradient along an axis.

    Carries -1 at the position of that axis's degree-1 monomial; applied to
    the inverse moment matrix it yields the implicit-gradient coefficient
    row (minus the (axis+2)-th row).
    """
    if basis.degree < 1:
        raise ValueError("gradient reproduction needs basis degree >= 1")
    if not 0 <= axis < basis.dim:
        raise ValueError(f"axis {axis} out of range for dim {basis.dim}")
    target = tuple(1 if k == axis else 0 for k in range(basis.dim))
    sel = np.zeros(basis.size)
    sel[basis.exponents.index(target)] = -1.0
    return sel


def monomial(coords, alpha) -> np.ndarray:
    """prod_k coords[k] ** alpha[k] over grid-shaped coordinate arrays."""
    out = np.ones(coords[0].shape)
    for x, a in zip(coords, alpha):
        if a:
            out = out * x**a
    return out


@dataclass
class BasisTable:
    """Seam-adjusted per-entry node arrays and their cached spectra.

    H[p] is the adjusted monomial field, Ha[p] = H[p] * phi_a(xi) the
    kernel-weighted field, Hbar_a[p] its reflection, and hat_Ha / hat_Hbar_a
    the spectra used by every convolution-based operator.  `release_real()`
    drops the real-space arrays once the moment precomputation no longer
    needs them.
    """

    grid: PeriodicGrid
    basis: BasisIndex
    kernel: KernelSpec
    H: list[np.ndarray]
    Ha: list[np.ndarray]
    Hbar_a: list[np.ndarray]
    hat_Ha: list[np.ndarray]
    hat_Hbar_a: list[np.ndarray]

    @property
    def size(self) -> int:
        return self.basis.size

    def release_real(self):
        """Drop H, Ha, Hbar_a; only the spectra persist."""
        self.H = []
        self.Ha = []
        self.Hbar_a = []

    def persistent_nbytes(self) -> int:
        arrays = self.H + self.Ha + self.Hbar_a + self.hat_Ha + self.hat_Hbar_a
        return sum(a.nbytes for a in arrays)


def build_basis_table(
    grid: PeriodicGrid,
    basis: BasisIndex,
    kernel: KernelSpec,
    provider: FFTProvider | None = None,
) -> BasisTable:
    """Evaluate the adjusted arrays on the lattice and cache their spectra.

    Raises:
        ValueError: if any kernel support reaches half the box period (a
            shape function would wrap across the periodic seam).
    """
    if basis.dim != grid.dim or kernel.dim != grid.dim:
        raise ValueError("grid, basis, and kernel dimensions must agree")
    for k, (a, L) in enumerate(zip(kernel.support, grid.length)):
        if a >= L / 2:
            raise ValueError(
                f"kernel support {a} along axis {k} reaches half the box "
                f"period {L}; convolutions would wrap"
            )
    xi = grid.wrapped_offsets()
    xi_neg = [-x for x in xi]
    phi = eval_kernel(xi, kernel)
    phi_neg = eval_kernel(xi_neg, kernel)
    H, Ha, Hbar = [], [], []
    for alpha in basis.exponents:
        hp = monomial(xi, alpha)
        H.append(hp)
        Ha.append(hp * phi)
        Hbar.append(monomial(xi_neg, alpha) * phi_neg)
    hat_Ha = [forward(a, provider) for a in Ha]
    hat_Hbar = [forward(a, provider) for a in Hbar]
    return BasisTable(
        grid=grid,
        basis=basis,
        kernel=kernel,
        H=H,
        Ha=Ha,
        Hbar_a=Hbar,
        hat_Ha=hat_Ha,
        hat_Hbar_a=hat_Hbar,
    )
