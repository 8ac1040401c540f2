"""Generalized Gell-Mann basis for traceless Hermitian operators on N levels.

Every Hermitian operator A on an N-level system splits into a trace part and a
traceless part expanded in d = N^2 - 1 generators,

    A = (a0 / N) * I + (1/2) * sum_j a_j sigma_j,      a_j = Tr(sigma_j A),

where the generators are orthonormalized as Tr(sigma_i sigma_j) = 2 delta_ij.
For N = 2 the generators are the Pauli matrices; for N = 3 the Gell-Mann
matrices.  The generator order used throughout the package is

    symmetric pairs (j, k), j < k   ->   |j><k| + |k><j|
    antisymmetric pairs (j, k)      ->   -i |j><k| + i |k><j|
    diagonal l = 1 .. N-1           ->   sqrt(2/(l(l+1))) (sum_{j<l} |j><j| - l |l><l|)

Density matrices use the same expansion with a0 = 1; the coefficient vector v
is the (generalized) Bloch vector.  The antisymmetric and totally symmetric
structure constants f_ijk and g_ijk encode commutators and anticommutators of
the generators and are precomputed (and cached) per dimension.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "StructureConstants",
    "gell_mann_matrices",
    "structure_constants",
    "bloch_dim",
    "to_bloch",
    "from_bloch",
    "hermitian_to_coeffs",
    "coeffs_to_hermitian",
]

# Tolerance for "this float is really zero" checks on imaginary residues and
# Hermiticity defects.
_ATOL = 1e-12


def bloch_dim(n_levels: int) -> int:
    """Number of Bloch components d = N^2 - 1."""
    return n_levels * n_levels - 1


def gell_mann_matrices(n_levels: int) -> np.ndarray:
    """Stack of the d = N^2 - 1 generalized Gell-Mann matrices, shape (d, N, N).

    Ordering: all symmetric pair generators, then all antisymmetric pair
    generators (pairs (j, k) with j < k in lexicographic order), then the
    N - 1 diagonal generators.  Normalization Tr(sigma_i sigma_j) = 2 delta_ij.
    """
    if n_levels < 2:
        raise ValueError(f"need at least two levels, got {n_levels}")
    n = n_levels
    mats = []
    for j in range(n):
        for k in range(j + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[j, k] = 1.0
            m[k, j] = 1.0
            mats.append(m)
    for j in range(n):
        for k in range(j + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[j, k] = -1.0j
            m[k, j] = 1.0j
            mats.append(m)
    for l in range(1, n):
        m = np.zeros((n, n), dtype=complex)
        scale = np.sqrt(2.0 / (l * (l + 1)))
        for j in range(l):
            m[j, j] = scale
        m[l, l] = -l * scale
        mats.append(m)
    return np.stack(mats)


@dataclass(frozen=True)
class StructureConstants:
    """Precomputed generator algebra for one Hilbert-space dimension.

    Attributes
    ----------
    n_levels : int
        Hilbert-space dimension N.
    dim : int
        Bloch dimension d = N^2 - 1.
    sigma : (d, N, N) complex array
        Generator stack.
    f : (d, d, d) real array
        Antisymmetric structure constants, f_ijk = -(i/4) Tr(sigma_i [sigma_j, sigma_k]).
    g : (d, d, d) real array
        Totally symmetric structure constants, g_ijk = (1/4) Tr(sigma_i {sigma_j, sigma_k}).
    l_stack : (d, d, d) real array
        l_stack[k] is the commutator matrix L(e_k), i.e. l_stack[k][i, j] = f_ijk.
    """

    n_levels: int
    dim: int
    sigma: np.ndarray
    f: np.ndarray
    g: np.ndarray
    l_stack: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.sigma, self.f, self.g, self.l_stack):
            arr.flags.writeable = False


def _real_part(arr: np.ndarray, what: str) -> np.ndarray:
    resid = np.max(np.abs(arr.imag)) if arr.size else 0.0
    if resid > _ATOL:
        raise ValueError(f"{what}: imaginary residue {resid:.3e} exceeds {_ATOL}")
    return np.ascontiguousarray(arr.real)


@lru_cache(maxsize=None)
def structure_constants(n_levels: int) -> StructureConstants:
    """Build (and cache) the generator stack and structure constants for N levels."""
    sigma = gell_mann_matrices(n_levels)
    prod = np.einsum("jab,kbc->jkac", sigma, sigma)
    comm = prod - np.transpose(prod, (1, 0, 2, 3))
    acomm = prod + np.transpose(prod, (1, 0, 2, 3))
    f = _real_part(-0.25j * np.einsum("iab,jkba->ijk", sigma, comm), "f_ijk")
    g = _real_part(0.25 * np.einsum("iab,jkba->ijk", sigma, acomm), "g_ijk")
    l_stack = np.ascontiguousarray(np.moveaxis(f, 2, 0))
    return StructureConstants(
        n_levels=n_levels,
        dim=bloch_dim(n_levels),
        sigma=sigma,
        f=f,
        g=g,
        l_stack=l_stack,
    )


def _check_square(mat: np.ndarray, sc: StructureConstants, what: str) -> np.ndarray:
    mat = np.asarray(mat)
    n = sc.n_levels
    if mat.shape != (n, n):
        raise ValueError(f"{what}: expected shape ({n}, {n}), got {mat.shape}")
    return mat


def hermitian_to_coeffs(mat: np.ndarray, sc: StructureConstants) -> tuple[float, np.ndarray]:
    """Split a Hermitian matrix into (trace coefficient a0, Bloch coefficients a).

    a0 = Tr(A) and a_j = Tr(sigma_j A), so that
    A = (a0/N) I + (1/2) sum_j a_j sigma_j.
    """
    mat = _check_square(mat, sc, "hermitian_to_coeffs")
    defect = np.max(np.abs(mat - mat.conj().T))
    if defect > _ATOL:
        raise ValueError(f"matrix is not Hermitian (defect {defect:.3e})")
    a0 = float(_real_part(np.atleast_1d(np.trace(mat)), "trace coefficient")[0])
    a = _real_part(np.einsum("jab,ba->j", sc.sigma, mat), "Bloch coefficients")
    return a0, a


def coeffs_to_hermitian(a0: float, a: np.ndarray, sc: StructureConstants) -> np.ndarray:
    """Inverse of :func:`hermitian_to_coeffs`."""
    a = np.asarray(a, dtype=float)
    if a.shape != (sc.dim,):
        raise ValueError(f"expected {sc.dim} Bloch coefficients, got shape {a.shape}")
    n = sc.n_levels
    return (a0 / n) * np.eye(n, dtype=complex) + 0.5 * np.einsum("j,jab->ab", a, sc.sigma)


def to_bloch(rho: np.ndarray, sc: StructureConstants) -> np.ndarray:
    """Bloch vector v_j = Tr(sigma_j rho) of a density matrix."""
    rho = _check_square(rho, sc, "to_bloch")
    tr = np.trace(rho)
    if abs(tr - 1.0) > 1e-9:
        raise ValueError(f"density matrix trace {tr} differs from 1")
    defect = np.max(np.abs(rho - rho.conj().T))
    if defect > 1e-9:
        raise ValueError(f"density matrix is not Hermitian (defect {defect:.3e})")
    return _real_part(np.einsum("jab,ba->j", sc.sigma, rho), "Bloch vector")


def from_bloch(v: np.ndarray, sc: StructureConstants) -> np.ndarray:
    """Density matrix rho = I/N + (1/2) sum_j v_j sigma_j for a Bloch vector v."""
    return coeffs_to_hermitian(1.0, np.asarray(v, dtype=float), sc)
