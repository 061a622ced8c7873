"""Dense complex linear algebra and spectral primitives.

Unitary-normalized FFT, Hermitian and unitary eigendecompositions, exact
propagators, and densification of operators given as callables.  All
functions are pure; inputs are never modified.  Arrays are complex128
throughout, with vectors of shape (N,) and optional batches of shape
(N, m) transformed column by column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericsError",
    "EigenSystem",
    "fft",
    "hermitian_eig",
    "unitary_eig",
    "propagate_exact",
    "densify",
]

# Tolerances and caps for the dense numerics layer.
HERMITICITY_ATOL = 1e-12      # max |A - A^dag| elementwise
UNITARITY_ATOL = 1e-10        # ||U^dag U - I||_F
RESIDUAL_RTOL = 1e-9          # eigen residual relative to ||A||_F
DEGENERACY_THRESHOLD = 1e-8   # eigenvalue grouping in the unitary reduction
EIG_DIMENSION_CAP = 2048      # O(N^3) eigendecomposition budget
APPLY_DIMENSION_CAP = 8192    # pure split-step / apply paths


class NumericsError(RuntimeError):
    """A numerical contract was violated (bad input or failed convergence)."""


@dataclass(frozen=True)
class EigenSystem:
    """Eigendecomposition result.

    values: real eigenvalues (Hermitian input) or eigenphases
        theta_k in [0, 2*pi) with eigenvalues exp(-i*theta_k) (unitary
        input), ascending.
    vectors: orthonormal eigenvectors as columns, same order as values.
    residual: max_k ||A v_k - lambda_k v_k||_2 achieved.
    """

    values: np.ndarray
    vectors: np.ndarray
    residual: float

    def __post_init__(self):
        self.values.setflags(write=False)
        self.vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _as_complex_array(v, name: str = "array") -> np.ndarray:
    a = np.asarray(v, dtype=np.complex128)
    if not np.all(np.isfinite(a)):
        raise NumericsError(f"{name} contains NaN or Inf entries")
    return a


def _check_square(a: np.ndarray, name: str = "matrix") -> int:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericsError(f"{name} must be square, got shape {a.shape}")
    return a.shape[0]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def fft(v, direction: str = "forward") -> np.ndarray:
    """Unitary discrete Fourier transform (1/sqrt(N) both directions).

    Transforms along axis 0, so a (N, m) batch is handled column by
    column.  Only power-of-two lengths are accepted.
    """
    a = _as_complex_array(v, "fft input")
    n = a.shape[0]
    if not _is_power_of_two(n):
        raise NumericsError(f"fft length must be a power of two, got {n}")
    if direction == "forward":
        return np.fft.fft(a, axis=0, norm="ortho")
    if direction == "inverse":
        return np.fft.ifft(a, axis=0, norm="ortho")
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def _residual(a: np.ndarray, vectors: np.ndarray, eigenvalues: np.ndarray) -> float:
    r = a @ vectors - vectors * eigenvalues[np.newaxis, :]
    return float(np.sqrt((np.abs(r) ** 2).sum(axis=0)).max())


def hermitian_eig(a) -> EigenSystem:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    a = _as_complex_array(a, "hermitian_eig input")
    n = _check_square(a)
    if n > EIG_DIMENSION_CAP:
        raise NumericsError(f"dimension {n} exceeds eigendecomposition cap {EIG_DIMENSION_CAP}")
    defect = float(np.abs(a - a.conj().T).max())
    if defect > HERMITICITY_ATOL:
        raise NumericsError(f"matrix is not Hermitian: max |A - A^dag| = {defect:.3e}")
    try:
        values, vectors = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"Hermitian eigensolver did not converge: {exc}") from exc
    residual = _residual(a, vectors, values)
    bound = RESIDUAL_RTOL * max(np.linalg.norm(a), 1e-300)
    if residual > bound:
        raise NumericsError(
            f"eigendecomposition residual {residual:.3e} exceeds {bound:.3e}"
        )
    return EigenSystem(values=values.copy(), vectors=vectors.copy(), residual=residual)


def unitary_eig(u) -> EigenSystem:
    """Eigendecomposition of a unitary matrix into phases and orthonormal vectors.

    Reduces to Hermitian problems: diagonalize (U + U^dag)/2, then split
    any nearly degenerate eigenspace with (U - U^dag)/(2i) restricted to
    it.  This keeps eigenvectors orthonormal even when plain nonsymmetric
    solvers would not.  Eigenphases are returned ascending in [0, 2*pi).
    """
    u = _as_complex_array(u, "unitary_eig input")
    n = _check_square(u)
    if n > EIG_DIMENSION_CAP:
        raise NumericsError(f"dimension {n} exceeds eigendecomposition cap {EIG_DIMENSION_CAP}")
    defect = float(np.linalg.norm(u.conj().T @ u - np.eye(n)))
    if defect > UNITARITY_ATOL:
        raise NumericsError(f"matrix is not unitary: ||U^dag U - I||_F = {defect:.3e}")

    cos_part = (u + u.conj().T) / 2.0
    cos_vals, vectors = np.linalg.eigh(cos_part)
    sin_part = (u - u.conj().T) / 2j

    # Split clusters of equal cos(theta): +/- theta pairs and true
    # degeneracies are resolved by the sine part within each cluster.
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and cos_vals[stop] - cos_vals[stop - 1] < DEGENERACY_THRESHOLD:
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            m = block.conj().T @ (sin_part @ block)
            m = (m + m.conj().T) / 2.0
            _, rot = np.linalg.eigh(m)
            vectors[:, start:stop] = block @ rot
        start = stop

    raw = np.einsum("ij,ij->j", vectors.conj(), u @ vectors)
    phases = np.mod(-np.angle(raw), 2.0 * np.pi)
    order = np.argsort(phases, kind="stable")
    phases = phases[order]
    vectors = vectors[:, order]
    eigenvalues = np.exp(-1j * phases)
    residual = _residual(u, vectors, eigenvalues)
    bound = RESIDUAL_RTOL * np.sqrt(n)
    if residual > bound:
        raise NumericsError(
            f"unitary eigendecomposition residual {residual:.3e} exceeds {bound:.3e}"
        )
    return EigenSystem(values=phases, vectors=vectors, residual=residual)


def propagate_exact(h, t: float, v, eig: EigenSystem | None = None) -> np.ndarray:
    """Apply exp(-i H t) to v via the eigendecomposition of Hermitian H.

    Negative t gives the backward evolution.  Pass a precomputed ``eig``
    to amortize the diagonalization over many calls.  v may be a vector
    or an (N, m) batch of columns.
    """
    if eig is None:
        eig = hermitian_eig(h)
    v = _as_complex_array(v, "state")
    if v.shape[0] != eig.dim:
        raise NumericsError(f"state dimension {v.shape[0]} != operator dimension {eig.dim}")
    phases = np.exp(-1j * eig.values * float(t))
    w = eig.vectors.conj().T @ v
    if v.ndim == 1:
        return eig.vectors @ (phases * w)
    return eig.vectors @ (phases[:, np.newaxis] * w)


def densify(apply, n: int) -> np.ndarray:
    """Build the dense matrix of a linear operator given as a callable.

    Column j of the result is apply(e_j).  The callable may accept the
    full (n, n) identity batch at once; otherwise columns are filled one
    at a time.
    """
    if n < 1:
        raise NumericsError(f"dimension must be positive, got {n}")
    eye = np.eye(n, dtype=np.complex128)
    try:
        m = np.asarray(apply(eye), dtype=np.complex128)
        if m.shape == (n, n):
            return m
    except (TypeError, ValueError):
        pass
    m = np.empty((n, n), dtype=np.complex128)
    for j in range(n):
        col = np.asarray(apply(eye[:, j]), dtype=np.complex128)
        if col.shape != (n,):
            raise NumericsError(
                f"operator returned shape {col.shape} for a length-{n} input"
            )
        m[:, j] = col
    return m
