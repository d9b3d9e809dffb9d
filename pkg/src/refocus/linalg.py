"""Linear-algebra and spectral-statistics kernels used by every stage.

All arithmetic is double precision: the pipeline chains thousands of
complex products and single precision loses the phase accuracy the
aberration estimates depend on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .axes import BasisAxis, ComplexMatrix

__all__ = [
    "matmul",
    "transpose",
    "conjugate",
    "adjoint",
    "hadamard",
    "phase_normalize",
    "herm_eig",
    "shannon_entropy",
    "EigenDecomposition",
    "fix_eigvec_gauge",
    "circular_rms",
    "remove_phase_tilt",
]

#: entries below this fraction of the max modulus are zeroed instead of
#: being given an arbitrary phase
DEFAULT_EPS_REL = 1e-9

#: relative Frobenius asymmetry above which a matrix is not accepted as
#: Hermitian
HERMITIAN_TOL = 1e-8


def _check_compatible(a: ComplexMatrix, b: ComplexMatrix) -> None:
    if a.cols.kind != b.rows.kind:
        raise ValueError(
            f"basis mismatch: cannot contract {a.cols.kind.value} "
            f"against {b.rows.kind.value}"
        )
    if len(a.cols) != len(b.rows):
        raise ValueError(
            f"dimension mismatch: {a.shape} x {b.shape}"
        )
    if not np.allclose(a.cols.coords, b.rows.coords, rtol=1e-9, atol=0.0):
        raise ValueError("contracted axes carry different coordinates")


def matmul(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Complex matrix product with basis checking.

    The reduction is delegated to BLAS; for a given build the summation
    schedule is fixed, so repeated calls are bitwise reproducible.
    """
    _check_compatible(a, b)
    return ComplexMatrix(a.rows, b.cols, a.data @ b.data)


def transpose(a: ComplexMatrix) -> ComplexMatrix:
    return ComplexMatrix(a.cols, a.rows, a.data.T)


def conjugate(a: ComplexMatrix) -> ComplexMatrix:
    """Elementwise conjugate; axes unchanged."""
    return ComplexMatrix(a.rows, a.cols, np.conj(a.data))


def adjoint(a: ComplexMatrix) -> ComplexMatrix:
    """Conjugate transpose; axes swapped."""
    return ComplexMatrix(a.cols, a.rows, np.conj(a.data.T))


def hadamard(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Elementwise product of same-shape, same-basis matrices."""
    if a.rows.kind != b.rows.kind or a.cols.kind != b.cols.kind:
        raise ValueError("elementwise product requires identical axis kinds")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return ComplexMatrix(a.rows, a.cols, a.data * b.data)


def phase_normalize_array(data: np.ndarray, eps_rel: float = DEFAULT_EPS_REL) -> np.ndarray:
    """z -> z/|z|, with entries below eps_rel * max|z| set to zero.

    Zeroing (rather than keeping an arbitrary phase) keeps numerically dead
    entries from injecting noise phase into correlation averages.
    """
    if not 0.0 < eps_rel < 1.0:
        raise ValueError("eps_rel must lie in (0, 1)")
    data = np.asarray(data, dtype=np.complex128)
    mag = np.abs(data)
    peak = mag.max(initial=0.0)
    out = np.zeros_like(data, dtype=np.complex128)
    if peak == 0.0:
        return out
    keep = mag >= eps_rel * peak
    # entries already at unit modulus (to a few ulp) pass through untouched,
    # making the operation an exact fixed point
    near_one = np.abs(mag - 1.0) <= 4.0 * np.finfo(float).eps
    np.divide(data, mag, out=out, where=keep & ~near_one)
    out[keep & near_one] = data[keep & near_one]
    return out


def phase_normalize(a: ComplexMatrix, eps_rel: float = DEFAULT_EPS_REL) -> ComplexMatrix:
    return a.with_data(phase_normalize_array(a.data, eps_rel))


@dataclass(frozen=True)
class EigenDecomposition:
    """Hermitian eigendecomposition, eigenvalues in descending order.

    `entropy` is the Shannon entropy of the normalized eigenvalue
    magnitudes; for positive semidefinite input it coincides with the
    entropy of the eigenvalues themselves.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    entropy: float

    @property
    def singular_values(self) -> np.ndarray:
        """Eigenvalue magnitudes sorted descending (the SVD spectrum)."""
        return np.sort(np.abs(self.eigenvalues))[::-1]


def fix_eigvec_gauge(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-modulus entry is real >= 0.

    Eigenvectors are defined only up to a global unit phase; pinning the
    gauge makes decompositions deterministic and comparable.
    """
    vectors = np.array(vectors, dtype=np.complex128)
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        i = int(np.argmax(np.abs(col)))
        ref = col[i]
        if ref != 0:
            vectors[:, j] = col * (np.conj(ref) / abs(ref))
    return vectors


def herm_eig(c: ComplexMatrix) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix.

    The input is symmetrized as (C + C^dagger)/2 before solving so that
    floating-point drift cannot push an analytically Hermitian matrix onto
    a different solver branch; inputs whose asymmetry exceeds
    ``HERMITIAN_TOL`` relative are rejected.
    """
    data = c.data
    if data.shape[0] != data.shape[1]:
        raise ValueError("eigendecomposition requires a square matrix")
    norm = np.linalg.norm(data)
    if norm > 0:
        asym = np.linalg.norm(data - data.conj().T) / norm
        if asym > HERMITIAN_TOL:
            raise ValueError(f"matrix is not Hermitian (relative asymmetry {asym:.2e})")
    sym = 0.5 * (data + data.conj().T)
    try:
        vals, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ArithmeticError(f"eigendecomposition did not converge: {exc}") from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = fix_eigvec_gauge(vecs[:, order])
    mags = np.abs(vals)
    entropy = shannon_entropy(mags) if mags.max(initial=0.0) > 0 else 0.0
    return EigenDecomposition(vals, vecs, entropy)


def shannon_entropy(sigmas) -> float:
    """Shannon entropy (base 2) of a normalized non-negative spectrum.

    The spectrum is normalized to unit sum first; 0 * log 0 counts as 0.
    """
    s = np.asarray(sigmas, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("spectrum must be a non-empty 1D sequence")
    if np.any(s < 0):
        raise ValueError("spectrum entries must be non-negative")
    total = s.sum()
    if total == 0:
        raise ValueError("spectrum must not be all zero")
    p = s / total
    nz = p > 0
    return float(-(p[nz] * np.log2(p[nz])).sum())


def circular_rms(phases: np.ndarray, weights: np.ndarray | None = None) -> float:
    """RMS angular deviation about the circular mean.

    Deviations are wrapped to (-pi, pi] before squaring, so a constant
    phase offset does not contribute.
    """
    phases = np.asarray(phases, dtype=float)
    if weights is None:
        weights = np.ones_like(phases)
    w = np.asarray(weights, dtype=float)
    mean = np.angle(np.sum(w * np.exp(1j * phases)))
    dev = np.angle(np.exp(1j * (phases - mean)))
    return float(np.sqrt(np.sum(w * dev**2) / np.sum(w)))


def remove_phase_tilt(phases: np.ndarray, x: np.ndarray,
                      weights: np.ndarray | None = None) -> np.ndarray:
    """Subtract the best-fit constant + linear ramp from a phase profile.

    A linear ramp across the aperture is an image shift, not an aberration,
    so ground-truth comparisons remove it.  The bulk tilt is first taken
    from the mean wrapped phase increment between neighboring samples
    (robust to wrapping as long as the ramp stays below pi per step), then
    refined by a least-squares fit on the wrapped deviations.
    """
    phases = np.asarray(phases, dtype=float)
    x = np.asarray(x, dtype=float)
    if weights is None:
        weights = np.ones_like(phases)
    w = np.asarray(weights, dtype=float)
    dev = phases.copy()
    if x.size > 1:
        steps = np.diff(x)
        incr = np.angle(np.sum(np.exp(1j * np.diff(phases))))
        dev = dev - (incr / steps.mean()) * (x - x[0])
    for _ in range(2):
        mean = np.angle(np.sum(w * np.exp(1j * dev)))
        dev = np.angle(np.exp(1j * (dev - mean)))
        xm = np.sum(w * x) / np.sum(w)
        denom = np.sum(w * (x - xm) ** 2)
        slope = np.sum(w * (x - xm) * dev) / denom if denom > 0 else 0.0
        dev = np.angle(np.exp(1j * (dev - slope * (x - xm))))
    return dev
