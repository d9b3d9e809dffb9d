"""Distortion-matrix analysis and aberration correction.

The dual-basis distortion matrix connects every input focal point with the
deviation of its reflected far-field wavefront from the homogeneous-model
prediction.  Removing the geometric component recenters all virtual
sources at the origin, so correlating over the field of view synthesizes a
virtual point reflector whose time-reversal eigenmodes are the aberration
laws of the isoplanatic patches.  Phase conjugating those laws on both
sides of the far-field reflection matrix restores diffraction-limited
focusing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .axes import AxisKind, BasisAxis, ComplexMatrix, pixel_axis
from .beamform import FocusedStack
from .farfield import KSpaceStack, kspace_grid, to_kspace
from .linalg import (
    EigenDecomposition,
    fix_eigvec_gauge,
    herm_eig,
    phase_normalize_array,
    shannon_entropy,
)
from .validation import check_positive

__all__ = [
    "FieldOfView",
    "fov_from_stack",
    "build_rkx",
    "DistortionMatrix",
    "build_distortion",
    "CorrelationResult",
    "correlate",
    "decompose_entropy",
    "TransmissionEstimate",
    "estimate_iso_transmission",
    "correct_reflection",
    "StrehlMap",
    "strehl_map",
    "WindowSpec",
    "LocalSweepDiagnostics",
    "local_window_sweep",
    "IsoplanaticCorrector",
    "FullFieldCorrector",
]

DEFAULT_EPS_REL = 1e-9


@dataclass(frozen=True)
class FieldOfView:
    """Pixel subset of a focused stack, flattened depth-major.

    Pixel p = d * len(ix) + j maps to depth index iz[d] and lateral index
    ix[j] of the source stack.
    """

    ix: np.ndarray
    iz: np.ndarray
    x: np.ndarray
    z: np.ndarray

    @property
    def n_pixels(self) -> int:
        return self.x.size * self.z.size

    def pixel_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, z) of every pixel in flattening order."""
        xs = np.tile(self.x, self.z.size)
        zs = np.repeat(self.z, self.x.size)
        return xs, zs


def fov_from_stack(stack: FocusedStack,
                   x_range: tuple[float, float] | None = None,
                   z_range: tuple[float, float] | None = None) -> FieldOfView:
    ix = np.arange(stack.x.size)
    iz = np.arange(stack.z.size)
    if x_range is not None:
        ix = ix[(stack.x >= x_range[0]) & (stack.x <= x_range[1])]
    if z_range is not None:
        iz = iz[(stack.z >= z_range[0]) & (stack.z <= z_range[1])]
    if ix.size == 0 or iz.size == 0:
        raise ValueError("field of view selects no pixels")
    return FieldOfView(ix, iz, np.asarray(stack.x)[ix], np.asarray(stack.z)[iz])


def build_rkx(stack: FocusedStack, fov: FieldOfView | None = None,
              k_max: float | None = None) -> tuple[ComplexMatrix, np.ndarray]:
    """Dual-basis matrix: far field in reception, focal points in input.

    Projects each depth of the (filtered) focused stack into the Fourier
    basis in reception only and concatenates the field-of-view columns.
    Returns the matrix and its wavenumber grid.
    """
    if stack.z.size == 0:
        raise ValueError("empty stack")
    if fov is None:
        fov = fov_from_stack(stack)
    k = kspace_grid(stack.x, k_max)
    t0 = np.exp(1j * k[:, None] * stack.x[None, :])
    cols = []
    for d in fov.iz:
        cols.append(t0 @ stack.data[d][:, fov.ix])
    data = np.concatenate(cols, axis=1)
    m = ComplexMatrix(BasisAxis(AxisKind.WAVENUMBER, k),
                      pixel_axis(data.shape[1]), data)
    return m, k


@dataclass(frozen=True)
class DistortionMatrix:
    """Phase-only deviations between measured and model wavefronts.

    Entries are unit modulus or exactly zero (dead pixels); rows are
    output wavenumbers, columns field-of-view pixels.
    """

    matrix: ComplexMatrix
    fov: FieldOfView
    k: np.ndarray

    def __post_init__(self):
        mag = np.abs(self.matrix.data)
        if not np.all((np.abs(mag - 1.0) < 1e-9) | (mag == 0.0)):
            raise ValueError("distortion entries must be unit modulus or zero")

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def valid_columns(self) -> np.ndarray:
        return np.abs(self.matrix.data).max(axis=0) > 0


def build_distortion(rkx: ComplexMatrix, k: np.ndarray, fov: FieldOfView,
                     eps_rel: float = DEFAULT_EPS_REL) -> DistortionMatrix:
    """Remove the geometric wavefront component from the dual-basis matrix.

    The measured wavefronts are phase-normalized and multiplied entrywise
    by the conjugate Fourier phases of their own focal points, which is
    equivalent to shifting every virtual source to the origin.
    """
    xs, _ = fov.pixel_coords()
    if rkx.data.shape != (k.size, xs.size):
        raise ValueError("dual-basis matrix does not match the field of view")
    normalized = phase_normalize_array(rkx.data, eps_rel)
    geometric = np.exp(-1j * k[:, None] * xs[None, :])
    data = normalized * geometric
    m = ComplexMatrix(rkx.rows, rkx.cols, data)
    return DistortionMatrix(m, fov, np.asarray(k))


@dataclass(frozen=True)
class CorrelationResult:
    """Correlation matrix of distorted wavefronts and its eigenmodes.

    ``c`` is the raw (1/N) M M^dagger; ``c_hat`` its phase-normalized
    counterpart when requested (the time-reversal operator of the virtual
    point reflector).  The decomposition and entropy refer to ``c_hat``
    when present, otherwise to ``c``.
    """

    c: ComplexMatrix
    c_hat: ComplexMatrix | None
    decomposition: EigenDecomposition
    entropy: float
    n_inputs: int


def correlate(matrix, normalized: bool = True,
              eps_rel: float = DEFAULT_EPS_REL) -> CorrelationResult:
    """Correlate wavefront columns and decompose the result.

    With ``normalized`` the coefficients are reduced to pure phases before
    the eigendecomposition, which collapses the virtual reflector to a
    point and lifts the eigenmode degeneracy; without it the raw operator
    is decomposed (useful to show the degeneracy of correlating the
    reflection matrix itself).
    """
    if isinstance(matrix, DistortionMatrix):
        matrix = matrix.matrix
    data = matrix.data if isinstance(matrix, ComplexMatrix) else np.asarray(matrix)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError("correlation needs at least two input columns")
    n_inputs = data.shape[1]
    c = (data @ data.conj().T) / n_inputs
    c = 0.5 * (c + c.conj().T)
    k_axis = matrix.rows if isinstance(matrix, ComplexMatrix) else BasisAxis(
        AxisKind.WAVENUMBER, np.arange(data.shape[0], dtype=float))
    cm = ComplexMatrix(k_axis, k_axis, c)
    if normalized:
        chat = phase_normalize_array(c, eps_rel)
        chat = 0.5 * (chat + chat.conj().T)
        cm_hat = ComplexMatrix(k_axis, k_axis, chat)
        dec = herm_eig(cm_hat)
        return CorrelationResult(cm, cm_hat, dec, dec.entropy, n_inputs)
    dec = herm_eig(cm)
    return CorrelationResult(cm, None, dec, dec.entropy, n_inputs)


def decompose_entropy(result: CorrelationResult):
    """Normalized spectrum, gauge-fixed eigenvectors and entropy.

    Eigenvalue magnitudes are used (the SVD spectrum of the Hermitian
    operator), sorted descending; the recommended isoplanatic patch count
    round(H) is guidance, not enforced.
    """
    dec = result.decomposition
    mags = np.abs(dec.eigenvalues)
    order = np.argsort(mags)[::-1]
    sigma = mags[order]
    sigma_hat = sigma / sigma.sum()
    vectors = dec.eigenvectors[:, order]
    h = shannon_entropy(sigma)
    return sigma_hat, vectors, h


def recommended_patch_count(entropy: float) -> int:
    return max(int(round(entropy)), 1)


@dataclass(frozen=True)
class TransmissionEstimate:
    """Estimated transmission phases between far field and focal points.

    ``screen`` holds the aberration law: shape (nk,) for an isoplanatic
    patch, (nk, nz, nx) for a local (per-pixel) estimate; the geometric
    Fourier factor is composed on demand.  Unit modulus wherever defined.
    """

    k: np.ndarray
    x: np.ndarray
    z: np.ndarray
    screen: np.ndarray
    provenance: str  # "isoplanatic-patch" or "local-window"
    iz: np.ndarray | None = None  # depth indexes into the source stack

    def __post_init__(self):
        mag = np.abs(self.screen)
        if not np.all((np.abs(mag - 1.0) < 1e-9) | (mag == 0.0)):
            raise ValueError("transmission estimate must be unit modulus or zero")

    def tbar(self, depth_index: int) -> np.ndarray:
        """T(k, x) = screen * exp(i k x) at one depth of its grid."""
        t0 = np.exp(1j * self.k[:, None] * self.x[None, :])
        if self.provenance == "isoplanatic-patch":
            return self.screen[:, None] * t0
        return self.screen[:, depth_index, :] * t0


def estimate_iso_transmission(eigvec: np.ndarray, k: np.ndarray, x: np.ndarray,
                              z: np.ndarray,
                              eps_rel: float = DEFAULT_EPS_REL) -> TransmissionEstimate:
    """Single-patch transmission estimate from one correlation eigenvector."""
    u_hat = phase_normalize_array(np.asarray(eigvec), eps_rel)
    return TransmissionEstimate(np.asarray(k, float), np.asarray(x, float),
                                np.asarray(z, float), u_hat, "isoplanatic-patch")


def correct_reflection(kstack: KSpaceStack,
                       estimate: TransmissionEstimate) -> FocusedStack:
    """Project the far-field stack to the focused basis through an
    estimated transmission matrix (phase conjugation on both sides).

    With the free-space estimate (flat screen) this reproduces the plain
    back-projection, normalization included.
    """
    if estimate.k.shape != kstack.k.shape or not np.allclose(estimate.k, kstack.k):
        raise ValueError("transmission estimate is on a different wavenumber grid")
    n = kstack.x.size
    scale = 1.0 / float(n * n)
    if estimate.provenance == "isoplanatic-patch":
        z = np.asarray(kstack.z)
        iz = np.arange(z.size)
        x = np.asarray(kstack.x)
        t = estimate.screen[:, None] * np.exp(1j * kstack.k[:, None] * x[None, :])
        data = scale * (np.conj(t.T) @ kstack.data @ np.conj(t))
        return FocusedStack(data, x, z, kstack.c, kstack.dx, kstack.dz, kstack.band)
    if estimate.iz is None:
        raise ValueError("local estimate lacks depth indexes")
    x = estimate.x
    z = estimate.z
    data = np.empty((z.size, x.size, x.size), dtype=np.complex128)
    for d in range(z.size):
        t = estimate.tbar(d)
        data[d] = scale * (np.conj(t.T) @ kstack.data[estimate.iz[d]] @ np.conj(t))
    return FocusedStack(data, x, z, kstack.c, kstack.dx, kstack.dz, kstack.band)


@dataclass(frozen=True)
class StrehlMap:
    """Spatially resolved focusing quality in [0, 1]."""

    data: np.ndarray
    x: np.ndarray
    z: np.ndarray
    no_estimate: np.ndarray  # pixels with no usable coefficients (S = 0)

    def __post_init__(self):
        if np.any(self.data < 0) or np.any(self.data > 1 + 1e-12):
            raise ValueError("Strehl values must lie in [0, 1]")


def strehl_map(stack: FocusedStack, k_max: float | None = None,
               eps_rel: float = DEFAULT_EPS_REL) -> StrehlMap:
    """Squared modulus of the mean residual distortion phase per pixel.

    Coefficients are phase-normalized before averaging over the output
    wavenumbers so the map is bounded by 1; zero-amplitude coefficients
    are excluded, and pixels with none left are flagged with S = 0.
    """
    k = kspace_grid(stack.x, k_max)
    t0 = np.exp(1j * k[:, None] * stack.x[None, :])
    geometric = np.conj(t0)
    nz = stack.z.size
    out = np.zeros((nz, stack.x.size))
    flags = np.zeros((nz, stack.x.size), dtype=bool)
    for d in range(nz):
        rkx = t0 @ stack.data[d]
        dhat = phase_normalize_array(rkx, eps_rel) * geometric
        counts = (np.abs(dhat) > 0).sum(axis=0)
        sums = dhat.sum(axis=0)
        valid = counts > 0
        out[d, valid] = np.abs(sums[valid] / counts[valid]) ** 2
        flags[d] = ~valid
    out = np.clip(out, 0.0, 1.0)
    return StrehlMap(out, np.asarray(stack.x), np.asarray(stack.z), flags)


# ---------------------------------------------------------------------------
# Local windowed analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowSpec:
    """Sliding analysis window: half extents in meters, stride in pixels."""

    half_x: float = 2.5e-3
    half_z: float = 2.5e-3
    stride: int = 0  # 0: half the window extent

    def __post_init__(self):
        check_positive("half_x", self.half_x)
        check_positive("half_z", self.half_z)
        if self.stride < 0:
            raise ValueError("stride must be >= 0")

    def validate_cells(self, dx: float, dz: float) -> None:
        nx = 2.0 * self.half_x / dx
        nzc = 2.0 * self.half_z / dz
        if nx < 3 or nzc < 3:
            raise ValueError(
                f"window spans {nx:.1f} x {nzc:.1f} resolution cells; need >= 3 x 3"
            )


@dataclass(frozen=True)
class LocalSweepDiagnostics:
    """Per-node results of the sliding-window decomposition."""

    node_x: np.ndarray
    node_z: np.ndarray
    entropy: np.ndarray       # (n_node_z, n_node_x)
    n_inputs: np.ndarray      # valid columns per node
    no_estimate: np.ndarray   # nodes that inherited a neighbor's law
    clipped: np.ndarray       # nodes whose window was clipped by the fov

    @property
    def entropy_per_input(self) -> np.ndarray:
        """H/N window-size figure of merit (smaller is better)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.n_inputs > 0, self.entropy / self.n_inputs, np.inf)


def _node_positions(n: int, stride: int) -> np.ndarray:
    idx = list(range(0, n, stride)) if stride < n else [0]
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return np.asarray(idx)


def _cosine_weights(coords: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """(len(coords), len(nodes)) blending weights, cosine-tapered between
    bracketing nodes."""
    w = np.zeros((coords.size, nodes.size))
    if nodes.size == 1:
        w[:, 0] = 1.0
        return w
    pos = np.clip(np.searchsorted(nodes, coords, side="right") - 1, 0, nodes.size - 2)
    left = nodes[pos]
    right = nodes[pos + 1]
    s = np.clip((coords - left) / np.where(right > left, right - left, 1.0), 0.0, 1.0)
    hi = 0.5 * (1.0 - np.cos(math.pi * s))
    rows = np.arange(coords.size)
    w[rows, pos] = 1.0 - hi
    w[rows, pos + 1] += hi
    return w


def local_window_sweep(dist: DistortionMatrix, window: WindowSpec,
                       dx: float, dz: float,
                       eps_rel: float = DEFAULT_EPS_REL,
                       min_valid: int = 9) -> tuple[TransmissionEstimate, LocalSweepDiagnostics]:
    """Per-pixel aberration laws from sliding sub-distortion matrices.

    A box window is centered on each stride node; the windowed columns are
    correlated, normalized and decomposed, and the leading eigenvector
    becomes the local law.  Node gauges are aligned to their neighbors
    before laws are blended between nodes with cosine tapers (complex
    interpolation of the unit phasors), avoiding phase-unwrap seams.
    Nodes with fewer than ``min_valid`` usable columns inherit the nearest
    valid node's law and are flagged.
    """
    window.validate_cells(dx, dz)
    fov = dist.fov
    xs, zs = fov.pixel_coords()
    valid_col = dist.valid_columns()
    nk = dist.k.size

    stride = window.stride
    if stride == 0:
        stride = max(int(round(window.half_x / dx)), 1)
    nodes_ix = _node_positions(fov.x.size, stride)
    nodes_iz = _node_positions(fov.z.size, max(int(round(window.half_z / dz)), 1)
                               if window.stride == 0 else stride)
    node_x = fov.x[nodes_ix]
    node_z = fov.z[nodes_iz]

    shape = (nodes_iz.size, nodes_ix.size)
    vectors = np.zeros((nk,) + shape, dtype=np.complex128)
    entropy = np.full(shape, np.nan)
    counts = np.zeros(shape, dtype=int)
    missing = np.zeros(shape, dtype=bool)
    clipped = np.zeros(shape, dtype=bool)

    x_lo, x_hi = fov.x[0], fov.x[-1]
    z_lo, z_hi = fov.z[0], fov.z[-1]
    for a, zc in enumerate(node_z):
        for b, xc in enumerate(node_x):
            clipped[a, b] = (xc - window.half_x < x_lo - 0.5 * dx
                             or xc + window.half_x > x_hi + 0.5 * dx
                             or zc - window.half_z < z_lo - 0.5 * dz
                             or zc + window.half_z > z_hi + 0.5 * dz)
            sel = (np.abs(xs - xc) <= window.half_x) \
                & (np.abs(zs - zc) <= window.half_z) & valid_col
            n_sel = int(sel.sum())
            counts[a, b] = n_sel
            if n_sel < min_valid:
                missing[a, b] = True
                continue
            result = correlate(dist.data[:, sel], normalized=True, eps_rel=eps_rel)
            _, vecs, h = decompose_entropy(result)
            vectors[:, a, b] = vecs[:, 0]
            entropy[a, b] = h

    # entropy flags unreliable estimates (boundary mixtures, unlucky
    # windows); gate clear outliers so they inherit a neighbor's law instead
    finite = entropy[~missing]
    if finite.size >= 8:
        q1, q3 = np.percentile(finite, [25, 75])
        gate = q3 + 1.5 * (q3 - q1)
        missing |= ~missing & (entropy > gate)

    # inherit the nearest valid law where none could be estimated
    if missing.any():
        if missing.all():
            raise ValueError("no window produced a usable estimate")
        good = np.argwhere(~missing)
        for a, b in np.argwhere(missing):
            d2 = (good[:, 0] - a) ** 2 + (good[:, 1] - b) ** 2
            ga, gb = good[np.argmin(d2)]
            vectors[:, a, b] = vectors[:, ga, gb]
            entropy[a, b] = entropy[ga, gb]

    # smooth the eigenvector gauge across the node grid
    for a in range(shape[0]):
        for b in range(shape[1]):
            if a == 0 and b == 0:
                continue
            ref = vectors[:, a, b - 1] if b > 0 else vectors[:, a - 1, b]
            inner = np.vdot(ref, vectors[:, a, b])
            if abs(inner) > 0:
                vectors[:, a, b] *= inner.conjugate() / abs(inner)

    wz = _cosine_weights(fov.z, node_z)
    wx = _cosine_weights(fov.x, node_x)
    blended = np.einsum("kab,za,xb->kzx", vectors, wz, wx, optimize=True)
    flat = blended.reshape(nk, -1)
    screen = phase_normalize_array(flat, eps_rel).reshape(nk, fov.z.size, fov.x.size)

    diag = LocalSweepDiagnostics(node_x, node_z, entropy, counts, missing, clipped)
    estimate = TransmissionEstimate(dist.k, fov.x, fov.z, screen,
                                    "local-window", iz=fov.iz)
    return estimate, diag


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

class IsoplanaticCorrector(BaseEstimator, TransformerMixin):
    """Global distortion-matrix analysis and per-patch correction.

    ``fit`` builds the distortion matrix over the field of view, correlates
    and decomposes it; ``transform`` corrects a stack with the aberration
    law of eigenmode ``patch``.  The entropy of the spectrum estimates how
    many isoplanatic patches the field of view contains.
    """

    def __init__(self, patch=0, n_patches=None, x_range=None, z_range=None,
                 k_max=None, eps_rel=DEFAULT_EPS_REL):
        self.patch = patch
        self.n_patches = n_patches
        self.x_range = x_range
        self.z_range = z_range
        self.k_max = k_max
        self.eps_rel = eps_rel

    def fit(self, X: FocusedStack, y=None):
        fov = fov_from_stack(X, self.x_range, self.z_range)
        rkx, k = build_rkx(X, fov, self.k_max)
        dist = build_distortion(rkx, k, fov, self.eps_rel)
        valid = dist.valid_columns()
        result = correlate(dist.data[:, valid] if valid.any() else dist.data,
                           normalized=True, eps_rel=self.eps_rel)
        sigma_hat, vectors, entropy = decompose_entropy(result)
        count = self.n_patches or max(int(math.ceil(entropy)), 1)
        count = min(count, sigma_hat.size)
        self.fov_ = fov
        self.k_ = k
        self.distortion_ = dist
        self.correlation_ = result
        self.eigenvalues_ = sigma_hat
        self.eigenvectors_ = vectors
        self.entropy_ = entropy
        self.transmissions_ = [
            estimate_iso_transmission(vectors[:, i], k, fov.x, fov.z, self.eps_rel)
            for i in range(count)
        ]
        return self

    def correct(self, X: FocusedStack, patch: int = 0) -> FocusedStack:
        kstack = to_kspace(X, self.k_max)
        return correct_reflection(kstack, self.transmissions_[patch])

    def transform(self, X: FocusedStack) -> FocusedStack:
        return self.correct(X, self.patch)


class FullFieldCorrector(BaseEstimator, TransformerMixin):
    """Sliding-window distortion analysis and whole-image correction.

    ``fit`` estimates one aberration law per pixel (stride nodes blended
    smoothly in between); ``transform`` applies the resulting transmission
    estimate to both sides of the far-field matrices, correcting every
    isoplanatic patch at once.
    """

    def __init__(self, half_x=2.5e-3, half_z=2.5e-3, stride=0,
                 x_range=None, z_range=None, k_max=None,
                 eps_rel=DEFAULT_EPS_REL, min_valid=9):
        self.half_x = half_x
        self.half_z = half_z
        self.stride = stride
        self.x_range = x_range
        self.z_range = z_range
        self.k_max = k_max
        self.eps_rel = eps_rel
        self.min_valid = min_valid

    def fit(self, X: FocusedStack, y=None):
        fov = fov_from_stack(X, self.x_range, self.z_range)
        rkx, k = build_rkx(X, fov, self.k_max)
        dist = build_distortion(rkx, k, fov, self.eps_rel)
        window = WindowSpec(self.half_x, self.half_z, self.stride)
        estimate, diag = local_window_sweep(dist, window, X.dx, X.dz,
                                            self.eps_rel, self.min_valid)
        self.fov_ = fov
        self.k_ = k
        self.distortion_ = dist
        self.transmission_ = estimate
        self.diagnostics_ = diag
        return self

    def transform(self, X: FocusedStack) -> FocusedStack:
        kstack = to_kspace(X, self.k_max)
        return correct_reflection(kstack, self.transmission_)
