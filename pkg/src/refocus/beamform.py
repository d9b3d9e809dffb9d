"""Focused beamforming of plane-wave acquisitions via matrix products.

The acquisition (element x angle x time) is Fourier transformed in time,
projected per frequency onto focal points with free-space propagators, and
coherently summed over the band.  The diagonal of each per-depth focused
matrix is one line of the confocal image.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .axes import AxisKind, BasisAxis, ComplexMatrix
from .scene import ProbeConfig
from .validation import check_finite_array, check_positive

__all__ = [
    "RawAcquisition",
    "SpectralReflection",
    "FocusedStack",
    "hankel1_0",
    "plane_wave_propagator",
    "point_source_propagator",
    "pulse_spectrum",
    "temporal_dft",
    "focus_depth",
    "broadband_stack",
    "confocal_image",
    "Beamformer",
]

# All stages share one Fourier convention: exp(-i w t) forward in time and
# the spatial phases exp(+i k . r) of the propagators below.  Mixing
# conventions silently conjugates aberration laws.


@dataclass(frozen=True)
class RawAcquisition:
    """Recorded traces over (element, steering angle, fast time)."""

    traces: np.ndarray
    probe: ProbeConfig
    c: float

    def __post_init__(self):
        traces = np.asarray(self.traces, dtype=float)
        expected = (self.probe.n_elements, self.probe.angles.size, self.probe.n_samples)
        if traces.shape != expected:
            raise ValueError(f"trace array shape {traces.shape}, expected {expected}")
        if not np.all(np.isfinite(traces)):
            raise ValueError("traces must be finite")
        check_positive("model speed", self.c)
        t = np.ascontiguousarray(traces)
        t.flags.writeable = False
        object.__setattr__(self, "traces", t)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.probe.n_samples) / self.probe.sample_rate


@dataclass(frozen=True)
class SpectralReflection:
    """Per-frequency reflection matrices (element x angle)."""

    data: np.ndarray  # (n_omega, n_elements, n_angles)
    omega: np.ndarray
    elements: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.omega.size, self.elements.size, self.angles.size):
            raise ValueError("spectral payload does not match axes")

    def matrix(self, j: int) -> ComplexMatrix:
        return ComplexMatrix(
            BasisAxis(AxisKind.ELEMENT, self.elements),
            BasisAxis(AxisKind.ANGLE, self.angles),
            self.data[j],
        )

    def __len__(self) -> int:
        return self.omega.size


@dataclass(frozen=True)
class FocusedStack:
    """Broadband focused reflection matrices, one per depth.

    ``data[i]`` is the matrix between output and input virtual transducers
    on the shared lateral grid ``x`` at depth ``z[i]``.
    """

    data: np.ndarray  # (nz, nx, nx)
    x: np.ndarray
    z: np.ndarray
    c: float
    dx: float
    dz: float
    band: tuple[float, float] | None = None

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[1] != self.data.shape[2]:
            raise ValueError("stack must be (nz, nx, nx)")
        if self.data.shape[0] != self.z.size or self.data.shape[1] != self.x.size:
            raise ValueError("stack shape does not match axes")

    @property
    def axial_resolution(self) -> float | None:
        """Pulse-limited axial extent c / (2 df) of each virtual transducer."""
        if self.band is None:
            return None
        return self.c / (2.0 * (self.band[1] - self.band[0]))

    def matrix(self, i: int) -> ComplexMatrix:
        ax = BasisAxis(AxisKind.FOCAL_X, self.x)
        return ComplexMatrix(ax, ax, self.data[i])

    def with_data(self, data: np.ndarray) -> "FocusedStack":
        return FocusedStack(data, self.x, self.z, self.c, self.dx, self.dz, self.band)


# ---------------------------------------------------------------------------
# Hankel function of the first kind, order zero
# ---------------------------------------------------------------------------

_CROSSOVER = 12.0
_EULER_GAMMA = 0.5772156649015329


def _hankel_series(x: np.ndarray) -> np.ndarray:
    """Power series for J0 + i Y0, accurate for arguments below ~14."""
    q = 0.25 * x * x
    term = np.ones_like(x)
    j0 = np.ones_like(x)
    ysum = np.zeros_like(x)
    harmonic = 0.0
    for m in range(1, 48):
        term = term * (-q) / (m * m)
        j0 = j0 + term
        harmonic += 1.0 / m
        ysum = ysum - harmonic * term
    y0 = (2.0 / math.pi) * ((np.log(0.5 * x) + _EULER_GAMMA) * j0 + ysum)
    return j0 + 1j * y0


def _hankel_asymptotic(x: np.ndarray) -> np.ndarray:
    """Large-argument expansion, truncated adaptively at the smallest term."""
    s = np.ones_like(x, dtype=np.complex128)
    term = np.ones_like(x, dtype=np.complex128)
    prev = np.full_like(x, np.inf)
    active = np.ones_like(x, dtype=bool)
    for k in range(1, 40):
        term = term * (-1j) * (2 * k - 1) ** 2 / (8.0 * k * x)
        mag = np.abs(term)
        active &= mag < prev
        s = np.where(active, s + term, s)
        prev = np.where(active, mag, prev)
        if not active.any():
            break
    return np.sqrt(2.0 / (math.pi * x)) * np.exp(1j * (x - 0.25 * math.pi)) * s


def hankel1_0(x) -> np.ndarray:
    """H0^(1)(x) for real positive x.

    Power series below ``x = 12``, Hankel asymptotic expansion above; the
    branch crossover agrees to better than 1e-10.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x <= 0):
        raise ValueError("argument must be positive")
    out = np.empty(x.shape, dtype=np.complex128)
    small = x < _CROSSOVER
    if small.any():
        out[small] = _hankel_series(x[small])
    if (~small).any():
        out[~small] = _hankel_asymptotic(x[~small])
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# Free-space propagators
# ---------------------------------------------------------------------------

def plane_wave_propagator(angles: np.ndarray, x: np.ndarray, z: float,
                          omega: float, c: float) -> ComplexMatrix:
    """Plane-wave phases exp[i k (z cos(theta) + x sin(theta))].

    Rows are focal points (x, z) on one depth line, columns the steering
    angles.  Unit modulus by construction.
    """
    check_positive("speed", c)
    angles = check_finite_array("angles", angles, float)
    x = check_finite_array("x", x, float)
    k = omega / c
    phase = k * (z * np.cos(angles)[None, :] + x[:, None] * np.sin(angles)[None, :])
    return ComplexMatrix(
        BasisAxis(AxisKind.FOCAL_X, x),
        BasisAxis(AxisKind.ANGLE, angles),
        np.exp(1j * phase),
    )


def point_source_propagator(x: np.ndarray, z: float, elements: np.ndarray,
                            omega: float, c: float) -> ComplexMatrix:
    """2D free-space Green's functions -(i/4) H0^(1)(k |r - u|).

    Rows are focal points (x, z), columns the array elements at depth 0.
    Coincident point/element pairs are rejected.
    """
    check_positive("speed", c)
    x = check_finite_array("x", x, float)
    elements = check_finite_array("elements", elements, float)
    dist = np.hypot(x[:, None] - elements[None, :], z)
    if np.any(dist == 0):
        raise ValueError("focal point coincides with an array element")
    k = omega / c
    values = -0.25j * hankel1_0(k * dist)
    return ComplexMatrix(
        BasisAxis(AxisKind.FOCAL_X, x),
        BasisAxis(AxisKind.ELEMENT, elements),
        values,
    )


def pulse_spectrum(freqs: np.ndarray, band: tuple[float, float],
                   taper: float = 0.25) -> np.ndarray:
    """Emission spectrum: flat in band with raised-cosine edges.

    ``taper`` is the fraction of the bandwidth used by each cosine ramp;
    smooth edges keep the synthesized pulse free of temporal ringing.
    """
    freqs = np.asarray(freqs, dtype=float)
    f0, f1 = band
    if not 0 <= taper <= 0.5:
        raise ValueError("taper must lie in [0, 0.5]")
    w = taper * (f1 - f0)
    s = np.zeros_like(freqs)
    inside = (freqs >= f0) & (freqs <= f1)
    s[inside] = 1.0
    if w > 0:
        lo = inside & (freqs < f0 + w)
        hi = inside & (freqs > f1 - w)
        s[lo] = 0.5 * (1.0 - np.cos(math.pi * (freqs[lo] - f0) / w))
        s[hi] = 0.5 * (1.0 - np.cos(math.pi * (f1 - freqs[hi]) / w))
    return s


# ---------------------------------------------------------------------------
# Beamforming operations
# ---------------------------------------------------------------------------

def temporal_dft(acq: RawAcquisition, band: tuple[float, float] | None = None) -> SpectralReflection:
    """Per-trace discrete Fourier transform, restricted to the probe band.

    Bins are computed with the forward kernel exp(-i w t) at frequencies
    j * sample_rate / n_samples and returned as the amplitudes of the
    exp(-i w t) field components (the conjugate bins).  In that convention
    an echo delayed by tau carries phase +w tau and the free-space
    propagators act exactly as printed, with conjugation performing the
    delay compensation.
    """
    probe = acq.probe
    if band is None:
        band = probe.band
    n = probe.n_samples
    spectrum = np.fft.rfft(acq.traces, axis=-1)
    freqs = np.fft.rfftfreq(n, d=1.0 / probe.sample_rate)
    keep = (freqs >= band[0]) & (freqs <= band[1])
    if not keep.any():
        raise ValueError("probe band contains no DFT bins")
    data = np.ascontiguousarray(np.conj(np.moveaxis(spectrum[:, :, keep], -1, 0)))
    return SpectralReflection(
        data=data,
        omega=2.0 * math.pi * freqs[keep],
        elements=probe.element_positions,
        angles=np.asarray(probe.angles),
    )


def _focus_depth_array(spectral: SpectralReflection, z: float, c: float,
                       x: np.ndarray) -> np.ndarray:
    """(n_omega, nx, nx) focused matrices at one depth."""
    out = np.empty((len(spectral), x.size, x.size), dtype=np.complex128)
    for j, w in enumerate(spectral.omega):
        g = point_source_propagator(x, z, spectral.elements, w, c).data
        p = plane_wave_propagator(spectral.angles, x, z, w, c).data
        out[j] = np.conj(g) @ spectral.data[j] @ np.conj(p.T)
    return out


def focus_depth(spectral: SpectralReflection, z: float, c: float,
                x: np.ndarray, max_depth: float | None = None) -> list[ComplexMatrix]:
    """Project the spectral acquisition onto one focal depth.

    Output and input virtual transducers are restricted to the same depth
    line; emission focusing uses the conjugated plane-wave propagator,
    reception the conjugated point-source propagator.
    """
    if z <= 0:
        raise ValueError("focal depth must be positive")
    if max_depth is not None and z > max_depth:
        warnings.warn(f"depth {z:.4f} m beyond recorded range {max_depth:.4f} m")
    arr = _focus_depth_array(spectral, z, c, np.asarray(x, dtype=float))
    ax = BasisAxis(AxisKind.FOCAL_X, x)
    return [ComplexMatrix(ax, ax, arr[j]) for j in range(arr.shape[0])]


def broadband_stack(per_omega, weights=None) -> ComplexMatrix:
    """Coherent sum of per-frequency focused matrices at one depth.

    The sum runs in ascending frequency order regardless of how callers
    schedule the per-frequency work, so results are bitwise reproducible.
    """
    matrices = list(per_omega)
    if len(matrices) < 2:
        raise ValueError("broadband sum needs at least 2 frequency bins")
    if weights is None:
        weights = np.ones(len(matrices))
    acc = np.zeros_like(matrices[0].data)
    for w, m in zip(weights, matrices):
        acc = acc + w * m.data
    return matrices[0].with_data(acc)


def confocal_image(stack: FocusedStack) -> np.ndarray:
    """Squared modulus of the focused-matrix diagonals: (nz, nx) image."""
    return np.abs(np.einsum("zii->zi", stack.data)) ** 2


# ---------------------------------------------------------------------------
# Estimator
# ---------------------------------------------------------------------------

def _unique_diffs(x: np.ndarray, u: np.ndarray):
    """Factor |x_i - u_j| through its distinct values (grids usually share
    a pitch, collapsing nx*nu distances to nx+nu-1)."""
    diffs = np.abs(x[:, None] - u[None, :])
    quant = np.round(diffs / 1e-12).astype(np.int64)
    uniq, inverse = np.unique(quant, return_inverse=True)
    return uniq.astype(float) * 1e-12, inverse.reshape(diffs.shape)


class Beamformer(BaseEstimator, TransformerMixin):
    """Matrix-product beamformer: acquisitions in, focused stacks out.

    Parameters
    ----------
    speed : assumed homogeneous sound speed for the propagation model.
    fov : (x_min, x_max, z_min, z_max) imaging window in meters.
    dx, dz : pixel pitch; defaults are the probe pitch laterally and
        speed / (2 f0) axially, i.e. at or below the resolution cell.
    band : frequency band to integrate; defaults to the probe band.
    taper : raised-cosine fraction of the spectral weights.
    threads : number of worker threads over depth blocks.  Results are
        bitwise independent of this value.
    """

    def __init__(self, speed=1540.0, fov=(-6.4e-3, 6.4e-3, 5e-3, 30e-3),
                 dx=None, dz=None, band=None, taper=0.25, threads=1):
        self.speed = speed
        self.fov = fov
        self.dx = dx
        self.dz = dz
        self.band = band
        self.taper = taper
        self.threads = threads

    def fit(self, X=None, y=None):
        return self

    def grids(self, probe: ProbeConfig):
        """Lateral/axial pixel grids implied by the parameters."""
        c = check_positive("speed", self.speed)
        x0, x1, z0, z1 = self.fov
        dx = self.dx if self.dx is not None else probe.pitch
        dz = self.dz if self.dz is not None else c / (2.0 * probe.f0)
        nx = max(int(round((x1 - x0) / dx)), 1)
        nz = max(int(round((z1 - z0) / dz)), 1)
        x = x0 + (np.arange(nx) + 0.5) * dx
        z = z0 + (np.arange(nz) + 0.5) * dz
        return x, z, dx, dz

    def transform(self, acq: RawAcquisition) -> FocusedStack:
        if not isinstance(acq, RawAcquisition):
            raise TypeError("Beamformer.transform expects a RawAcquisition")
        probe = acq.probe
        band = tuple(self.band) if self.band is not None else probe.band
        c = float(self.speed)
        x, z, dx, dz = self.grids(probe)

        max_depth = c * probe.record_length / 2.0
        if z[-1] > max_depth:
            warnings.warn(
                f"deepest pixel {z[-1]:.4f} m exceeds recorded range {max_depth:.4f} m"
            )

        spectral = temporal_dft(acq, band)
        weights = pulse_spectrum(spectral.omega / (2.0 * math.pi), band, self.taper)
        u = spectral.elements
        angles = spectral.angles
        udiff, inverse = _unique_diffs(x, u)

        def run_block(iz0: int, iz1: int) -> np.ndarray:
            zblk = z[iz0:iz1]
            acc = np.zeros((zblk.size, x.size, x.size), dtype=np.complex128)
            dist = np.hypot(udiff[None, :], zblk[:, None])  # (nzb, ndiff)
            for j in np.argsort(spectral.omega):  # ascending
                w = spectral.omega[j]
                k = w / c
                green = -0.25j * hankel1_0(k * dist.ravel()).reshape(dist.shape)
                g = green[:, inverse]  # (nzb, nx, nu)
                pw = np.exp(1j * k * x[:, None] * np.sin(angles)[None, :])
                pz = np.exp(1j * k * zblk[:, None] * np.cos(angles)[None, :])
                p = pw[None, :, :] * pz[:, None, :]  # (nzb, nx, ntheta)
                tmp = np.conj(g) @ spectral.data[j]  # (nzb, nx, ntheta)
                acc += weights[j] * (tmp @ np.conj(np.swapaxes(p, 1, 2)))
            return acc

        n_threads = max(int(self.threads), 1)
        if n_threads == 1 or z.size < 2:
            data = run_block(0, z.size)
        else:
            bounds = np.linspace(0, z.size, n_threads + 1).astype(int)
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                parts = list(pool.map(lambda se: run_block(*se),
                                      zip(bounds[:-1], bounds[1:])))
            data = np.concatenate(parts, axis=0)

        return FocusedStack(data, x, z, c, dx, dz, band)
