"""Synthetic plane-wave acquisitions through a known aberrator.

Single-scattering (Born) forward model: each scatterer returns the
incident plane wave through the far-field phase screen, and the recorded
spectra are assembled bin by bin before an inverse temporal DFT.  Every
downstream claim in the pipeline can therefore be tested against known
ground truth.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .axes import AxisKind, BasisAxis, ComplexMatrix
from .beamform import FocusedStack, RawAcquisition, pulse_spectrum
from .farfield import kspace_grid
from .scene import LayeredMedium, ProbeConfig, Scatterers
from .screens import PhaseScreen
from .validation import check_finite_array, check_positive

__all__ = [
    "farfield_reflection",
    "assemble_time_domain",
    "synthesis_grid",
    "simulate_acquisition",
    "ReverbSpec",
    "reverb_term",
    "inject_reverberation",
    "add_noise",
    "ScreenPatch",
    "synth_focused_stack",
]


class _SceneSpectrum:
    """Per-depth lateral reflectivity spectra, cached across frequency bins.

    The scene enters the far-field matrices only through
    gamma_d(q) = sum_s gamma_s exp(i q x_s) per depth plane d, evaluated on
    the sum grid q = k_out + k_in; this table is frequency independent.
    """

    def __init__(self, scene: Scatterers, k: np.ndarray):
        if len(scene) == 0:
            raise ValueError("scene must contain at least one scatterer")
        k = np.asarray(k, dtype=float)
        if k.size < 1:
            raise ValueError("empty wavenumber grid")
        if k.size > 1:
            dk = k[1] - k[0]
            if not np.allclose(np.diff(k), dk, rtol=1e-9, atol=0.0):
                raise ValueError("wavenumber grid must be uniform")
        else:
            dk = 1.0
        self.k = k
        self.dk = dk
        self.q0 = 2.0 * k[0]
        q = self.q0 + np.arange(2 * k.size - 1) * dk
        depths, inverse = np.unique(np.asarray(scene.z, float), return_inverse=True)
        self.depths = depths
        table = np.zeros((depths.size, q.size), dtype=np.complex128)
        for d in range(depths.size):
            sel = inverse == d
            xs = scene.x[sel]
            refl = scene.reflectivity[sel]
            table[d] = np.exp(1j * np.outer(q, xs)) @ refl
        self.table = table

    def reflection(self, omega: float, c_ref: float,
                   screen_col: np.ndarray | None,
                   cols: np.ndarray | None = None) -> np.ndarray:
        """R(k_out, k_in) at one frequency; optionally only some columns."""
        k = self.k
        kz2 = (omega / c_ref) ** 2 - k**2
        prop = kz2 > 0
        kz = np.sqrt(np.where(prop, kz2, 0.0))
        # (n_depth, nk) one-way factors; evanescent lines are dropped
        v = np.where(prop[None, :], np.exp(1j * np.outer(self.depths, kz)), 0.0)
        if screen_col is not None:
            v = v * np.asarray(screen_col)[None, :]
        if cols is None:
            cols = np.arange(k.size)
        out = np.empty((k.size, cols.size), dtype=np.complex128)
        base = np.arange(k.size)
        for jj, j in enumerate(cols):
            gathered = self.table[:, base + j]  # gamma_d(k_out + k_in_j)
            out[:, jj] = np.einsum("dk,d,dk->k", v, v[:, j], gathered)
        return out


def farfield_reflection(scene: Scatterers, c_ref: float, omega: float,
                        k: np.ndarray,
                        screen: PhaseScreen | np.ndarray | None = None) -> ComplexMatrix:
    """Monochromatic far-field reflection matrix of a scatterer cloud.

    R(k_out, k_in) = sum_s H(k_out) H(k_in) gamma_s
                     exp[i (kz(k_out) + kz(k_in)) z_s]
                     exp[i (k_out + k_in) x_s]

    with kz = sqrt((w/c)^2 - k_x^2); evanescent lines give zero rows and
    columns.  Exact by construction, which makes it the reference for the
    antidiagonal spectrum law.
    """
    check_positive("c_ref", c_ref)
    check_positive("omega", omega)
    col = None
    if screen is not None:
        col = screen.column(omega) if isinstance(screen, PhaseScreen) else np.asarray(screen)
        if col.shape != np.asarray(k).shape:
            raise ValueError("screen grid does not match the wavenumber grid")
    cache = _SceneSpectrum(scene, k)
    data = cache.reflection(omega, c_ref, col)
    ax = BasisAxis(AxisKind.WAVENUMBER, k)
    return ComplexMatrix(ax, ax, data)


# ---------------------------------------------------------------------------
# Time-domain assembly
# ---------------------------------------------------------------------------

def band_bins(probe: ProbeConfig) -> tuple[np.ndarray, np.ndarray]:
    """In-band DFT bin indexes and their angular frequencies."""
    freqs = np.fft.rfftfreq(probe.n_samples, d=1.0 / probe.sample_rate)
    f0, f1 = probe.band
    if f1 > probe.sample_rate / 2:
        raise ValueError("probe band exceeds the Nyquist frequency")
    keep = np.where((freqs >= f0) & (freqs <= f1))[0]
    if keep.size == 0:
        raise ValueError("record too short: no DFT bins inside the band")
    return keep, 2.0 * math.pi * freqs[keep]


def angle_columns(k: np.ndarray, omega: float, c_ref: float,
                  angles: np.ndarray, require_unique: bool = False) -> np.ndarray:
    """Nearest wavenumber line for each steering angle at one frequency."""
    targets = (omega / c_ref) * np.sin(angles)
    idx = np.argmin(np.abs(k[None, :] - targets[:, None]), axis=1)
    if require_unique and np.unique(idx).size != idx.size:
        raise ValueError(
            "steering angles collide on the synthesis grid; increase pad_factor"
        )
    return idx


def assemble_time_domain(entries, k: np.ndarray, probe: ProbeConfig,
                         c_ref: float, taper: float = 0.25) -> RawAcquisition:
    """Assemble real traces from per-bin far-field matrices.

    ``entries`` yields (omega, R_kk) pairs, one per in-band DFT bin in
    ascending order, on the shared grid ``k``.  Columns are mapped to the
    probe angles by nearest-line lookup at each frequency (unique at f0 by
    construction), rows to elements by an inverse spatial DFT, and the
    emitted pulse spectrum is applied before the inverse temporal DFT.
    """
    bins, omegas = band_bins(probe)
    weights = pulse_spectrum(omegas / (2 * math.pi), probe.band, taper)
    u = probe.element_positions
    k = np.asarray(k, dtype=float)
    synth = np.exp(-1j * np.outer(u, k))  # inverse of the e^{+ikx} projection

    n_rfft = probe.n_samples // 2 + 1
    spectrum = np.zeros((probe.n_elements, probe.angles.size, n_rfft),
                        dtype=np.complex128)
    count = 0
    for (omega, matrix), b, w, wt in zip(entries, bins, omegas, weights):
        if abs(omega - w) > 1e-6 * max(w, 1.0):
            raise ValueError("entry frequencies must match the in-band DFT bins")
        data = matrix.data if isinstance(matrix, ComplexMatrix) else np.asarray(matrix)
        cols = angle_columns(k, omega, c_ref, probe.angles,
                             require_unique=abs(omega - 2 * math.pi * probe.f0)
                             < math.pi * probe.sample_rate / probe.n_samples)
        spectrum[:, :, b] = wt * (synth @ data[:, cols])
        count += 1
    if count != bins.size:
        raise ValueError(f"expected {bins.size} per-bin entries, got {count}")

    # The assembled bins are field amplitudes of the exp(-i w t) components;
    # real traces are the inverse transform of their conjugate.
    traces = np.fft.irfft(np.conj(spectrum), n=probe.n_samples, axis=-1)
    return RawAcquisition(traces, probe, c_ref)


@dataclass(frozen=True)
class ReverbSpec:
    """Parallel-wall multiple-reflection injection.

    The m-th multiple carries amplitude * r^m and the round-trip phase
    exp(2 i m w d / c_layer); energy is confined to a Gaussian kernel of
    width ``band_width`` around k_out + k_in = 0.
    """

    amplitude: float
    reflection_coeff: float = 0.5
    order_count: int = 3
    band_width: float | None = None  # defaults to 1 / aperture

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.order_count < 1:
            raise ValueError("order_count must be >= 1")


def reverb_term(k: np.ndarray, omega: float, spec: ReverbSpec,
                layer_depth: float, layer_speed: float,
                band_width: float) -> np.ndarray:
    """Additive specular contribution at one frequency."""
    ksum = k[:, None] + k[None, :]
    kernel = np.exp(-(ksum**2) / band_width**2)
    phases = sum(
        spec.reflection_coeff**m * np.exp(2j * m * omega * layer_depth / layer_speed)
        for m in range(1, spec.order_count + 1)
    )
    return spec.amplitude * phases * kernel


def _layer_geometry(layer: LayeredMedium) -> tuple[float, float]:
    if len(layer.interfaces) < 2:
        raise ValueError("reverberating slab needs a finite first layer")
    return layer.interfaces[1] - layer.interfaces[0], layer.speeds[0]


def inject_reverberation(target, spec: ReverbSpec, layer: LayeredMedium,
                         probe: ProbeConfig | None = None,
                         c_ref: float | None = None,
                         k: np.ndarray | None = None,
                         taper: float = 0.25):
    """Add parallel-wall multiples to an acquisition or a per-bin stack.

    For a RawAcquisition the reverberation-only traces are synthesized on
    the same grid and added; for a list of (omega, matrix) entries the
    additive term is applied per frequency.  amplitude = 0 returns the
    input unchanged.
    """
    if spec.amplitude == 0:
        return target
    d, c_layer = _layer_geometry(layer)
    if isinstance(target, RawAcquisition):
        if k is None:
            k = kspace_grid(target.probe.element_positions)
        width = spec.band_width or 1.0 / target.probe.aperture
        _, omegas = band_bins(target.probe)
        entries = ((w, reverb_term(k, w, spec, d, c_layer, width)) for w in omegas)
        extra = assemble_time_domain(entries, k, target.probe, target.c, taper)
        return RawAcquisition(target.traces + extra.traces, target.probe, target.c)
    # per-bin stack: sequence of (omega, matrix)
    if k is None:
        raise ValueError("injecting into a spectral stack requires the k grid")
    if spec.band_width is None and probe is None:
        raise ValueError("need band_width or the probe to size the specular kernel")
    width = spec.band_width or 1.0 / probe.aperture
    out = []
    for omega, matrix in target:
        data = matrix.data if isinstance(matrix, ComplexMatrix) else np.asarray(matrix)
        out.append((omega, data + reverb_term(k, omega, spec, d, c_layer, width)))
    return out


def synthesis_grid(probe: ProbeConfig, c_ref: float, pad_factor: int = 4) -> np.ndarray:
    """Wavenumber grid used by the synthetic acquisition path.

    DFT lines of a ``pad_factor`` times oversized aperture, clipped to the
    element-sampling limit and the highest propagating wavenumber.
    """
    check_positive("c_ref", c_ref)
    span = probe.aperture * max(int(pad_factor), 1)
    dk = 2.0 * math.pi / span
    k_lim = min(math.pi / probe.pitch, 2.0 * math.pi * probe.band[1] / c_ref)
    m = int(math.floor(k_lim / dk))
    return np.arange(-m, m + 1) * dk


def simulate_acquisition(probe: ProbeConfig, scene: Scatterers, c_ref: float,
                         screen: PhaseScreen | None = None,
                         reverb: ReverbSpec | None = None,
                         layer: LayeredMedium | None = None,
                         pad_factor: int = 4, taper: float = 0.25,
                         threads: int = 1) -> RawAcquisition:
    """Full synthetic acquisition: scene -> far field -> traces.

    The synthesis wavenumber grid is the DFT grid of a ``pad_factor`` times
    oversized aperture, which keeps the angle-to-line mapping unique across
    the band and pushes periodization ghosts away from the scene.
    """
    k = synthesis_grid(probe, c_ref, pad_factor)

    bins, omegas = band_bins(probe)
    # enforce a unique angle->line mapping at the center frequency
    angle_columns(k, 2 * math.pi * probe.f0, c_ref, probe.angles, require_unique=True)

    cache = _SceneSpectrum(scene, k)
    if reverb is not None and reverb.amplitude > 0 and layer is None:
        raise ValueError("reverberation injection requires the layered medium")
    width = None
    if reverb is not None and reverb.amplitude > 0:
        d_layer, c_layer = _layer_geometry(layer)
        width = reverb.band_width or 1.0 / probe.aperture

    matrices: list[np.ndarray | None] = [None] * omegas.size

    def work(j: int) -> None:
        w = omegas[j]
        col = screen.column(w) if screen is not None else None
        cols = angle_columns(k, w, c_ref, probe.angles)
        r = cache.reflection(w, c_ref, col, cols)
        if width is not None:
            ksum = k[:, None] + k[cols][None, :]
            kernel = np.exp(-(ksum**2) / width**2)
            phases = sum(
                reverb.reflection_coeff**mm
                * np.exp(2j * mm * w * d_layer / c_layer)
                for mm in range(1, reverb.order_count + 1)
            )
            r = r + reverb.amplitude * phases * kernel
        matrices[j] = r

    n_threads = max(int(threads), 1)
    if n_threads == 1:
        for j in range(omegas.size):
            work(j)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, range(omegas.size)))

    # columns were already angle-mapped, so feed an identity mapping
    u = probe.element_positions
    synth = np.exp(-1j * np.outer(u, k))
    weights = pulse_spectrum(omegas / (2 * math.pi), probe.band, taper)
    n_rfft = probe.n_samples // 2 + 1
    spectrum = np.zeros((probe.n_elements, probe.angles.size, n_rfft),
                        dtype=np.complex128)
    for j, b in enumerate(bins):
        spectrum[:, :, b] = weights[j] * (synth @ matrices[j])
    traces = np.fft.irfft(np.conj(spectrum), n=probe.n_samples, axis=-1)
    return RawAcquisition(traces, probe, c_ref)


def add_noise(acq: RawAcquisition, snr_db: float, rng_seed: int) -> RawAcquisition:
    """Additive white Gaussian noise at an exact trace-energy SNR.

    The realized noise is rescaled so that the energy ratio matches
    ``snr_db`` exactly; an infinite SNR returns the input unchanged.
    """
    if not math.isfinite(snr_db):
        if math.isnan(snr_db):
            raise ValueError("snr_db must not be NaN")
        return acq
    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal(acq.traces.shape)
    e_signal = float(np.sum(acq.traces**2))
    e_noise = float(np.sum(noise**2))
    if e_signal == 0 or e_noise == 0:
        return acq
    scale = math.sqrt(e_signal / (10 ** (snr_db / 10.0) * e_noise))
    return RawAcquisition(acq.traces + scale * noise, acq.probe, acq.c)


# ---------------------------------------------------------------------------
# Exact focused-domain synthesis (ground-truth path)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScreenPatch:
    """One aberration law applied to scatterers in a spatial region.

    ``values`` is the unit-modulus transmittance on the stack's full
    wavenumber grid; ``x_range`` / ``z_range`` bound the region (None means
    unbounded on that axis).
    """

    values: np.ndarray
    x_range: tuple[float, float] | None = None
    z_range: tuple[float, float] | None = None

    def contains(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        ok = np.ones(x.shape, dtype=bool)
        if self.x_range is not None:
            ok &= (x >= self.x_range[0]) & (x < self.x_range[1])
        if self.z_range is not None:
            ok &= (z >= self.z_range[0]) & (z < self.z_range[1])
        return ok


def synth_focused_stack(scene: Scatterers, x: np.ndarray, z: np.ndarray,
                        c: float, patches: list[ScreenPatch] | None = None,
                        band: tuple[float, float] | None = None) -> FocusedStack:
    """Focused reflection matrices computed directly from ground truth.

    Each scatterer's echo passes twice through the screen of the patch it
    sits in, giving per depth

        R(z) = sum_p  H_p  Gamma_p(z)  H_p^T

    with H_p the lateral convolution by the inverse transform of patch p's
    transmittance and Gamma_p the diagonal reflectivity of patch-p
    scatterers at that depth.  This is the propagation-compensated matrix a
    perfect beamformer would produce, so algorithm tests built on it are
    free of discretization error.
    """
    x = check_finite_array("x", x, float)
    z = check_finite_array("z", z, float)
    dx = x[1] - x[0]
    dz = z[1] - z[0] if z.size > 1 else dx
    k = kspace_grid(x)
    n = x.size
    t0 = np.exp(1j * k[:, None] * x[None, :])

    if patches is None:
        patches = [ScreenPatch(np.ones(k.size))]
    conv = []
    for p in patches:
        vals = np.asarray(p.values)
        if vals.shape != k.shape:
            raise ValueError("patch screen does not match the stack k grid")
        conv.append((np.conj(t0.T) @ (vals[:, None] * t0)) / n)
    identity_needed = np.ones(len(scene), dtype=bool)
    assign = np.full(len(scene), -1)
    for i, p in enumerate(patches):
        sel = p.contains(scene.x, scene.z) & identity_needed
        assign[sel] = i
        identity_needed &= ~sel

    # bin reflectivities onto the pixel grid, per depth and patch
    ix = np.clip(np.round((scene.x - x[0]) / dx).astype(int), 0, n - 1)
    iz = np.clip(np.round((scene.z - z[0]) / dz).astype(int), 0, z.size - 1)

    data = np.zeros((z.size, n, n), dtype=np.complex128)
    gamma = np.zeros(n, dtype=np.complex128)
    for pi in range(-1, len(patches)):
        sel_p = assign == pi
        if not sel_p.any():
            continue
        h = np.eye(n, dtype=np.complex128) if pi < 0 else conv[pi]
        for d in np.unique(iz[sel_p]):
            sel = sel_p & (iz == d)
            gamma[:] = 0
            np.add.at(gamma, ix[sel], scene.reflectivity[sel])
            data[d] += (h * gamma[None, :]) @ h.T
    return FocusedStack(data, x, z, float(c), dx, dz, band)
