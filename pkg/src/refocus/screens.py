"""Far-field aberrating phase screens.

A screen multiplies the angular spectrum of the wavefield by a
unit-modulus transmittance; it is the standard idealization of a
long-scale wave-speed heterogeneity sitting between the array and the
imaging plane.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .scene import LayeredMedium, ProbeConfig
from .validation import check_finite_array, check_positive

__all__ = ["ScreenModel", "PhaseScreen", "screen_from_layers", "random_smooth_screen"]


class ScreenModel(str, Enum):
    FROM_LAYERED_MEDIUM = "from-layered-medium"
    RANDOM_SMOOTH = "random-smooth"
    USER_TABLE = "user-table"


@dataclass(frozen=True)
class PhaseScreen:
    """Unit-modulus transmittance sampled on a (k_x, omega) grid.

    ``values`` has shape (len(k), len(omega)); entries are either exactly
    unit modulus or exactly zero (flagged evanescent samples).
    """

    k: np.ndarray
    omega: np.ndarray
    values: np.ndarray
    model: ScreenModel = ScreenModel.USER_TABLE

    def __post_init__(self):
        k = check_finite_array("k", self.k, float)
        omega = check_finite_array("omega", self.omega, float)
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != (k.size, omega.size):
            raise ValueError(
                f"screen shape {vals.shape} does not match grid "
                f"({k.size}, {omega.size})"
            )
        mag = np.abs(vals)
        if not np.all((np.abs(mag - 1.0) < 1e-12) | (mag == 0.0)):
            raise ValueError("screen transmittance must be pure phase (or zero)")
        for name, a in (("k", k), ("omega", omega), ("values", vals)):
            a = np.ascontiguousarray(a)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def column(self, omega: float) -> np.ndarray:
        """Transmittance at the frequency sample nearest ``omega``."""
        j = int(np.argmin(np.abs(self.omega - omega)))
        return self.values[:, j]

    def phase(self) -> np.ndarray:
        return np.angle(self.values)


def screen_from_layers(medium: LayeredMedium, ref_speed: float, probe: ProbeConfig,
                       k: np.ndarray, omega: np.ndarray,
                       z_bottom: float | None = None) -> PhaseScreen:
    """Phase screen equivalent to a stack of horizontal layers.

    For a plane wave of transverse wavenumber k_x, the screen phase is the
    vertical-wavenumber mismatch accumulated across each slab relative to
    the homogeneous reference:

        phi(k_x, w) = sum_layers [kz_layer(k_x, w) - kz_ref(k_x, w)] * d_layer

    with kz = sqrt((w/c)^2 - k_x^2), i.e. Snell refraction with the
    transverse wavenumber conserved.  At normal incidence this reduces to
    phi = sum (w/c_layer - w/c_ref) * d_layer.  Samples that are evanescent
    in any layer (|k_x| >= w/c) are flagged by zeroing them.
    """
    check_positive("ref_speed", ref_speed)
    k = check_finite_array("k", k, float)
    omega = check_finite_array("omega", omega, float)
    if z_bottom is None:
        z_bottom = medium.interfaces[-1]
    slabs = medium.thicknesses(z_bottom)

    kk = k[:, None]
    ww = omega[None, :]
    phase = np.zeros((k.size, omega.size))
    ok = np.ones((k.size, omega.size), dtype=bool)
    for d, c in slabs:
        kz2_layer = (ww / c) ** 2 - kk**2
        kz2_ref = (ww / ref_speed) ** 2 - kk**2
        good = (kz2_layer > 0) & (kz2_ref > 0)
        ok &= good
        kz_layer = np.sqrt(np.where(good, kz2_layer, 1.0))
        kz_ref = np.sqrt(np.where(good, kz2_ref, 1.0))
        phase += np.where(good, (kz_layer - kz_ref) * d, 0.0)

    values = np.where(ok, np.exp(1j * phase), 0.0)
    return PhaseScreen(k, omega, values, ScreenModel.FROM_LAYERED_MEDIUM)


def random_smooth_screen(k: np.ndarray, rms: float, correlation: float,
                         seed: int, omega: np.ndarray | None = None) -> PhaseScreen:
    """Gaussian-correlated random phase screen with an exact sample RMS.

    ``correlation`` is the 1/e half-width of the phase autocorrelation,
    expressed as a fraction of the k-grid span.  The same law is applied to
    every frequency sample (non-dispersive aberration).  The realized phase
    profile is renormalized so its RMS equals ``rms`` exactly, which keeps
    synthetic ground truths calibrated.
    """
    k = check_finite_array("k", k, float)
    if omega is None:
        omega = np.array([0.0])
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(k.size)
    span = k.max() - k.min() if k.size > 1 else 1.0
    sigma = max(correlation * span, 1e-12)
    dist = k[:, None] - k[None, :]
    kernel = np.exp(-(dist**2) / (2.0 * sigma**2))
    smooth = kernel @ white
    smooth -= smooth.mean()
    scale = np.sqrt(np.mean(smooth**2))
    phase = rms * smooth / scale if scale > 0 else np.zeros_like(smooth)
    values = np.repeat(np.exp(1j * phase)[:, None], len(omega), axis=1)
    return PhaseScreen(k, np.asarray(omega, float), values, ScreenModel.RANDOM_SMOOTH)
