"""Sound-speed estimation by distortion-entropy minimization.

When the propagation model matches the medium, the whole field of view
collapses into a single isoplanatic patch and the distortion correlation
matrix tends toward rank one; its eigenvalue entropy therefore dips at the
true speed.  Sweeping the model speed and locating the entropy minimum
yields a quantitative speed measurement through the aberrating layers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .beamform import Beamformer, RawAcquisition
from .distortion import build_distortion, build_rkx, correlate, fov_from_stack
from .farfield import ReverbFilter

__all__ = ["SweepResult", "soundspeed_entropy_sweep", "SoundSpeedEstimator"]


@dataclass(frozen=True)
class SweepResult:
    """Entropy curve over candidate speeds and the refined minimum."""

    speeds: np.ndarray
    entropy: np.ndarray
    speed: float          # parabolic refinement of the minimum
    failed: np.ndarray    # candidates whose pipeline raised

    def as_rows(self):
        return list(zip(self.speeds, self.entropy))


def _refine_minimum(c: np.ndarray, h: np.ndarray) -> float:
    """Parabolic sub-grid refinement of the curve minimum."""
    ok = np.isfinite(h)
    if not ok.any():
        raise ValueError("entropy sweep failed at every candidate speed")
    masked = np.where(ok, h, np.inf)
    i = int(np.argmin(masked))
    if i == 0 or i == c.size - 1 or not (ok[i - 1] and ok[i + 1]):
        return float(c[i])
    denom = h[i + 1] - 2.0 * h[i] + h[i - 1]
    if denom <= 0:
        return float(c[i])
    step = 0.5 * (h[i - 1] - h[i + 1]) / denom
    step = float(np.clip(step, -1.0, 1.0))
    return float(c[i] + step * (c[i] - c[i - 1]))


def entropy_at_speed(acq: RawAcquisition, speed: float, *, fov, dx, dz,
                     band=None, taper=0.25, filter_reverb=True, dk=None,
                     k_max=None, x_range=None, z_range=None,
                     eps_rel=1e-9) -> float:
    """Distortion entropy of one full pipeline pass at a candidate speed."""
    stack = Beamformer(speed=speed, fov=fov, dx=dx, dz=dz, band=band,
                       taper=taper).transform(acq)
    if filter_reverb:
        stack = ReverbFilter(dk=dk, k_max=None).transform(stack)
    view = fov_from_stack(stack, x_range, z_range)
    rkx, k = build_rkx(stack, view, k_max)
    dist = build_distortion(rkx, k, view, eps_rel)
    valid = dist.valid_columns()
    result = correlate(dist.data[:, valid], normalized=True, eps_rel=eps_rel)
    return result.entropy


def soundspeed_entropy_sweep(acq: RawAcquisition, speeds, *, fov, dx=None,
                             dz=None, band=None, taper=0.25,
                             filter_reverb=True, dk=None, k_max=None,
                             x_range=None, z_range=None, eps_rel=1e-9,
                             threads=1) -> SweepResult:
    """Re-run beamforming, filtering and distortion analysis per speed.

    The pixel grid and far-field aperture are held fixed across candidates
    so the entropies are comparable; ``k_max`` defaults to the aperture of
    the slowest-looking candidate, (w0/c_max) sin(theta_max), which every
    candidate fills.  Candidates whose pipeline fails are flagged and
    skipped by the minimum search.
    """
    speeds = np.asarray(speeds, dtype=float)
    if speeds.size < 3:
        raise ValueError("sweep needs at least three candidate speeds")
    if np.any(speeds <= 0):
        raise ValueError("candidate speeds must be positive")
    if dz is None:
        # fixed axial pitch from the central candidate, so pixels match
        dz = float(np.median(speeds)) / (2.0 * acq.probe.f0)
    if dx is None:
        dx = acq.probe.pitch
    if k_max is None:
        theta_max = float(np.max(np.abs(acq.probe.angles)))
        k_max = 2.0 * math.pi * acq.probe.f0 * math.sin(theta_max) / float(speeds.max())

    entropy = np.full(speeds.size, np.nan)
    failed = np.zeros(speeds.size, dtype=bool)

    def work(i: int) -> None:
        try:
            entropy[i] = entropy_at_speed(
                acq, speeds[i], fov=fov, dx=dx, dz=dz, band=band, taper=taper,
                filter_reverb=filter_reverb, dk=dk, k_max=k_max,
                x_range=x_range, z_range=z_range, eps_rel=eps_rel)
        except Exception:
            failed[i] = True

    n_threads = max(int(threads), 1)
    if n_threads == 1:
        for i in range(speeds.size):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, range(speeds.size)))

    return SweepResult(speeds, entropy, _refine_minimum(speeds, entropy), failed)


class SoundSpeedEstimator(BaseEstimator):
    """Estimator facade for the entropy sweep.

    ``fit`` runs the sweep on an acquisition; the refined optimum lands in
    ``speed_`` with the full curve in ``speeds_`` / ``entropies_``.
    """

    def __init__(self, c_min=1400.0, c_max=1700.0, c_step=10.0,
                 fov=(-6.4e-3, 6.4e-3, 5e-3, 30e-3), dx=None, dz=None,
                 band=None, taper=0.25, filter_reverb=True, dk=None,
                 k_max=None, x_range=None, z_range=None, eps_rel=1e-9,
                 threads=1):
        self.c_min = c_min
        self.c_max = c_max
        self.c_step = c_step
        self.fov = fov
        self.dx = dx
        self.dz = dz
        self.band = band
        self.taper = taper
        self.filter_reverb = filter_reverb
        self.dk = dk
        self.k_max = k_max
        self.x_range = x_range
        self.z_range = z_range
        self.eps_rel = eps_rel
        self.threads = threads

    def fit(self, X: RawAcquisition, y=None):
        n = int(round((self.c_max - self.c_min) / self.c_step)) + 1
        speeds = self.c_min + self.c_step * np.arange(n)
        result = soundspeed_entropy_sweep(
            X, speeds, fov=self.fov, dx=self.dx, dz=self.dz, band=self.band,
            taper=self.taper, filter_reverb=self.filter_reverb, dk=self.dk,
            k_max=self.k_max, x_range=self.x_range, z_range=self.z_range,
            eps_rel=self.eps_rel, threads=self.threads)
        self.result_ = result
        self.speeds_ = result.speeds
        self.entropies_ = result.entropy
        self.speed_ = result.speed
        return self
