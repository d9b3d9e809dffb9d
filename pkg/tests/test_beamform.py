"""Beamforming: propagators, Hankel function, focusing, confocal imaging."""
import math

import numpy as np
import pytest

from refocus.beamform import (
    Beamformer,
    broadband_stack,
    confocal_image,
    focus_depth,
    hankel1_0,
    plane_wave_propagator,
    point_source_propagator,
    pulse_spectrum,
    temporal_dft,
)
from refocus.scene import ProbeConfig, Scatterers
from refocus.simulate import simulate_acquisition

C = 1540.0
PROBE = ProbeConfig(n_elements=64, pitch=0.2e-3, f0=7.5e6, band=(2.5e6, 10e6),
                    sample_rate=25e6, record_length=40e-6,
                    angles=np.deg2rad(np.linspace(-24, 24, 31)))


def series_j0_y0(x: float, terms: int = 60):
    """Independent power-series oracle for J0 and Y0."""
    q = 0.25 * x * x
    term, j0, ysum, h = 1.0, 1.0, 0.0, 0.0
    for m in range(1, terms):
        term *= -q / (m * m)
        j0 += term
        h += 1.0 / m
        ysum -= h * term
    y0 = (2 / math.pi) * ((math.log(x / 2) + 0.5772156649015329) * j0 + ysum)
    return j0, y0


class TestHankel:
    def test_unit_argument_against_series_oracle(self):
        j0, y0 = series_j0_y0(1.0)
        got = hankel1_0(1.0)
        assert got.real == pytest.approx(j0, abs=1e-13)
        assert got.imag == pytest.approx(y0, abs=1e-13)
        # Green's function value quoted to 5 digits
        g = -0.25j * got
        assert g.real == pytest.approx(0.02206, abs=5e-6)
        assert g.imag == pytest.approx(-0.19130, abs=5e-6)

    def test_series_oracle_across_small_arguments(self):
        for x in (0.1, 0.5, 2.0, 5.0, 9.0, 11.5):
            j0, y0 = series_j0_y0(x)
            got = hankel1_0(x)
            assert abs(got - (j0 + 1j * y0)) < 1e-12 * max(abs(got), 1.0)

    def test_far_field_magnitude(self):
        x = 100.0
        expected = math.sqrt(2.0 / (math.pi * x))
        assert abs(abs(hankel1_0(x)) - expected) < 0.01 * expected

    def test_crossover_consistency(self):
        # both branches evaluated just at the switch agree to 1e-10
        lo = hankel1_0(np.nextafter(12.0, 0.0))
        hi = hankel1_0(12.0)
        assert abs(lo - hi) < 1e-10

    def test_against_scipy(self):
        sp = pytest.importorskip("scipy.special")
        xs = np.concatenate([np.linspace(0.05, 11.99, 40),
                             np.linspace(12.0, 400.0, 40)])
        err = np.abs(hankel1_0(xs) - sp.hankel1(0, xs))
        assert err.max() < 1e-11

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            hankel1_0(0.0)


class TestPropagators:
    def test_plane_wave_on_axis(self):
        omega = 2 * np.pi * 5e6
        k = omega / C
        z = 10e-3
        p = plane_wave_propagator(np.array([0.0]), np.array([0.0]), z, omega, C)
        assert p.data[0, 0] == pytest.approx(np.exp(1j * k * z))

    def test_plane_wave_at_origin_is_one(self):
        omega = 2 * np.pi * 5e6
        p = plane_wave_propagator(np.deg2rad(np.linspace(-20, 20, 9)),
                                  np.array([0.0]), 0.0, omega, C)
        assert np.allclose(p.data, 1.0)

    def test_plane_wave_unit_modulus(self):
        omega = 2 * np.pi * 7e6
        p = plane_wave_propagator(PROBE.angles, np.linspace(-5e-3, 5e-3, 11),
                                  8e-3, omega, C)
        assert np.max(np.abs(np.abs(p.data) - 1.0)) < 1e-12

    def test_point_source_symmetry(self):
        omega = 2 * np.pi * 7e6
        pts = np.array([-1e-3, 0.0, 1e-3])
        g = point_source_propagator(pts, 5e-3, pts, omega, C).data
        assert np.allclose(g, g.T)

    def test_point_source_rejects_coincident(self):
        with pytest.raises(ValueError, match="coincides"):
            point_source_propagator(np.array([0.0]), 0.0, np.array([0.0]),
                                    2 * np.pi * 5e6, C)


class TestPulseSpectrum:
    def test_flat_center_and_zero_outside(self):
        f = np.linspace(0, 12e6, 121)
        s = pulse_spectrum(f, (2.5e6, 10e6), taper=0.25)
        assert s[(f < 2.5e6) | (f > 10e6)].max(initial=0.0) == 0.0
        center = (f > 2.5e6 + 0.25 * 7.5e6) & (f < 10e6 - 0.25 * 7.5e6)
        assert np.allclose(s[center], 1.0)

    def test_zero_taper_is_brick_wall(self):
        f = np.linspace(0, 12e6, 121)
        s = pulse_spectrum(f, (4e6, 8e6), taper=0.0)
        assert set(np.unique(s)) <= {0.0, 1.0}


def tone_acquisition(freq_bin: int):
    n = PROBE.n_samples
    t = np.arange(n) / PROBE.sample_rate
    f = freq_bin * PROBE.sample_rate / n
    traces = np.zeros((PROBE.n_elements, PROBE.angles.size, n))
    traces[:, :, :] = np.cos(2 * np.pi * f * t)[None, None, :]
    from refocus.beamform import RawAcquisition
    return RawAcquisition(traces, PROBE, C), f


class TestTemporalDft:
    def test_pure_tone_single_bin(self):
        n = PROBE.n_samples
        freq_bin = int(round(5e6 * n / PROBE.sample_rate))
        acq, f = tone_acquisition(freq_bin)
        spec = temporal_dft(acq)
        mags = np.abs(spec.data[:, 0, 0])
        assert np.count_nonzero(mags > 1e-6 * mags.max()) == 1
        j = int(np.argmax(mags))
        assert spec.omega[j] == pytest.approx(2 * np.pi * f)

    def test_parseval(self):
        rng = np.random.default_rng(0)
        from refocus.beamform import RawAcquisition
        traces = rng.standard_normal((PROBE.n_elements, PROBE.angles.size,
                                      PROBE.n_samples))
        acq = RawAcquisition(traces, PROBE, C)
        n = PROBE.n_samples
        spec = np.fft.rfft(traces, axis=-1)
        mags = np.abs(spec) ** 2
        total = mags[..., 0] + 2 * mags[..., 1:-1].sum(axis=-1)
        total += mags[..., -1] if n % 2 == 0 else 2 * mags[..., -1]
        assert np.allclose(np.sum(traces**2, axis=-1), total / n, rtol=1e-9)

    def test_delayed_impulse_phase_slope(self):
        # returned amplitudes follow the exp(-i w t) field convention, so a
        # delay tau appears as phase +w tau across the bins
        n = PROBE.n_samples
        delay_samples = 100
        tau = delay_samples / PROBE.sample_rate
        traces = np.zeros((PROBE.n_elements, PROBE.angles.size, n))
        traces[:, :, delay_samples] = 1.0
        from refocus.beamform import RawAcquisition
        spec = temporal_dft(RawAcquisition(traces, PROBE, C))
        phases = np.unwrap(np.angle(spec.data[:, 0, 0]))
        slope = np.polyfit(spec.omega, phases, 1)[0]
        assert slope == pytest.approx(tau, rel=1e-6)


def single_target_acq(x0=0.0, z0=12e-3, amp=3.0):
    scene = Scatterers(np.array([x0]), np.array([z0]), np.array([amp + 0j]))
    return simulate_acquisition(PROBE, scene, C)


class TestFocusing:
    def test_zero_input_gives_zero(self):
        from refocus.beamform import RawAcquisition
        traces = np.zeros((PROBE.n_elements, PROBE.angles.size, PROBE.n_samples))
        spec = temporal_dft(RawAcquisition(traces, PROBE, C))
        x = np.linspace(-3e-3, 3e-3, 8)
        out = focus_depth(spec, 10e-3, C, x)
        assert all(np.all(m.data == 0) for m in out)

    def test_single_scatterer_diagonal_peak_per_frequency(self):
        x0 = 1.1e-3
        acq = single_target_acq(x0=x0)
        spec = temporal_dft(acq, band=(6e6, 9e6))
        x = (np.arange(32) - 15.5) * 0.4e-3
        mats = focus_depth(spec, 12e-3, C, x)
        target = int(np.argmin(np.abs(x - x0)))
        hits = 0
        for m in mats[:: max(len(mats) // 10, 1)]:
            diag = np.abs(np.diag(m.data))
            if abs(int(np.argmax(diag)) - target) <= 1:
                hits += 1
        assert hits >= 0.8 * len(mats[:: max(len(mats) // 10, 1)])

    def test_matrix_product_equals_delay_and_sum_loop(self):
        # 8 elements, 5 angles: matrix beamforming against the explicit
        # double loop with the same propagator phases
        probe = ProbeConfig(n_elements=8, pitch=0.3e-3, f0=5e6, band=(3e6, 7e6),
                            sample_rate=20e6, record_length=20e-6,
                            angles=np.deg2rad(np.linspace(-10, 10, 5)))
        rng = np.random.default_rng(1)
        data = rng.standard_normal((8, 5)) + 1j * rng.standard_normal((8, 5))
        omega = 2 * np.pi * 5e6
        x = np.linspace(-1e-3, 1e-3, 8)
        z = 8e-3
        g = point_source_propagator(x, z, probe.element_positions, omega, C)
        p = plane_wave_propagator(probe.angles, x, z, omega, C)
        fast = np.conj(g.data) @ data @ np.conj(p.data.T)
        slow = np.zeros((8, 8), complex)
        for io in range(8):
            for ii in range(8):
                for iu in range(8):
                    for it in range(5):
                        slow[io, ii] += (np.conj(g.data[io, iu]) * data[iu, it]
                                         * np.conj(p.data[ii, it]))
        assert np.linalg.norm(fast - slow) <= 1e-9 * np.linalg.norm(slow)


class TestBroadband:
    def test_two_identical_bins_double(self):
        from refocus.axes import AxisKind, BasisAxis, ComplexMatrix
        ax = BasisAxis(AxisKind.FOCAL_X, np.arange(3.0))
        m = ComplexMatrix(ax, ax, np.full((3, 3), 1.0 + 2.0j))
        out = broadband_stack([m, m])
        assert np.allclose(out.data, 2.0 * m.data)

    def test_order_fixed_bitwise(self):
        from refocus.axes import AxisKind, BasisAxis, ComplexMatrix
        rng = np.random.default_rng(2)
        ax = BasisAxis(AxisKind.FOCAL_X, np.arange(4.0))
        mats = [ComplexMatrix(ax, ax, rng.standard_normal((4, 4))
                              + 1j * rng.standard_normal((4, 4))) for _ in range(6)]
        a = broadband_stack(mats).data
        b = broadband_stack(mats).data
        assert np.array_equal(a, b)

    def test_gating_reduces_off_depth_energy(self):
        acq = single_target_acq(z0=12e-3)
        stack = Beamformer(speed=C, fov=(-3e-3, 3e-3, 9e-3, 15e-3),
                           dz=0.5e-3).transform(acq)
        diag_energy = np.array([np.sum(np.abs(np.diag(m)) ** 2)
                                for m in stack.data])
        focus = int(np.argmin(np.abs(stack.z - 12e-3)))
        far = np.concatenate([diag_energy[:max(focus - 4, 0)],
                              diag_energy[focus + 5:]])
        assert diag_energy[focus] > 10.0 * far.max(initial=0.0)


class TestConfocalImage:
    def test_diag_modulus_squared(self):
        from refocus.beamform import FocusedStack
        data = np.zeros((1, 3, 3), complex)
        data[0] = np.diag([1 + 1j, 2.0, 3.0])
        stack = FocusedStack(data, np.arange(3.0), np.array([1.0]), C, 1.0, 1.0)
        img = confocal_image(stack)
        assert np.allclose(img[0], [2.0, 4.0, 9.0])
        assert np.all(img >= 0)

    def test_point_target_fwhm_matches_diffraction(self):
        # geometry chosen so transmit and receive apertures match:
        # z = A / (2 tan 24deg); band symmetric about f0
        probe = ProbeConfig(n_elements=64, pitch=0.2e-3, f0=7.5e6,
                            band=(5e6, 10e6), sample_rate=25e6,
                            record_length=40e-6,
                            angles=np.deg2rad(np.linspace(-24, 24, 31)))
        z0 = probe.aperture / (2 * np.tan(np.deg2rad(24.0)))
        scene = Scatterers(np.array([0.0]), np.array([z0]), np.array([1.0 + 0j]))
        acq = simulate_acquisition(probe, scene, C)
        stack = Beamformer(speed=C, fov=(-3.2e-3, 3.2e-3, z0 - 0.6e-3, z0 + 0.6e-3),
                           dx=0.05e-3, dz=0.2e-3).transform(acq)
        img = confocal_image(stack)
        row = img[int(np.argmax(img.max(axis=1)))]
        # -6 dB width of the intensity profile (amplitude half-maximum)
        fwhm = _width_at(row, level=0.25, dx=stack.dx)
        predicted = (C / probe.f0) * z0 / probe.aperture
        assert abs(fwhm - predicted) <= 0.2 * predicted

    def test_point_target_off_diagonal_rejection(self):
        # depth grid aligned so one plane sits exactly on the target
        acq = single_target_acq(z0=12e-3)
        stack = Beamformer(speed=C, fov=(-6.4e-3, 6.4e-3, 11.8e-3, 12.2e-3),
                           dz=0.4e-3).transform(acq)
        focus = int(np.argmin(np.abs(stack.z - 12e-3)))
        assert stack.z[focus] == pytest.approx(12e-3)
        m = np.abs(stack.data[focus]) ** 2
        nx = m.shape[0]
        io, ii = np.meshgrid(np.arange(nx), np.arange(nx), indexing="ij")
        far = np.abs(io - ii) > 3
        assert m[far].mean() <= 1e-2 * np.diag(m).mean()


def _width_at(profile: np.ndarray, level: float, dx: float) -> float:
    """Width of the main lobe at ``level`` times the peak, interpolated."""
    i = int(np.argmax(profile))
    thr = level * profile[i]
    lo = i
    while lo > 0 and profile[lo] > thr:
        lo -= 1
    hi = i
    while hi < profile.size - 1 and profile[hi] > thr:
        hi += 1
    left = lo + (thr - profile[lo]) / (profile[lo + 1] - profile[lo])
    right = hi - (thr - profile[hi]) / (profile[hi - 1] - profile[hi])
    return (right - left) * dx


class TestBeamformer:
    def test_linearity(self):
        from refocus.beamform import RawAcquisition
        a = single_target_acq(x0=-1e-3)
        b = single_target_acq(x0=1.5e-3)
        combo = RawAcquisition(2.0 * a.traces + 0.5 * b.traces, PROBE, C)
        bf = Beamformer(speed=C, fov=(-3e-3, 3e-3, 11e-3, 13e-3), dz=0.5e-3)
        sa = bf.transform(a).data
        sb = bf.transform(b).data
        sc = bf.transform(combo).data
        ref = 2.0 * sa + 0.5 * sb
        assert np.max(np.abs(sc - ref)) <= 1e-10 * np.max(np.abs(ref))

    def test_threads_bitwise_identical(self):
        acq = single_target_acq()
        bf1 = Beamformer(speed=C, fov=(-3e-3, 3e-3, 10e-3, 14e-3), dz=0.5e-3,
                         threads=1)
        bf3 = Beamformer(speed=C, fov=(-3e-3, 3e-3, 10e-3, 14e-3), dz=0.5e-3,
                         threads=3)
        assert np.array_equal(bf1.transform(acq).data, bf3.transform(acq).data)

    def test_matches_focus_depth_composition(self):
        acq = single_target_acq()
        band = (5e6, 9e6)
        x = np.linspace(-2e-3, 2e-3, 9)
        spec = temporal_dft(acq, band)
        mats = focus_depth(spec, 12e-3, C, x)
        weights = pulse_spectrum(spec.omega / (2 * np.pi), band, 0.25)
        manual = broadband_stack(mats, weights).data
        bf = Beamformer(speed=C, fov=(-2.25e-3, 2.25e-3, 11.75e-3, 12.25e-3),
                        dx=0.5e-3, dz=0.5e-3, band=band)
        stack = bf.transform(acq)
        assert stack.x == pytest.approx(x)
        assert np.max(np.abs(stack.data[0] - manual)) \
            <= 1e-9 * np.max(np.abs(manual))

    def test_get_params_roundtrip(self):
        bf = Beamformer(speed=1500.0, threads=2)
        params = bf.get_params()
        clone = Beamformer(**params)
        assert clone.speed == 1500.0 and clone.threads == 2
