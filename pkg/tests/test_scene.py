"""Phantom generation, layered media and the travel-time oracle."""
import numpy as np
import pytest

from refocus.axes import AxisKind, BasisAxis, ComplexMatrix
from refocus.scene import (
    LayeredMedium,
    PhantomSpec,
    ProbeConfig,
    build_phantom,
    fermat_travel_time,
)


class TestAxes:
    def test_rejects_non_monotonic(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            BasisAxis(AxisKind.FOCAL_X, [0.0, 0.0, 1.0])

    def test_rejects_shape_mismatch(self):
        ax = BasisAxis(AxisKind.FOCAL_X, [0.0, 1.0])
        with pytest.raises(ValueError, match="shape"):
            ComplexMatrix(ax, ax, np.zeros((2, 3)))

    def test_rejects_non_finite(self):
        ax = BasisAxis(AxisKind.FOCAL_X, [0.0, 1.0])
        with pytest.raises(ValueError, match="finite"):
            ComplexMatrix(ax, ax, np.array([[1.0, np.nan], [0, 0]]))

    def test_payload_readonly(self):
        ax = BasisAxis(AxisKind.FOCAL_X, [0.0, 1.0])
        m = ComplexMatrix(ax, ax, np.zeros((2, 2)))
        with pytest.raises(ValueError):
            m.data[0, 0] = 1.0


class TestProbeConfig:
    def test_defaults_are_valid(self):
        probe = ProbeConfig()
        assert probe.n_elements == 256
        assert probe.angles.size == 49
        assert probe.element_positions.size == 256
        assert probe.element_positions.sum() == pytest.approx(0.0, abs=1e-12)

    def test_rejects_bad_band(self):
        with pytest.raises(ValueError):
            ProbeConfig(band=(8e6, 6e6))
        with pytest.raises(ValueError):
            ProbeConfig(band=(2.5e6, 20e6))  # beyond Nyquist

    def test_rejects_tiny_array(self):
        with pytest.raises(ValueError):
            ProbeConfig(n_elements=4)


class TestBuildPhantom:
    FOV = (-5e-3, 5e-3, 5e-3, 15e-3)

    def test_zero_density_one_target(self):
        spec = PhantomSpec(self.FOV, speckle_density=0.0,
                           point_targets=((0.0, 10e-3, 2.0),))
        scene = build_phantom(spec, (0.2e-3, 0.1e-3))
        assert len(scene) == 1
        assert scene.reflectivity[0] == 2.0

    def test_deterministic_under_seed(self):
        spec = PhantomSpec(self.FOV, speckle_density=2.0, rng_seed=42)
        a = build_phantom(spec, (0.2e-3, 0.1e-3))
        b = build_phantom(spec, (0.2e-3, 0.1e-3))
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.reflectivity, b.reflectivity)

    def test_poisson_count_statistics(self):
        # 100 cells at density 10: mean count 1000, sd ~ sqrt(1000)
        spec0 = PhantomSpec((0.0, 10e-3, 0.0, 10e-3), speckle_density=10.0)
        counts = []
        for seed in range(100):
            spec = PhantomSpec(spec0.fov, speckle_density=10.0, rng_seed=seed)
            counts.append(len(build_phantom(spec, (1e-3, 1e-3))))
        mean = np.mean(counts)
        # 3 sigma of the mean of 100 Poisson(1000) draws
        assert abs(mean - 1000.0) < 3.0 * np.sqrt(1000.0 / 100.0)

    def test_depth_quantized_to_grid(self):
        spec = PhantomSpec(self.FOV, speckle_density=3.0, rng_seed=7)
        dz = 0.1e-3
        scene = build_phantom(spec, (0.2e-3, dz))
        steps = (scene.z - self.FOV[2]) / dz
        assert np.max(np.abs(steps - np.round(steps))) < 1e-9

    def test_inclusion_scales_reflectivity(self):
        spec = PhantomSpec(self.FOV, speckle_density=20.0, rng_seed=3,
                           inclusion=(0.0, 10e-3, 2e-3, 10.0))
        plain = build_phantom(PhantomSpec(self.FOV, speckle_density=20.0, rng_seed=3),
                              (0.2e-3, 0.1e-3))
        boosted = build_phantom(spec, (0.2e-3, 0.1e-3))
        inside = (boosted.x**2 + (boosted.z - 10e-3) ** 2) <= (2e-3) ** 2
        assert inside.any()
        ratio = np.abs(boosted.reflectivity[inside]) / np.abs(plain.reflectivity[inside])
        assert np.allclose(ratio, 10.0)

    def test_target_outside_fov_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            PhantomSpec(self.FOV, point_targets=((1.0, 1.0, 1.0),))


class TestLayeredMedium:
    def test_validation(self):
        with pytest.raises(ValueError):
            LayeredMedium((0.0, 0.0), (1500.0, 1600.0))
        with pytest.raises(ValueError):
            LayeredMedium((0.0,), (-1.0,))
        with pytest.raises(ValueError):
            LayeredMedium((0.001,), (1500.0,))

    def test_speed_lookup(self):
        med = LayeredMedium((0.0, 15e-3), (2750.0, 1542.0))
        assert med.speed_at(5e-3) == 2750.0
        assert med.speed_at(20e-3) == 1542.0

    def test_thicknesses(self):
        med = LayeredMedium((0.0, 15e-3), (2750.0, 1542.0))
        slabs = med.thicknesses(25e-3)
        assert [c for _, c in slabs] == [2750.0, 1542.0]
        assert [d for d, _ in slabs] == pytest.approx([15e-3, 10e-3])


class TestFermat:
    MED = LayeredMedium((0.0, 15e-3), (2750.0, 1542.0))

    def test_normal_incidence(self):
        t = fermat_travel_time((0.0, 0.0), (0.0, 25e-3), self.MED)
        assert t == pytest.approx(0.015 / 2750.0 + 0.010 / 1542.0, rel=1e-9)

    def test_homogeneous(self):
        med = LayeredMedium((0.0,), (1500.0,))
        t = fermat_travel_time((0.0, 0.0), (3e-3, 4e-3), med)
        assert t == pytest.approx(5e-3 / 1500.0, rel=1e-12)

    def test_oblique_matches_grid_search(self):
        src, dst = (0.0, 0.0), (20e-3, 25e-3)
        t = fermat_travel_time(src, dst, self.MED)
        xc = np.linspace(-5e-3, 25e-3, 1_000_000)
        t_grid = (np.hypot(xc - src[0], 15e-3) / 2750.0
                  + np.hypot(dst[0] - xc, 10e-3) / 1542.0)
        assert abs(t - t_grid.min()) < 1e-10

    def test_stationarity(self):
        src, dst = (0.0, 0.0), (20e-3, 25e-3)
        t = fermat_travel_time(src, dst, self.MED)
        # perturbing the crossing point must not find a faster path
        for dx in (-1e-6, 1e-6):
            xc_opt = None
            # recover the implied crossing by brute scan near optimum
            xs = np.linspace(0.0, 20e-3, 20001)
            times = (np.hypot(xs, 15e-3) / 2750.0
                     + np.hypot(20e-3 - xs, 10e-3) / 1542.0)
            xc_opt = xs[np.argmin(times)]
            t_pert = (np.hypot(xc_opt + dx, 15e-3) / 2750.0
                      + np.hypot(20e-3 - xc_opt - dx, 10e-3) / 1542.0)
            assert t_pert >= t - 1e-12

    def test_rejects_two_interfaces(self):
        med = LayeredMedium((0.0, 5e-3, 10e-3), (1500.0, 2000.0, 1500.0))
        with pytest.raises(ValueError, match="one crossed interface"):
            fermat_travel_time((0.0, 1e-3), (0.0, 20e-3), med)
