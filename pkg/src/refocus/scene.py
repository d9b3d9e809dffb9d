"""Ground-truth scenes: probe geometry, phantoms and layered media.

The phantom is a random cloud of unresolved scatterers (speckle) plus
optional bright point targets and a hyperechoic inclusion, mirroring the
ingredients a tissue-mimicking phantom provides for resolution and
contrast measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .validation import check_positive

__all__ = [
    "ProbeConfig",
    "PhantomSpec",
    "Scatterers",
    "LayeredMedium",
    "build_phantom",
    "fermat_travel_time",
]


@dataclass(frozen=True)
class ProbeConfig:
    """Linear-array probe and plane-wave acquisition sequence.

    Defaults match a 256-element, 0.2 mm pitch array firing 49 plane waves
    between -24 and +24 degrees, a 7.5 MHz burst with a 2.5-10 MHz band,
    sampled at 30 MHz for 124 us.
    """

    n_elements: int = 256
    pitch: float = 0.2e-3
    f0: float = 7.5e6
    band: tuple[float, float] = (2.5e6, 10.0e6)
    sample_rate: float = 30.0e6
    angles: np.ndarray = field(
        default_factory=lambda: np.deg2rad(np.linspace(-24.0, 24.0, 49))
    )
    record_length: float = 124e-6

    def __post_init__(self):
        if self.n_elements < 8:
            raise ValueError("need at least 8 elements")
        check_positive("pitch", self.pitch)
        f_min, f_max = self.band
        if not 0 < f_min < self.f0 < f_max <= self.sample_rate / 2:
            raise ValueError(
                "band must satisfy 0 < f_min < f0 < f_max <= sample_rate/2"
            )
        angles = np.asarray(self.angles, dtype=float)
        if angles.ndim != 1 or angles.size == 0:
            raise ValueError("angles must be a non-empty 1D array")
        if angles.size > 1 and not np.all(np.diff(angles) > 0):
            raise ValueError("angles must be strictly increasing")
        check_positive("record_length", self.record_length)
        a = np.ascontiguousarray(angles)
        a.flags.writeable = False
        object.__setattr__(self, "angles", a)

    @property
    def element_positions(self) -> np.ndarray:
        """Element x coordinates, centered on 0."""
        n = self.n_elements
        return (np.arange(n) - (n - 1) / 2.0) * self.pitch

    @property
    def aperture(self) -> float:
        return self.n_elements * self.pitch

    @property
    def n_samples(self) -> int:
        return int(round(self.record_length * self.sample_rate))


@dataclass(frozen=True)
class PhantomSpec:
    """Scene recipe: field of view, speckle statistics and bright features.

    fov is (x_min, x_max, z_min, z_max) in meters.  speckle_density is the
    mean number of scatterers per resolution cell; speckle_rms scales their
    circular complex Gaussian reflectivity.  point_targets is a list of
    (x, z, reflectivity); inclusion an optional (center_x, center_z,
    radius, amplitude multiplier) applied to speckle scatterers inside.
    """

    fov: tuple[float, float, float, float]
    speckle_density: float = 3.0
    speckle_rms: float = 1.0
    point_targets: tuple = ()
    inclusion: tuple | None = None
    rng_seed: int = 0

    def __post_init__(self):
        x0, x1, z0, z1 = self.fov
        if not (x1 > x0 and z1 > z0):
            raise ValueError("field of view must have positive extent")
        if self.speckle_density < 0:
            raise ValueError("speckle_density must be >= 0")
        for t in self.point_targets:
            x, z, _ = t
            if not (x0 <= x <= x1 and z0 <= z <= z1):
                raise ValueError(f"point target {t} outside field of view")


@dataclass(frozen=True)
class Scatterers:
    """Discrete scatterer cloud: positions and complex reflectivities."""

    x: np.ndarray
    z: np.ndarray
    reflectivity: np.ndarray

    def __post_init__(self):
        for name in ("x", "z", "reflectivity"):
            a = np.ascontiguousarray(getattr(self, name))
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if not (self.x.shape == self.z.shape == self.reflectivity.shape):
            raise ValueError("scatterer arrays must share one shape")

    def __len__(self) -> int:
        return self.x.size


def build_phantom(spec: PhantomSpec, resolution: tuple[float, float]) -> Scatterers:
    """Draw a scatterer cloud from a phantom recipe.

    The speckle count is Poisson with mean density * (number of resolution
    cells); positions are uniform over the field of view with depths
    quantized to the axial grid so that per-depth scattering matrices are
    exact.  Reflectivities are circular complex Gaussian with the requested
    RMS.  Point targets and the inclusion are applied afterwards.
    Deterministic for a fixed ``rng_seed``.
    """
    dx, dz = resolution
    check_positive("lateral resolution", dx)
    check_positive("axial resolution", dz)
    x0, x1, z0, z1 = spec.fov
    rng = np.random.default_rng(spec.rng_seed)

    n_cells = ((x1 - x0) / dx) * ((z1 - z0) / dz)
    count = int(rng.poisson(spec.speckle_density * n_cells)) if spec.speckle_density > 0 else 0

    xs = rng.uniform(x0, x1, size=count)
    zs = rng.uniform(z0, z1, size=count)
    # snap depths onto the axial grid anchored at z0
    zs = z0 + np.round((zs - z0) / dz) * dz
    zs = np.clip(zs, z0, z1)
    amp = spec.speckle_rms / math.sqrt(2.0)
    refl = rng.normal(0.0, amp, count) + 1j * rng.normal(0.0, amp, count)

    if spec.inclusion is not None:
        cx, cz, radius, mult = spec.inclusion
        inside = (xs - cx) ** 2 + (zs - cz) ** 2 <= radius**2
        refl = np.where(inside, refl * mult, refl)

    tx = np.array([t[0] for t in spec.point_targets], dtype=float)
    tz = np.array([t[1] for t in spec.point_targets], dtype=float)
    tr = np.array([t[2] for t in spec.point_targets], dtype=complex)
    tz = z0 + np.round((tz - z0) / dz) * dz

    return Scatterers(
        x=np.concatenate([xs, tx]),
        z=np.concatenate([zs, tz]),
        reflectivity=np.concatenate([refl, tr]),
    )


@dataclass(frozen=True)
class LayeredMedium:
    """Horizontally stratified medium.

    ``interfaces`` are the layer-top depths (ascending, first one at 0);
    ``speeds`` the sound speed inside each layer.  The last layer extends
    to infinity.
    """

    interfaces: tuple[float, ...]
    speeds: tuple[float, ...]

    def __post_init__(self):
        ifc = tuple(float(d) for d in self.interfaces)
        spd = tuple(float(c) for c in self.speeds)
        if len(ifc) != len(spd):
            raise ValueError("need one speed per layer")
        if len(ifc) == 0:
            raise ValueError("medium needs at least one layer")
        if ifc[0] != 0.0:
            raise ValueError("first interface must sit at depth 0")
        if any(b <= a for a, b in zip(ifc, ifc[1:])):
            raise ValueError("interfaces must be strictly increasing")
        if any(c <= 0 for c in spd):
            raise ValueError("speeds must be positive")
        object.__setattr__(self, "interfaces", ifc)
        object.__setattr__(self, "speeds", spd)

    def speed_at(self, z: float) -> float:
        idx = 0
        for i, top in enumerate(self.interfaces):
            if z >= top:
                idx = i
        return self.speeds[idx]

    def thicknesses(self, z_bottom: float) -> list[tuple[float, float]]:
        """(thickness, speed) of every layer slab above ``z_bottom``."""
        out = []
        bounds = list(self.interfaces) + [z_bottom]
        for i, c in enumerate(self.speeds):
            top, bot = bounds[i], min(bounds[i + 1], z_bottom)
            if bot > top:
                out.append((bot - top, c))
            if bounds[i + 1] >= z_bottom:
                break
        return out


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def fermat_travel_time(src: tuple[float, float], dst: tuple[float, float],
                       medium: LayeredMedium, max_iter: int = 200) -> float:
    """Minimal travel time between two points through a layered medium.

    Supports endpoints in the same layer (straight ray) or separated by a
    single interface, where the crossing abscissa is found by golden
    section search.  Serves as the independent ray oracle for validating
    simulated delays.
    """
    (xs, zs), (xd, zd) = src, dst
    if zd < zs:
        xs, zs, xd, zd = xd, zd, xs, zs
    crossed = [d for d in medium.interfaces if zs < d < zd]
    if not crossed:
        c = medium.speed_at(0.5 * (zs + zd))
        return math.hypot(xd - xs, zd - zs) / c
    if len(crossed) > 1:
        raise ValueError("travel-time oracle supports at most one crossed interface")
    zi = crossed[0]
    c1 = medium.speed_at(0.5 * (zs + zi))
    c2 = medium.speed_at(0.5 * (zi + zd))

    def time_of(xc: float) -> float:
        return (math.hypot(xc - xs, zi - zs) / c1
                + math.hypot(xd - xc, zd - zi) / c2)

    span = abs(xd - xs) + abs(zd - zs) + 1e-6
    lo, hi = min(xs, xd) - span, max(xs, xd) + span
    for it in range(max_iter + 1):
        if hi - lo < 1e-13 * span + 1e-15:
            break
        m1 = hi - _GOLDEN * (hi - lo)
        m2 = lo + _GOLDEN * (hi - lo)
        if time_of(m1) <= time_of(m2):
            hi = m2
        else:
            lo = m1
    else:
        raise ArithmeticError(
            f"travel-time minimization did not converge; bracket {hi - lo:.3e} m"
        )
    return time_of(0.5 * (lo + hi))
