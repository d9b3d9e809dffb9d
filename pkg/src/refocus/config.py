"""INI-style pipeline configuration.

Sections: [probe] (array and sequence), [medium] (true speeds, aberrator,
reverberation), [phantom] (scene content), [pipeline] (processing knobs).
All quantities are SI (meters, Hz, seconds, m/s) except keys with an
explicit unit suffix such as ``max_angle_deg``.  Unknown sections or keys
are rejected, and every error message carries its line number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scene import LayeredMedium, PhantomSpec, ProbeConfig

__all__ = ["ConfigError", "MediumConfig", "ProcessingConfig", "PipelineConfig",
           "parse_config", "default_config_text"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MediumConfig:
    """Ground-truth propagation: background speed, aberrator, reverberation."""

    c: float = 1540.0
    layers: LayeredMedium | None = None
    aberrator: str = "none"  # none | layers | random
    screen_rms: float = 2.0
    screen_corr: float = 0.2
    screen_seed: int = 101
    reverb_amplitude: float = 0.0
    reverb_coeff: float = 0.5
    reverb_order: int = 3


@dataclass(frozen=True)
class ProcessingConfig:
    """Beamforming, filtering, correction and sweep parameters."""

    model_c: float = 1540.0
    fov: tuple[float, float, float, float] | None = None  # None: phantom fov
    dx: float | None = None
    dz: float | None = None
    k_max_policy: str = "aperture"  # aperture | full
    taper: float = 0.25
    pad_factor: int = 4
    filter_enabled: bool = True
    filter_dk_scale: float = 1.0
    filter_alpha: str | float = "adaptive"
    filter_orientation: str = "antidiagonal"
    filter_band_center: float = 0.0
    window_half_x: float = 2.5e-3
    window_half_z: float = 2.5e-3
    stride: int = 0
    n_patches: int = 0  # 0: ceil(entropy)
    sweep_c_min: float = 1400.0
    sweep_c_max: float = 1700.0
    sweep_c_step: float = 10.0
    noise_snr_db: float = math.inf
    floor_db: float = -60.0
    seed: int = 7


@dataclass(frozen=True)
class PipelineConfig:
    probe: ProbeConfig
    medium: MediumConfig
    phantom: PhantomSpec
    pipeline: ProcessingConfig

    @property
    def imaging_fov(self) -> tuple[float, float, float, float]:
        return self.pipeline.fov if self.pipeline.fov is not None else self.phantom.fov


def _parse_float(s):
    return float(s)


def _parse_int(s):
    return int(s)


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_float_or_inf(s):
    v = s.strip().lower()
    if v in ("inf", "+inf", "infinity"):
        return math.inf
    return float(s)


def _parse_alpha(s):
    v = s.strip().lower()
    if v == "adaptive":
        return "adaptive"
    return float(s)


def _parse_layers(s):
    s = s.strip()
    if not s:
        return None
    interfaces, speeds = [], []
    for part in s.split(","):
        depth, _, speed = part.strip().partition(":")
        if not speed:
            raise ValueError(f"layer entry {part!r} is not depth:speed")
        interfaces.append(float(depth))
        speeds.append(float(speed))
    return LayeredMedium(tuple(interfaces), tuple(speeds))


def _parse_targets(s):
    s = s.strip()
    if not s:
        return ()
    out = []
    for group in s.split(";"):
        vals = group.split()
        if len(vals) != 3:
            raise ValueError(f"target {group!r} is not 'x z amplitude'")
        out.append((float(vals[0]), float(vals[1]), float(vals[2])))
    return tuple(out)


def _parse_inclusion(s):
    s = s.strip()
    if not s:
        return None
    vals = s.split()
    if len(vals) != 4:
        raise ValueError(f"inclusion {s!r} is not 'x z radius multiplier'")
    return (float(vals[0]), float(vals[1]), float(vals[2]), float(vals[3]))


_SCHEMA = {
    "probe": {
        "n_elements": _parse_int,
        "pitch": _parse_float,
        "f0": _parse_float,
        "f_min": _parse_float,
        "f_max": _parse_float,
        "sample_rate": _parse_float,
        "n_angles": _parse_int,
        "max_angle_deg": _parse_float,
        "record_length": _parse_float,
    },
    "medium": {
        "c": _parse_float,
        "layers": _parse_layers,
        "aberrator": str.strip,
        "screen_rms": _parse_float,
        "screen_corr": _parse_float,
        "screen_seed": _parse_int,
        "reverb_amplitude": _parse_float,
        "reverb_coeff": _parse_float,
        "reverb_order": _parse_int,
    },
    "phantom": {
        "x_min": _parse_float,
        "x_max": _parse_float,
        "z_min": _parse_float,
        "z_max": _parse_float,
        "speckle_density": _parse_float,
        "speckle_rms": _parse_float,
        "point_targets": _parse_targets,
        "inclusion": _parse_inclusion,
        "seed": _parse_int,
    },
    "pipeline": {
        "model_c": _parse_float,
        "x_min": _parse_float,
        "x_max": _parse_float,
        "z_min": _parse_float,
        "z_max": _parse_float,
        "dx": _parse_float,
        "dz": _parse_float,
        "k_max_policy": str.strip,
        "taper": _parse_float,
        "pad_factor": _parse_int,
        "filter_enabled": _parse_bool,
        "filter_dk_scale": _parse_float,
        "filter_alpha": _parse_alpha,
        "filter_orientation": str.strip,
        "filter_band_center": _parse_float,
        "window_half_x": _parse_float,
        "window_half_z": _parse_float,
        "stride": _parse_int,
        "n_patches": _parse_int,
        "sweep_c_min": _parse_float,
        "sweep_c_max": _parse_float,
        "sweep_c_step": _parse_float,
        "noise_snr_db": _parse_float_or_inf,
        "floor_db": _parse_float,
        "seed": _parse_int,
    },
}

_PROBE_DEFAULTS = {
    "n_elements": 64, "pitch": 0.2e-3, "f0": 7.5e6, "f_min": 2.5e6,
    "f_max": 10.0e6, "sample_rate": 25.0e6, "n_angles": 31,
    "max_angle_deg": 24.0, "record_length": 48e-6,
}

_PHANTOM_DEFAULTS = {
    "x_min": -6.4e-3, "x_max": 6.4e-3, "z_min": 4e-3, "z_max": 20e-3,
    "speckle_density": 3.0, "speckle_rms": 1.0, "point_targets": (),
    "inclusion": None, "seed": 1234,
}


def parse_config(text: str) -> PipelineConfig:
    """Parse and validate configuration text."""
    values: dict[str, dict[str, object]] = {s: {} for s in _SCHEMA}
    lines_of: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key '{key}' in [{section}]")
        if key in values[section]:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        try:
            values[section][key] = _SCHEMA[section][key](value.strip())
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}") from exc
        lines_of[(section, key)] = lineno

    def where(section: str, key: str) -> str:
        n = lines_of.get((section, key))
        return f"line {n}" if n is not None else f"default for [{section}] {key}"

    p = dict(_PROBE_DEFAULTS)
    p.update(values["probe"])
    try:
        probe = ProbeConfig(
            n_elements=p["n_elements"], pitch=p["pitch"], f0=p["f0"],
            band=(p["f_min"], p["f_max"]), sample_rate=p["sample_rate"],
            angles=np.deg2rad(np.linspace(-p["max_angle_deg"], p["max_angle_deg"],
                                          p["n_angles"])),
            record_length=p["record_length"],
        )
    except ValueError as exc:
        raise ConfigError(f"[probe] ({where('probe', 'n_elements')}): {exc}") from exc

    m = values["medium"]
    try:
        medium = MediumConfig(**m)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[medium]: {exc}") from exc
    if medium.aberrator not in ("none", "layers", "random"):
        raise ConfigError(
            f"{where('medium', 'aberrator')}: aberrator must be none, layers or random"
        )
    if medium.aberrator == "layers" and medium.layers is None:
        raise ConfigError(f"{where('medium', 'aberrator')}: aberrator=layers needs 'layers'")
    if medium.reverb_amplitude > 0 and medium.layers is None:
        raise ConfigError(
            f"{where('medium', 'reverb_amplitude')}: reverberation needs 'layers'"
        )

    ph = dict(_PHANTOM_DEFAULTS)
    ph.update(values["phantom"])
    try:
        phantom = PhantomSpec(
            fov=(ph["x_min"], ph["x_max"], ph["z_min"], ph["z_max"]),
            speckle_density=ph["speckle_density"], speckle_rms=ph["speckle_rms"],
            point_targets=ph["point_targets"], inclusion=ph["inclusion"],
            rng_seed=ph["seed"],
        )
    except ValueError as exc:
        raise ConfigError(f"[phantom] ({where('phantom', 'x_min')}): {exc}") from exc

    pl = dict(values["pipeline"])
    fov_keys = [pl.pop(k, None) for k in ("x_min", "x_max", "z_min", "z_max")]
    fov = None
    if any(v is not None for v in fov_keys):
        if any(v is None for v in fov_keys):
            raise ConfigError(
                f"{where('pipeline', 'x_min')}: give all of x_min/x_max/z_min/z_max or none"
            )
        fov = tuple(fov_keys)
    try:
        pipeline = ProcessingConfig(fov=fov, **pl)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[pipeline]: {exc}") from exc
    if pipeline.k_max_policy not in ("aperture", "full"):
        raise ConfigError(
            f"{where('pipeline', 'k_max_policy')}: k_max_policy must be aperture or full"
        )
    if pipeline.filter_orientation not in ("antidiagonal", "diagonal"):
        raise ConfigError(
            f"{where('pipeline', 'filter_orientation')}: orientation must be "
            "antidiagonal or diagonal"
        )
    if not pipeline.model_c > 0:
        raise ConfigError(f"{where('pipeline', 'model_c')}: model_c must be > 0")
    if not -200.0 < pipeline.floor_db < 0:
        raise ConfigError(f"{where('pipeline', 'floor_db')}: floor_db must be negative")

    return PipelineConfig(probe, medium, phantom, pipeline)


def default_config_text() -> str:
    """Desk-scale synthetic configuration (commented)."""
    return """\
# refocus pipeline configuration (SI units unless suffixed)

[probe]
n_elements = 64
pitch = 0.2e-3
f0 = 7.5e6
f_min = 2.5e6
f_max = 10e6
sample_rate = 25e6
n_angles = 31
max_angle_deg = 24
record_length = 48e-6

[medium]
c = 1540
# layers = 0:2750, 0.003:1540      # depth:speed pairs, last layer is background
aberrator = random                 # none | layers | random
screen_rms = 2.0
screen_corr = 0.15
screen_seed = 101
reverb_amplitude = 0.0
reverb_coeff = 0.5
reverb_order = 3

[phantom]
x_min = -6.4e-3
x_max = 6.4e-3
z_min = 4e-3
z_max = 20e-3
speckle_density = 3.0
speckle_rms = 1.0
point_targets = 0.0 0.012 6.0
inclusion =
seed = 1234

[pipeline]
model_c = 1540
taper = 0.25
pad_factor = 4
filter_enabled = true
filter_dk_scale = 1.0
filter_alpha = adaptive
filter_orientation = antidiagonal
window_half_x = 2.0e-3
window_half_z = 2.0e-3
stride = 0                          # 0: half the window
n_patches = 0                       # 0: ceil(entropy)
sweep_c_min = 1400
sweep_c_max = 1700
sweep_c_step = 10
noise_snr_db = inf
floor_db = -60
seed = 7
"""
