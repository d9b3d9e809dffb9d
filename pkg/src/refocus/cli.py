"""Command-line pipeline driver.

Subcommands mirror the processing stages (simulate, beamform,
filter-reverb, distort, correct, sweep-speed, render) plus ``pipeline``
which chains them; every stage reads/writes CMX containers, CSV
diagnostics and PGM/PNG images, and a manifest records content hashes of
everything produced.  Identical config and seed give byte-identical
manifests for any thread count.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .beamform import Beamformer, FocusedStack, RawAcquisition, confocal_image
from .cmx import CmxError, read_cmx, write_cmx
from .config import ConfigError, PipelineConfig, default_config_text, parse_config
from .distortion import (
    FullFieldCorrector,
    IsoplanaticCorrector,
    recommended_patch_count,
    strehl_map,
)
from .farfield import ReverbFilter
from .render import render_db_image, render_linear_image
from .scene import build_phantom
from .screens import random_smooth_screen, screen_from_layers
from .simulate import (
    ReverbSpec,
    add_noise,
    band_bins,
    simulate_acquisition,
    synthesis_grid,
)
from .soundspeed import soundspeed_entropy_sweep


class UsageError(Exception):
    """Bad invocation: exits with status 2."""


class StageError(Exception):
    """Numerical or data failure inside a stage: exits with status 1."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, (int, float, np.floating))
                              else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_images(out: Path, name: str, image: np.ndarray, floor_db: float,
                  linear: bool = False) -> list[Path]:
    paths = []
    for fmt in ("pgm", "png"):
        data = (render_linear_image(image, fmt) if linear
                else render_db_image(image, floor_db, fmt))
        p = out / f"{name}.{fmt}"
        p.write_bytes(data)
        paths.append(p)
    return paths


def _model_k_max(cfg: PipelineConfig) -> float | None:
    if cfg.pipeline.k_max_policy == "full":
        return None
    theta = float(np.max(np.abs(cfg.probe.angles)))
    return 2.0 * math.pi * cfg.probe.f0 * math.sin(theta) / cfg.pipeline.model_c


def _resolution(cfg: PipelineConfig) -> tuple[float, float]:
    dx = cfg.pipeline.dx if cfg.pipeline.dx is not None else cfg.probe.pitch
    dz = (cfg.pipeline.dz if cfg.pipeline.dz is not None
          else cfg.pipeline.model_c / (2.0 * cfg.probe.f0))
    return dx, dz


def _build_screen(cfg: PipelineConfig):
    med = cfg.medium
    if med.aberrator == "none":
        return None
    k = synthesis_grid(cfg.probe, med.c, cfg.pipeline.pad_factor)
    _, omegas = band_bins(cfg.probe)
    if med.aberrator == "random":
        return random_smooth_screen(k, med.screen_rms, med.screen_corr,
                                    med.screen_seed, omegas)
    return screen_from_layers(med.layers, med.c, cfg.probe, k, omegas)


# ---------------------------------------------------------------------------
# Stages: each returns the list of artifacts it wrote
# ---------------------------------------------------------------------------

def stage_simulate(cfg: PipelineConfig, out: Path, threads: int, seed: int) -> list[Path]:
    scene = build_phantom(cfg.phantom, _resolution(cfg))
    screen = _build_screen(cfg)
    med = cfg.medium
    reverb = None
    if med.reverb_amplitude > 0:
        reverb = ReverbSpec(med.reverb_amplitude, med.reverb_coeff, med.reverb_order)
    acq = simulate_acquisition(cfg.probe, scene, med.c, screen=screen,
                               reverb=reverb, layer=med.layers,
                               pad_factor=cfg.pipeline.pad_factor,
                               taper=cfg.pipeline.taper, threads=threads)
    acq = add_noise(acq, cfg.pipeline.noise_snr_db, seed)
    artifacts = []
    p = out / "acquisition.cmx"
    write_cmx(p, acq.traces, [
        ("element-u", acq.probe.element_positions),
        ("angle-theta", acq.probe.angles),
        ("time-t", acq.times),
    ])
    artifacts.append(p)
    if screen is not None:
        p = out / "screen.cmx"
        write_cmx(p, screen.values, [("wavenumber-kx", screen.k),
                                     ("frequency-omega", screen.omega)])
        artifacts.append(p)
    return artifacts


def _load_acquisition(cfg: PipelineConfig, out: Path) -> RawAcquisition:
    path = out / "acquisition.cmx"
    if not path.exists():
        raise UsageError(f"missing input {path}; run 'simulate' first")
    traces, axes = read_cmx(path)
    expected = (cfg.probe.n_elements, cfg.probe.angles.size, cfg.probe.n_samples)
    if traces.shape != expected:
        raise StageError("beamform", ValueError(
            f"acquisition shape {traces.shape} does not match config {expected}"))
    return RawAcquisition(traces, cfg.probe, cfg.medium.c)


def stage_beamform(cfg: PipelineConfig, out: Path, threads: int) -> list[Path]:
    acq = _load_acquisition(cfg, out)
    dx, dz = _resolution(cfg)
    stack = Beamformer(speed=cfg.pipeline.model_c, fov=cfg.imaging_fov,
                       dx=dx, dz=dz, taper=cfg.pipeline.taper,
                       threads=threads).transform(acq)
    artifacts = []
    p = out / "stack_raw.cmx"
    write_cmx(p, stack.data, [("depth-z", stack.z), ("focal-x", stack.x),
                              ("focal-x", stack.x)])
    artifacts.append(p)
    artifacts += _write_images(out, "image_raw", confocal_image(stack),
                               cfg.pipeline.floor_db)
    return artifacts


def _load_stack(cfg: PipelineConfig, out: Path, name: str, stage: str) -> FocusedStack:
    path = out / f"{name}.cmx"
    if not path.exists():
        raise UsageError(f"missing input {path}")
    data, axes = read_cmx(path)
    z = axes[0][1]
    x = axes[1][1]
    dx = float(x[1] - x[0]) if x.size > 1 else cfg.probe.pitch
    dz = float(z[1] - z[0]) if z.size > 1 else dx
    return FocusedStack(np.asarray(data, complex), x, z, cfg.pipeline.model_c,
                        dx, dz, cfg.probe.band)


def stage_filter(cfg: PipelineConfig, out: Path) -> list[Path]:
    stack = _load_stack(cfg, out, "stack_raw", "filter-reverb")
    pl = cfg.pipeline
    extent = stack.x[-1] - stack.x[0] + stack.dx
    flt = ReverbFilter(dk=pl.filter_dk_scale / extent, alpha=pl.filter_alpha,
                       orientation=pl.filter_orientation,
                       band_center=pl.filter_band_center)
    if pl.filter_enabled:
        filtered = flt.transform(stack)
        report = flt.report_
    else:
        filtered = stack
        report = None
    artifacts = []
    p = out / "stack_filtered.cmx"
    write_cmx(p, filtered.data, [("depth-z", filtered.z), ("focal-x", filtered.x),
                                 ("focal-x", filtered.x)])
    artifacts.append(p)
    if report is not None:
        artifacts.append(_write_csv(
            out / "filter_report.csv",
            ["depth_m", "alpha", "in_band_mean", "off_band_mean"],
            zip(report.z, report.alpha, report.in_band_mean, report.off_band_mean)))
    artifacts += _write_images(out, "image_filtered", confocal_image(filtered),
                               pl.floor_db)
    return artifacts


def stage_distort(cfg: PipelineConfig, out: Path) -> list[Path]:
    stack = _load_stack(cfg, out, "stack_filtered", "distort")
    corrector = IsoplanaticCorrector(k_max=_model_k_max(cfg)).fit(stack)
    artifacts = []
    dist = corrector.distortion_
    p = out / "distortion.cmx"
    write_cmx(p, dist.data, [("wavenumber-kx", dist.k),
                             ("pixel-index", np.arange(dist.data.shape[1], dtype=float))])
    artifacts.append(p)
    p = out / "eigenvectors.cmx"
    write_cmx(p, corrector.eigenvectors_, [
        ("wavenumber-kx", corrector.k_),
        ("pixel-index", np.arange(corrector.eigenvectors_.shape[1], dtype=float))])
    artifacts.append(p)
    artifacts.append(_write_csv(
        out / "eigenvalues.csv", ["index", "sigma_hat"],
        ((i, v) for i, v in enumerate(corrector.eigenvalues_))))
    artifacts.append(_write_csv(
        out / "distortion_summary.csv", ["quantity", "value"],
        [("entropy", corrector.entropy_),
         ("recommended_patches", recommended_patch_count(corrector.entropy_)),
         ("n_inputs", corrector.correlation_.n_inputs)]))
    return artifacts


def stage_correct(cfg: PipelineConfig, out: Path) -> list[Path]:
    stack = _load_stack(cfg, out, "stack_filtered", "correct")
    pl = cfg.pipeline
    k_max = _model_k_max(cfg)
    artifacts = []

    n_patches = pl.n_patches if pl.n_patches > 0 else None
    iso = IsoplanaticCorrector(n_patches=n_patches, k_max=k_max).fit(stack)
    for i in range(len(iso.transmissions_)):
        corrected = iso.correct(stack, patch=i)
        artifacts += _write_images(out, f"image_patch{i + 1}",
                                   confocal_image(corrected), pl.floor_db)

    full = FullFieldCorrector(half_x=pl.window_half_x, half_z=pl.window_half_z,
                              stride=pl.stride, k_max=k_max).fit(stack)
    corrected = full.transform(stack)
    p = out / "stack_corrected.cmx"
    write_cmx(p, corrected.data, [("depth-z", corrected.z),
                                  ("focal-x", corrected.x),
                                  ("focal-x", corrected.x)])
    artifacts.append(p)
    artifacts += _write_images(out, "image_corrected", confocal_image(corrected),
                               pl.floor_db)

    before = strehl_map(stack, k_max)
    after = strehl_map(corrected, k_max)
    for name, smap in (("strehl_uncorrected", before), ("strehl_corrected", after)):
        p = out / f"{name}.cmx"
        write_cmx(p, smap.data, [("depth-z", smap.z), ("focal-x", smap.x)])
        artifacts.append(p)
        artifacts += _write_images(out, name, smap.data, pl.floor_db, linear=True)

    diag = full.diagnostics_
    rows = []
    for a, zc in enumerate(diag.node_z):
        for b, xc in enumerate(diag.node_x):
            rows.append((xc, zc, diag.entropy[a, b], diag.n_inputs[a, b]))
    artifacts.append(_write_csv(out / "window_entropy.csv",
                                ["node_x_m", "node_z_m", "entropy", "n_inputs"], rows))
    return artifacts


def stage_sweep(cfg: PipelineConfig, out: Path, threads: int) -> list[Path]:
    acq = _load_acquisition(cfg, out)
    pl = cfg.pipeline
    speeds = pl.sweep_c_min + pl.sweep_c_step * np.arange(
        int(round((pl.sweep_c_max - pl.sweep_c_min) / pl.sweep_c_step)) + 1)
    result = soundspeed_entropy_sweep(
        acq, speeds, fov=cfg.imaging_fov, dx=_resolution(cfg)[0],
        taper=pl.taper, filter_reverb=pl.filter_enabled, threads=threads)
    artifacts = [
        _write_csv(out / "sweep.csv", ["speed_mps", "entropy", "failed"],
                   zip(result.speeds, result.entropy, result.failed.astype(int))),
        _write_csv(out / "sweep_summary.csv", ["quantity", "value"],
                   [("speed_estimate_mps", result.speed)]),
    ]
    return artifacts


def stage_render(path: Path, out: Path, mode: str, floor_db: float) -> list[Path]:
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    data, _ = read_cmx(path)
    if data.ndim != 2:
        raise StageError("render", ValueError("render expects a rank-2 CMX image"))
    image = np.abs(data) ** 2 if np.iscomplexobj(data) else np.asarray(data, float)
    return _write_images(out, path.stem, image, floor_db, linear=(mode == "linear"))


def write_manifest(out: Path, artifacts: list[Path]) -> Path:
    entries = {}
    for p in artifacts:
        entries[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    p = out / "manifest.json"
    p.write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")
    return p


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _load_config(args) -> PipelineConfig:
    if args.config is None:
        return parse_config(default_config_text())
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"no such config: {path}")
    return parse_config(path.read_text())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="refocus",
        description="Reflection-matrix imaging with distortion-matrix "
                    "aberration correction",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None, help="INI configuration path")
        p.add_argument("--out", default="refocus-out", help="artifact directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None,
                       help="override the [pipeline] seed")

    for name in ("simulate", "beamform", "filter-reverb", "distort",
                 "correct", "sweep-speed", "pipeline"):
        add_common(sub.add_parser(name))

    pr = sub.add_parser("render")
    pr.add_argument("input", help="rank-2 CMX file")
    pr.add_argument("--out", default="refocus-out")
    pr.add_argument("--mode", choices=("db", "linear"), default="db")
    pr.add_argument("--floor-db", type=float, default=-60.0)

    pe = sub.add_parser("emit-config", help="print the default configuration")

    args = parser.parse_args(argv)

    try:
        if args.command == "emit-config":
            sys.stdout.write(default_config_text())
            return 0

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)

        if args.command == "render":
            artifacts = stage_render(Path(args.input), out, args.mode, args.floor_db)
            write_manifest(out, artifacts)
            return 0

        cfg = _load_config(args)
        seed = args.seed if args.seed is not None else cfg.pipeline.seed
        threads = max(args.threads, 1)

        stages = {
            "simulate": lambda: stage_simulate(cfg, out, threads, seed),
            "beamform": lambda: stage_beamform(cfg, out, threads),
            "filter-reverb": lambda: stage_filter(cfg, out),
            "distort": lambda: stage_distort(cfg, out),
            "correct": lambda: stage_correct(cfg, out),
            "sweep-speed": lambda: stage_sweep(cfg, out, threads),
        }
        artifacts: list[Path] = []
        if args.command == "pipeline":
            for name in ("simulate", "beamform", "filter-reverb", "distort", "correct"):
                try:
                    artifacts += stages[name]()
                except (UsageError, StageError):
                    raise
                except Exception as exc:
                    raise StageError(name, exc) from exc
        else:
            try:
                artifacts = stages[args.command]()
            except (UsageError, StageError):
                raise
            except Exception as exc:
                raise StageError(args.command, exc) from exc
        write_manifest(out, artifacts)
        return 0

    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CmxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
