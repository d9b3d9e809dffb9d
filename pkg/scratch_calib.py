import numpy as np
from refocus.scene import Scatterers
from refocus.simulate import ScreenPatch, synth_focused_stack
from refocus.farfield import kspace_grid
from refocus.screens import random_smooth_screen
from refocus.beamform import confocal_image
from refocus.distortion import FullFieldCorrector, strehl_map
from refocus.linalg import circular_rms, remove_phase_tilt

C = 1540.0
dx = dz = 0.2e-3


def grids(n, nz, z0=6e-3):
    x = (np.arange(n) - (n - 1) / 2) * dx
    z = z0 + np.arange(nz) * dz
    return x, z


def make_scene(x, z, seed, inclusion=None, pocket=None, density=3.0):
    rng = np.random.default_rng(seed)
    n_spk = int(density * x.size * z.size)
    xs = rng.uniform(x[0], x[-1], n_spk)
    zs = z[rng.integers(0, z.size, n_spk)]
    refl = (rng.standard_normal(n_spk) + 1j * rng.standard_normal(n_spk)) / np.sqrt(2)
    for region, mult in ((inclusion, None), (pocket, None)):
        if region is not None:
            cx, cz, r, m = region
            inside = (xs - cx) ** 2 + (zs - cz) ** 2 <= r * r
            refl = np.where(inside, refl * m, refl)
    return Scatterers(xs, zs, refl)


xp, zp = grids(96, 40)
kp = kspace_grid(xp)
core = np.abs(xp) <= 6.4e-3

for corr, dens, half_z in ((0.08, 3.0, 2.0e-3), (0.08, 3.0, 3.0e-3),
                           (0.1, 3.0, 3.0e-3), (0.1, 8.0, 3.0e-3)):
    sl = random_smooth_screen(kp, 2.2, corr, 303).values[:, 0]
    sr = random_smooth_screen(kp, 2.2, corr, 404).values[:, 0]
    scene = make_scene(xp, zp, 7, density=dens)
    patches = [ScreenPatch(sl, x_range=(-1, 0.0)), ScreenPatch(sr, x_range=(0.0, 1))]
    stack = synth_focused_stack(scene, xp, zp, C, patches=patches)
    full = FullFieldCorrector(half_x=2.0e-3, half_z=half_z).fit(stack)
    est = full.transmission_
    diag = full.diagnostics_
    # node law errors away from the boundary
    errs = []
    for b, xc in enumerate(diag.node_x):
        truth = sl if xc < -2.2e-3 else (sr if xc > 2.2e-3 else None)
        if truth is None:
            continue
        for a in range(diag.node_z.size):
            iz = int(np.argmin(np.abs(est.z - diag.node_z[a])))
            ix = int(np.argmin(np.abs(est.x - xc)))
            law = est.screen[:, iz, ix]
            errs.append(circular_rms(remove_phase_tilt(
                np.angle(law) - np.angle(truth), est.k)))
    corrected = full.transform(stack)
    s_after = strehl_map(corrected)
    sc = s_after.data[:, core]
    print(f"corr={corr} dens={dens} half_z={half_z*1e3:.0f}mm: "
          f"law err med={np.median(errs):.3f} p90={np.quantile(errs,0.9):.3f} "
          f"S mean={sc.mean():.3f} p10={np.quantile(sc,0.1):.2f} "
          f"median={np.median(sc):.3f}")
    print("   mean inputs/node:", int(diag.n_inputs.mean()),
          " node H median:", round(float(np.nanmedian(diag.entropy)), 2))
