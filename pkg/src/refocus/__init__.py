"""Reflection-matrix imaging with distortion-matrix aberration correction.

A synthetic plane-wave forward model, matrix-product beamforming, a
far-field reverberation filter, distortion-matrix eigenanalysis with
entropy-based sound-speed estimation, and full-field transmission-matrix
image correction.
"""

__version__ = "0.1.0"

from .axes import AxisKind, BasisAxis, ComplexMatrix
from .beamform import (
    Beamformer,
    FocusedStack,
    RawAcquisition,
    SpectralReflection,
    confocal_image,
)
from .distortion import (
    FullFieldCorrector,
    IsoplanaticCorrector,
    StrehlMap,
    TransmissionEstimate,
    WindowSpec,
    strehl_map,
)
from .farfield import KSpaceStack, ReverbFilter, ReverbFilterParams
from .linalg import EigenDecomposition, herm_eig, shannon_entropy
from .scene import LayeredMedium, PhantomSpec, ProbeConfig, Scatterers, build_phantom
from .screens import PhaseScreen, random_smooth_screen, screen_from_layers
from .simulate import (
    ReverbSpec,
    ScreenPatch,
    add_noise,
    simulate_acquisition,
    synth_focused_stack,
)
from .soundspeed import SoundSpeedEstimator, SweepResult, soundspeed_entropy_sweep

__all__ = [
    "AxisKind",
    "BasisAxis",
    "ComplexMatrix",
    "EigenDecomposition",
    "herm_eig",
    "shannon_entropy",
    "ProbeConfig",
    "PhantomSpec",
    "Scatterers",
    "LayeredMedium",
    "build_phantom",
    "PhaseScreen",
    "screen_from_layers",
    "random_smooth_screen",
    "RawAcquisition",
    "SpectralReflection",
    "FocusedStack",
    "Beamformer",
    "confocal_image",
    "KSpaceStack",
    "ReverbFilter",
    "ReverbFilterParams",
    "ReverbSpec",
    "ScreenPatch",
    "simulate_acquisition",
    "synth_focused_stack",
    "add_noise",
    "IsoplanaticCorrector",
    "FullFieldCorrector",
    "TransmissionEstimate",
    "StrehlMap",
    "strehl_map",
    "WindowSpec",
    "SoundSpeedEstimator",
    "SweepResult",
    "soundspeed_entropy_sweep",
    "__version__",
]
