"""Basis-tagged complex matrices.

Every matrix that moves between processing stages carries two
:class:`BasisAxis` tags naming the physical basis of its rows and columns
(transducer elements, plane-wave angles, transverse wavenumbers, focal
coordinates, ...).  Tagging makes basis mismatches loud errors instead of
silently wrong images.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = ["AxisKind", "BasisAxis", "ComplexMatrix", "AXIS_UNITS"]


class AxisKind(str, Enum):
    ELEMENT = "element-u"
    ANGLE = "angle-theta"
    WAVENUMBER = "wavenumber-kx"
    FOCAL_X = "focal-x"
    DEPTH = "depth-z"
    FREQUENCY = "frequency-omega"
    TIME = "time-t"
    PIXEL = "pixel-index"


#: physical unit carried by each axis kind
AXIS_UNITS = {
    AxisKind.ELEMENT: "m",
    AxisKind.ANGLE: "rad",
    AxisKind.WAVENUMBER: "rad/m",
    AxisKind.FOCAL_X: "m",
    AxisKind.DEPTH: "m",
    AxisKind.FREQUENCY: "rad/s",
    AxisKind.TIME: "s",
    AxisKind.PIXEL: "1",
}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BasisAxis:
    """One matrix dimension: a basis kind plus its ordered coordinates."""

    kind: AxisKind
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 1 or coords.size == 0:
            raise ValueError("axis coordinates must be a non-empty 1D array")
        if not np.all(np.isfinite(coords)):
            raise ValueError("axis coordinates must be finite")
        if coords.size > 1 and not np.all(np.diff(coords) > 0):
            raise ValueError(f"{self.kind.value} coordinates must be strictly increasing")
        object.__setattr__(self, "coords", _readonly(coords))
        object.__setattr__(self, "kind", AxisKind(self.kind))

    def __len__(self) -> int:
        return self.coords.size

    @property
    def unit(self) -> str:
        return AXIS_UNITS[self.kind]


def pixel_axis(n: int) -> BasisAxis:
    """Index axis for flattened (x, z) pixel sets."""
    return BasisAxis(AxisKind.PIXEL, np.arange(n, dtype=float))


@dataclass(frozen=True)
class ComplexMatrix:
    """Immutable 2D complex array tagged with row/column bases.

    The payload is stored as complex128 and marked read-only; operations in
    :mod:`refocus.linalg` are pure functions of their inputs, so instances
    are safe to share across threads.
    """

    rows: BasisAxis
    cols: BasisAxis
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise ValueError("matrix payload must be 2D")
        if data.shape != (len(self.rows), len(self.cols)):
            raise ValueError(
                f"payload shape {data.shape} does not match axes "
                f"({len(self.rows)}, {len(self.cols)})"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("matrix entries must be finite")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "ComplexMatrix":
        """Same axes, new payload."""
        return ComplexMatrix(self.rows, self.cols, data)
