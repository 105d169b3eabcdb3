"""Orientation frames and element positions of a flexible planar array.

Each element of an ``M_x x M_y`` grid sits at ``q_1 + x_m i + y_m j`` and may be
displaced by ``zeta_m`` along the surface normal ``k``.  Elements are linearised
along the ``i`` direction first: ``x_m = d_x * ((m-1) mod M_x)`` and
``y_m = d_y * floor((m-1) / M_x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fimmimo.errors import ContractViolation, DimensionError

FRAME_TOL = 1e-12


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class OrientationAngles:
    """Azimuth and elevation of the surface normal plus the in-plane spin, in radians."""

    azimuth: float = 0.0
    elevation: float = 0.0
    spin: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.azimuth < math.pi:
            raise ContractViolation(f"azimuth {self.azimuth} outside [0, pi)")
        if not 0.0 <= self.elevation < math.pi:
            raise ContractViolation(f"elevation {self.elevation} outside [0, pi)")
        if not 0.0 <= self.spin < 2 * math.pi:
            raise ContractViolation(f"spin {self.spin} outside [0, 2pi)")


@dataclass(frozen=True)
class OrientationFrame:
    i: np.ndarray
    j: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        for name in ("i", "j", "k"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        basis = np.stack([self.i, self.j, self.k])
        if basis.shape != (3, 3):
            raise DimensionError("frame vectors must be 3-vectors")
        # the formulas are exact, so a failure here is a bug rather than bad input
        if np.max(np.abs(basis @ basis.T - np.eye(3))) > FRAME_TOL:
            raise ContractViolation("frame is not orthonormal")

    @classmethod
    def identity(cls) -> "OrientationFrame":
        return cls(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))


def frame_from_angles(angles: OrientationAngles) -> OrientationFrame:
    phi, theta, rho = angles.azimuth, angles.elevation, angles.spin
    sp, cp = math.sin(phi), math.cos(phi)
    st, ct = math.sin(theta), math.cos(theta)
    sr, cr = math.sin(rho), math.cos(rho)
    k = [st * cp, st * sp, ct]
    i = [ct * cp * cr - sp * sr, ct * sp * cr + cp * sr, -st * cr]
    j = [-ct * cp * sr - sp * cr, -ct * sp * sr + cp * cr, st * sr]
    return OrientationFrame(np.array(i), np.array(j), np.array(k))


@dataclass(frozen=True)
class ArrayGeometry:
    counts_x: int
    counts_y: int
    spacing_x: float
    spacing_y: float
    frame: OrientationFrame = field(default_factory=OrientationFrame.identity)
    reference_position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if int(self.counts_x) < 1 or int(self.counts_y) < 1:
            raise ContractViolation("element counts must be positive")
        if not (self.spacing_x > 0 and self.spacing_y > 0):
            raise ContractViolation("element spacings must be strictly positive")
        ref = _frozen(self.reference_position)
        if ref.shape != (3,):
            raise DimensionError("reference_position must be a 3-vector")
        object.__setattr__(self, "reference_position", ref)

    @property
    def size(self) -> int:
        return int(self.counts_x) * int(self.counts_y)

    def grid_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """In-plane offsets (x_m, y_m) of every element from the reference element."""
        m = np.arange(self.size)
        return self.spacing_x * (m % self.counts_x), self.spacing_y * (m // self.counts_x)


@dataclass(frozen=True)
class SurfaceShape:
    """Per-element deformation along the normal and the allowed morphing range.

    Construction does not clamp or reject out-of-range values; use
    :func:`validate_shape` or :meth:`projected`.
    """

    deformations: np.ndarray
    bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "deformations", _frozen(np.ravel(self.deformations)))
        if not self.bound >= 0:
            raise ContractViolation("morphing bound must be nonnegative")

    @classmethod
    def flat(cls, size: int, bound: float = 0.0) -> "SurfaceShape":
        return cls(np.zeros(size), bound)

    def __len__(self):
        return self.deformations.size

    def projected(self) -> "SurfaceShape":
        return SurfaceShape(np.clip(self.deformations, -self.bound, self.bound), self.bound)


def element_positions(geom: ArrayGeometry, shape: SurfaceShape) -> np.ndarray:
    """Return an ``(size, 3)`` array of morphed element positions."""
    if len(shape) != geom.size:
        raise DimensionError(f"shape has {len(shape)} entries, geometry has {geom.size} elements")
    x, y = geom.grid_offsets()
    f = geom.frame
    return (
        geom.reference_position
        + np.outer(x, f.i)
        + np.outer(y, f.j)
        + np.outer(shape.deformations, f.k)
    )


def validate_shape(shape: SurfaceShape) -> bool:
    return bool(np.all(np.abs(shape.deformations) <= shape.bound))
