"""
Geometry primitives shared by the channel simulator and the position solver.

Angle convention: azimuth counterclockwise from +x in the floor plane,
elevation up from the floor plane, both in degrees. Azimuths are kept in
(-180, 180].
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .exceptions import InvalidGeometry

SPEED_OF_LIGHT_M_S = 299_792_458.0


def wrap_azimuth(azimuth_deg: float) -> float:
    """Map an azimuth into (-180, 180]"""
    wrapped = math.fmod(azimuth_deg, 360.0)
    if wrapped <= -180.0:
        wrapped += 360.0
    elif wrapped > 180.0:
        wrapped -= 360.0
    return wrapped


def angle_difference(a_deg: float, b_deg: float) -> float:
    """Signed azimuth difference a - b, wrapped"""
    return wrap_azimuth(a_deg - b_deg)


def direction_vector(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])


def angles_of(vector) -> Tuple[float, float]:
    """(azimuth_deg, elevation_deg) of a non-zero vector"""
    x, y, z = (float(v) for v in vector)
    horizontal = math.hypot(x, y)
    if horizontal == 0.0 and z == 0.0:
        raise InvalidGeometry("Direction of a zero-length vector is undefined")
    azimuth = wrap_azimuth(math.degrees(math.atan2(y, x))) if horizontal > 0.0 else 0.0
    return azimuth, math.degrees(math.atan2(z, horizontal))


@dataclass(frozen=True)
class Position:
    x_m: float
    y_m: float
    z_m: float

    def __post_init__(self):
        for name in ('x_m', 'y_m', 'z_m'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidGeometry(f"Position.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))

    @classmethod
    def from_array(cls, values) -> 'Position':
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.z_m])

    def distance_to(self, other: 'Position') -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))

    def __str__(self):
        return f"({self.x_m:.3f}, {self.y_m:.3f}, {self.z_m:.3f})"


class AngleSource(Enum):
    I2R_AOA = 'I2R_AOA'
    I2R_AOD = 'I2R_AOD'
    R2I_AOD = 'R2I_AOD'


@dataclass(frozen=True)
class AngleEstimate:
    azimuth_deg: float
    elevation_deg: float
    source: AngleSource = AngleSource.I2R_AOD

    def __post_init__(self):
        if not (math.isfinite(self.azimuth_deg) and math.isfinite(self.elevation_deg)):
            raise InvalidGeometry("Angle estimate must be finite")
        if not -90.0 <= self.elevation_deg <= 90.0:
            raise InvalidGeometry(f"Elevation {self.elevation_deg} outside [-90, 90]")
        object.__setattr__(self, 'azimuth_deg', wrap_azimuth(float(self.azimuth_deg)))
        object.__setattr__(self, 'elevation_deg', float(self.elevation_deg))

    def direction(self) -> np.ndarray:
        return direction_vector(self.azimuth_deg, self.elevation_deg)

    def perturbed(self, azimuth_error_deg: float, elevation_error_deg: float = 0.0) -> 'AngleEstimate':
        elevation = min(max(self.elevation_deg + elevation_error_deg, -90.0), 90.0)
        return AngleEstimate(self.azimuth_deg + azimuth_error_deg, elevation, self.source)

    def __str__(self):
        return f"{self.source.value} az={self.azimuth_deg:.3f} el={self.elevation_deg:.3f}"


@dataclass(frozen=True)
class Plane:
    """Plane n . p = offset with unit normal n"""
    normal: Tuple[float, float, float]
    offset: float
    plane_id: str = ''

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = float(np.linalg.norm(n))
        if norm == 0.0:
            raise InvalidGeometry("Plane normal must be non-zero")
        object.__setattr__(self, 'normal', tuple(float(v) for v in n / norm))
        object.__setattr__(self, 'offset', float(self.offset) / norm)

    @classmethod
    def vertical_x(cls, x_m: float, plane_id: str = '') -> 'Plane':
        return cls((1.0, 0.0, 0.0), x_m, plane_id)

    @classmethod
    def vertical_y(cls, y_m: float, plane_id: str = '') -> 'Plane':
        return cls((0.0, 1.0, 0.0), y_m, plane_id)

    @property
    def normal_vector(self) -> np.ndarray:
        return np.array(self.normal)

    def signed_distance(self, point) -> float:
        return float(np.dot(self.normal_vector, np.asarray(point, dtype=float)) - self.offset)

    def reflect_point(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        return p - 2.0 * self.signed_distance(p) * self.normal_vector

    def reflect_direction(self, direction) -> np.ndarray:
        d = np.asarray(direction, dtype=float)
        n = self.normal_vector
        return d - 2.0 * float(np.dot(d, n)) * n

    def intersect_ray(self, origin, direction, eps: float = 1e-12) -> Optional[Tuple[float, np.ndarray]]:
        """(range, point) where the ray meets the plane at positive range, else None"""
        o = np.asarray(origin, dtype=float)
        d = np.asarray(direction, dtype=float)
        denominator = float(np.dot(self.normal_vector, d))
        if abs(denominator) < eps:
            return None
        t = -self.signed_distance(o) / denominator
        if t <= eps:
            return None
        return t, o + t * d


def segments_intersect_2d(p1, p2, q1, q2, eps: float = 1e-12) -> bool:
    """True when closed segments p1p2 and q1q2 intersect in the floor plane"""
    p1, p2, q1, q2 = (np.asarray(v, dtype=float)[:2] for v in (p1, p2, q1, q2))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    d1 = cross(q1, q2, p1)
    d2 = cross(q1, q2, p2)
    d3 = cross(p1, p2, q1)
    d4 = cross(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
            ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)):
        return True

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
                and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps)

    if abs(d1) <= eps and on_segment(q1, q2, p1):
        return True
    if abs(d2) <= eps and on_segment(q1, q2, p2):
        return True
    if abs(d3) <= eps and on_segment(p1, p2, q1):
        return True
    if abs(d4) <= eps and on_segment(p1, p2, q2):
        return True
    return False
