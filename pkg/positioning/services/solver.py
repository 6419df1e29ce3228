"""
Trigonometric positioning from one FTM session.

LOS: the RSTA sits at the measured distance along the estimated angle.
NLOS: the ray along the estimated angle hits a wall at range a; the rest of
the measured path length, b, continues along the mirrored direction. The
triangle (a, b, psi) is returned with the position.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import EmptyList, PathTooShort, RayMissesWall
from .geometry import AngleEstimate, AngleSource, Plane, Position

logger = logging.getLogger(__name__)

__all__ = [
    'AngleEstimate', 'AngleSource', 'NlosTriangle', 'PercentileRow', 'Position',
    'first_wall_hit', 'percentile_report', 'position_error', 'position_los', 'position_nlos',
]

DEFAULT_PERCENTILES = (25, 50, 75, 100)

# geometric tolerance for the triangle checks
TRIANGLE_EPS_M = 1e-9


@dataclass(frozen=True)
class NlosTriangle:
    a_m: float
    b_m: float
    psi_rad: float
    wall_id: str = ''

    @property
    def path_length_m(self) -> float:
        return self.a_m + self.b_m

    @property
    def psi_deg(self) -> float:
        return math.degrees(self.psi_rad)

    def chord_m(self) -> float:
        """Direct ISTA-RSTA distance implied by the triangle"""
        # the angle between the two legs at the bounce point is pi - 2 psi
        inner = math.pi - 2.0 * self.psi_rad
        squared = self.a_m ** 2 + self.b_m ** 2 - 2.0 * self.a_m * self.b_m * math.cos(inner)
        return math.sqrt(max(0.0, squared))


def position_los(anchor: Position, distance_m: float, angle: AngleEstimate) -> Position:
    if distance_m < 0:
        raise ValueError(f"Distance must be non-negative, got {distance_m}")
    return Position.from_array(anchor.as_array() + distance_m * angle.direction())


def position_nlos(anchor: Position, path_length_m: float, angle: AngleEstimate,
                  wall: Plane) -> Tuple[Position, NlosTriangle]:
    """RSTA position behind a single specular bounce off ``wall``"""
    direction = angle.direction()
    hit = wall.intersect_ray(anchor.as_array(), direction)
    if hit is None:
        raise RayMissesWall(f"Ray {angle} from {anchor} does not reach wall {wall.plane_id or wall.normal}")
    a_m, bounce = hit
    if path_length_m <= a_m:
        raise PathTooShort(f"Path length {path_length_m:.6f} m does not exceed the bounce range {a_m:.6f} m")

    b_m = path_length_m - a_m
    reflected = wall.reflect_direction(direction)
    position = Position.from_array(bounce + b_m * reflected)
    # angle between the incident ray and the wall plane
    psi = math.asin(min(1.0, abs(float(np.dot(direction, wall.normal_vector)))))
    triangle = NlosTriangle(float(a_m), float(b_m), psi, wall.plane_id)
    logger.debug(f"NLOS solve via {wall.plane_id}: a={a_m:.4f} b={b_m:.4f} psi={math.degrees(psi):.3f} -> {position}")
    return position, triangle


def first_wall_hit(anchor: Position, angle: AngleEstimate, walls: Iterable[Plane]) -> Plane:
    """Wall the ray from ``anchor`` meets first"""
    best: Optional[Tuple[float, Plane]] = None
    for wall in walls:
        hit = wall.intersect_ray(anchor.as_array(), angle.direction())
        if hit is not None and (best is None or hit[0] < best[0]):
            best = (hit[0], wall)
    if best is None:
        raise RayMissesWall(f"Ray {angle} from {anchor} meets no wall")
    return best[1]


def position_error(estimate: Position, truth: Position) -> float:
    return estimate.distance_to(truth)


class PercentileRow(NamedTuple):
    label: str
    values: Dict[int, float]

    def cells(self, percentiles: Sequence[int] = DEFAULT_PERCENTILES) -> Tuple[str, ...]:
        return tuple(f"{self.values[p]:.2f}" for p in percentiles)


def percentile_report(errors_cm: Iterable[float], percentiles: Sequence[int] = DEFAULT_PERCENTILES,
                      label: str = '') -> PercentileRow:
    """Nearest-rank percentiles; 100 is the maximum"""
    values = np.asarray(list(errors_cm), dtype=float)
    if values.size == 0:
        raise EmptyList("Cannot report percentiles of an empty error list")
    ranked = np.percentile(values, list(percentiles), method='inverted_cdf')
    return PercentileRow(label, {int(p): float(v) for p, v in zip(percentiles, ranked)})
