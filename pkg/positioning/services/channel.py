"""
Geometric mmWave channel simulator.

Paths are the direct ray plus one specular bounce per vertical wall (image
method). Each path becomes a ChannelTap carrying its exact delay, co- and
cross-polar complex gains and the departure/arrival directions; ``propagate``
applies the transmit and receive array factors, picks the polarization
branch, quantizes delays to the sample period and adds complex white noise.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from .exceptions import ChannelError, EmptyChannel, InvalidGeometry, UnknownSta
from .frames import ChannelMeasurementFeedback, CmfTap
from .geometry import (
    SPEED_OF_LIGHT_M_S,
    Plane,
    Position,
    angles_of,
    direction_vector,
    segments_intersect_2d,
    wrap_azimuth,
)
from .golay import Cir, GolaySequencePair, estimate_cir
from .randomness import SeedLike, as_generator

logger = logging.getLogger(__name__)

EDMG_BANDWIDTHS_GHZ = (2.16, 4.32, 6.48, 8.64)

# floor used when a noiseless correlator reports an exactly zero noise level
MIN_NOISE_FLOOR = 1e-12


# Scenario geometry

@dataclass(frozen=True)
class Room:
    width_m: float
    depth_m: float
    height_m: float
    origin_x_m: float = 0.0
    origin_y_m: float = 0.0

    def __post_init__(self):
        for name in ('width_m', 'depth_m', 'height_m'):
            if not getattr(self, name) > 0:
                raise InvalidGeometry(f"Room {name} must be positive")

    def walls(self) -> Dict[str, Plane]:
        return {
            'west': Plane.vertical_x(self.origin_x_m, 'west'),
            'east': Plane.vertical_x(self.origin_x_m + self.width_m, 'east'),
            'south': Plane.vertical_y(self.origin_y_m, 'south'),
            'north': Plane.vertical_y(self.origin_y_m + self.depth_m, 'north'),
        }

    def contains(self, position: Position) -> bool:
        return (self.origin_x_m < position.x_m < self.origin_x_m + self.width_m
                and self.origin_y_m < position.y_m < self.origin_y_m + self.depth_m
                and 0.0 < position.z_m < self.height_m)


@dataclass(frozen=True)
class Blocker:
    """Floor-to-ceiling partition along a segment of the floor plane"""
    x1_m: float
    y1_m: float
    x2_m: float
    y2_m: float
    label: str = ''

    def blocks(self, a, b) -> bool:
        return segments_intersect_2d(a, b, (self.x1_m, self.y1_m), (self.x2_m, self.y2_m))


@dataclass(frozen=True)
class Geometry:
    room: Room
    sta_positions: Dict[str, Position]
    blockers: Tuple[Blocker, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'blockers', tuple(self.blockers))
        for sta_id, position in self.sta_positions.items():
            if not self.room.contains(position):
                raise InvalidGeometry(f"Station {sta_id} at {position} is not strictly inside the room")

    def __hash__(self):
        return hash((self.room, tuple(sorted(self.sta_positions.items())), self.blockers))

    def position(self, sta_id: str) -> Position:
        try:
            return self.sta_positions[sta_id]
        except KeyError:
            raise UnknownSta(f"Unknown station {sta_id!r}")

    def is_blocked(self, a, b) -> bool:
        return any(blocker.blocks(a, b) for blocker in self.blockers)


# Antennas

class Polarization(Enum):
    VERTICAL = 'V'
    HORIZONTAL = 'H'

    @property
    def orthogonal(self) -> 'Polarization':
        return Polarization.HORIZONTAL if self is Polarization.VERTICAL else Polarization.VERTICAL


class ElementPattern(Enum):
    ISOTROPIC = 'isotropic'
    # (1 + cos theta) / 2 off the steering direction; suppresses the mirror lobe
    CARDIOID = 'cardioid'


@dataclass(frozen=True)
class ArrayConfig:
    rows: int = 6
    cols: int = 6
    element_spacing_wavelengths: float = 0.5
    carrier_ghz: float = 60.48
    bandwidth_ghz: float = 2.16
    element_pattern: ElementPattern = ElementPattern.ISOTROPIC

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ChannelError(f"Array needs at least one element, got {self.rows}x{self.cols}")
        if not any(math.isclose(self.bandwidth_ghz, bw) for bw in EDMG_BANDWIDTHS_GHZ):
            raise ChannelError(f"Bandwidth {self.bandwidth_ghz} GHz is not an EDMG channel width")
        if self.element_spacing_wavelengths <= 0 or self.carrier_ghz <= 0:
            raise ChannelError("Element spacing and carrier frequency must be positive")
        object.__setattr__(self, 'element_pattern', ElementPattern(self.element_pattern))

    @classmethod
    def quasi_omni(cls, carrier_ghz: float = 60.48, bandwidth_ghz: float = 2.16) -> 'ArrayConfig':
        return cls(rows=1, cols=1, carrier_ghz=carrier_ghz, bandwidth_ghz=bandwidth_ghz)

    def subarray(self, cols: int) -> 'ArrayConfig':
        """Wide-beam configuration using all rows and ``cols`` columns"""
        return replace(self, cols=min(cols, self.cols))

    @property
    def element_count(self) -> int:
        return self.rows * self.cols

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT_M_S / (self.carrier_ghz * 1e9)

    @property
    def sample_period_ps(self) -> float:
        return 1000.0 / self.bandwidth_ghz


@dataclass(frozen=True)
class AwvConfig:
    awv_id: int
    steer_azimuth_deg: float
    steer_elevation_deg: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.steer_elevation_deg <= 90.0:
            raise ChannelError(f"AWV elevation {self.steer_elevation_deg} outside [-90, 90]")
        object.__setattr__(self, 'steer_azimuth_deg', wrap_azimuth(float(self.steer_azimuth_deg)))
        object.__setattr__(self, 'steer_elevation_deg', float(self.steer_elevation_deg))


def _axis_factor(count: int, spacing: float, projection: float) -> complex:
    if count == 1:
        return 1.0 + 0j
    positions = np.arange(count) - (count - 1) / 2.0
    return complex(np.exp(2j * np.pi * spacing * positions * projection).sum())


def _axis_factors(count: int, spacing: float, projections: np.ndarray) -> np.ndarray:
    if count == 1:
        return np.ones(projections.shape, dtype=complex)
    positions = np.arange(count) - (count - 1) / 2.0
    return np.exp(2j * np.pi * spacing * np.outer(projections, positions)).sum(axis=1)


@lru_cache(maxsize=200_000)
def array_gain(array: ArrayConfig, awv: AwvConfig, direction: Tuple[float, float]) -> complex:
    """
    Uniform rectangular array factor toward ``direction`` (azimuth, elevation).

    Azimuth steering rotates the panel to face the steering azimuth; no
    per-element phase shifts are applied. Columns phase along the horizontal
    offset cos(el) sin(az - az_s), rows along sin(el) - sin(el_s). Element
    positions are centred, so the gain at the steering direction is exactly
    rows x cols.
    """
    azimuth, elevation = direction
    az = math.radians(azimuth - awv.steer_azimuth_deg)
    el = math.radians(elevation)
    el_s = math.radians(awv.steer_elevation_deg)
    s = array.element_spacing_wavelengths

    horizontal = math.cos(el) * math.sin(az)
    vertical = math.sin(el) - math.sin(el_s)
    gain = _axis_factor(array.cols, s, horizontal) * _axis_factor(array.rows, s, vertical)

    if array.element_pattern is ElementPattern.CARDIOID and array.element_count > 1:
        cos_theta = float(np.dot(direction_vector(azimuth, elevation),
                                 direction_vector(awv.steer_azimuth_deg, awv.steer_elevation_deg)))
        gain *= (1.0 + cos_theta) / 2.0
    return gain


def array_pattern(array: ArrayConfig, awvs: Sequence[AwvConfig], direction: Tuple[float, float]) -> np.ndarray:
    """|array_gain| of every AWV toward one direction, in a single vectorized pass"""
    azimuth, elevation = direction
    az = np.radians(azimuth - np.array([awv.steer_azimuth_deg for awv in awvs]))
    el_s = np.radians(np.array([awv.steer_elevation_deg for awv in awvs]))
    el = math.radians(elevation)
    s = array.element_spacing_wavelengths

    horizontal = math.cos(el) * np.sin(az)
    vertical = math.sin(el) - np.sin(el_s)
    gain = _axis_factors(array.cols, s, horizontal) * _axis_factors(array.rows, s, vertical)

    if array.element_pattern is ElementPattern.CARDIOID and array.element_count > 1:
        cos_theta = math.cos(el) * np.cos(el_s) * np.cos(az) + math.sin(el) * np.sin(el_s)
        gain = gain * (1.0 + cos_theta) / 2.0
    return np.abs(gain)


# Paths

class TapKind(Enum):
    DIRECT = 'direct'
    REFLECTED = 'reflected'


@dataclass(frozen=True)
class ChannelTap:
    delay_ps: float
    gain_co: complex
    gain_cross: complex
    kind: TapKind
    path_length_m: float
    departure: Tuple[float, float]
    arrival: Tuple[float, float]
    wall_id: Optional[str] = None
    bounce_point: Optional[Position] = None

    def __post_init__(self):
        if self.kind is TapKind.DIRECT and self.gain_cross != 0:
            raise ChannelError("Direct taps preserve polarization; gain_cross must be 0")
        if self.kind is TapKind.REFLECTED and self.wall_id is None:
            raise ChannelError("Reflected taps need the wall they bounced on")

    def gain(self, tx_pol: Polarization, rx_pol: Polarization) -> complex:
        return self.gain_co if tx_pol is rx_pol else self.gain_cross

    def __str__(self):
        where = 'direct' if self.kind is TapKind.DIRECT else f"via {self.wall_id}"
        return f"{where} {self.path_length_m:.3f} m ({self.delay_ps:.1f} ps) |g|={abs(self.gain_co):.4f}"


def _free_space_gain(distance_m: float, wavelength_m: float) -> complex:
    return (1.0 / distance_m) * complex(np.exp(-2j * np.pi * distance_m / wavelength_m))


def compute_paths(geometry: Geometry, tx: str, rx: str,
                  reflection_loss_db: Optional[float] = None,
                  cross_pol_angle_deg: Optional[float] = None,
                  carrier_ghz: float = 60.48) -> List[ChannelTap]:
    """Direct and single-bounce taps from ``tx`` to ``rx``, sorted by delay"""
    if reflection_loss_db is None:
        reflection_loss_db = getattr(settings, 'FTM_REFLECTION_LOSS_DB', 5.0)
    if cross_pol_angle_deg is None:
        cross_pol_angle_deg = getattr(settings, 'FTM_CROSS_POL_ANGLE_DEG', 60.0)
    if not 0.0 < cross_pol_angle_deg <= 90.0:
        raise ChannelError(f"Cross-polar coupling angle {cross_pol_angle_deg} outside (0, 90]")

    a = geometry.position(tx).as_array()
    b = geometry.position(rx).as_array()
    wavelength = SPEED_OF_LIGHT_M_S / (carrier_ghz * 1e9)
    taps = []

    direct = b - a
    distance = float(np.linalg.norm(direct))
    if distance == 0.0:
        raise InvalidGeometry(f"Stations {tx} and {rx} share a position")
    if not geometry.is_blocked(a, b):
        taps.append(ChannelTap(
            delay_ps=distance / SPEED_OF_LIGHT_M_S * 1e12,
            gain_co=_free_space_gain(distance, wavelength),
            gain_cross=0j,
            kind=TapKind.DIRECT,
            path_length_m=distance,
            departure=angles_of(direct),
            arrival=angles_of(-direct),
        ))

    loss = 10 ** (-reflection_loss_db / 20.0)
    chi = math.radians(cross_pol_angle_deg)
    for wall_id, wall in geometry.room.walls().items():
        image = wall.reflect_point(b)
        hit = wall.intersect_ray(a, image - a)
        if hit is None:
            continue
        _, bounce = hit
        if geometry.is_blocked(a, bounce) or geometry.is_blocked(bounce, b):
            continue
        length = float(np.linalg.norm(bounce - a) + np.linalg.norm(b - bounce))
        gain = loss * _free_space_gain(length, wavelength)
        taps.append(ChannelTap(
            delay_ps=length / SPEED_OF_LIGHT_M_S * 1e12,
            gain_co=gain * math.cos(chi),
            gain_cross=gain * math.sin(chi),
            kind=TapKind.REFLECTED,
            path_length_m=length,
            departure=angles_of(bounce - a),
            arrival=angles_of(bounce - b),
            wall_id=wall_id,
            bounce_point=Position.from_array(bounce),
        ))

    taps.sort(key=lambda tap: tap.delay_ps)
    logger.debug(f"{tx}->{rx}: {len(taps)} paths " + '; '.join(str(t) for t in taps))
    return taps


def delay_index(delay_ps: float, sample_period_ps: float) -> int:
    """Nearest sample of a delay"""
    return int(round(delay_ps / sample_period_ps))


def reference_amplitude(taps: Iterable[ChannelTap], tx_array: ArrayConfig, rx_array: ArrayConfig) -> float:
    """Strongest tap at full array gain on both ends; the level SNR is quoted against"""
    strongest = max(max(abs(t.gain_co), abs(t.gain_cross)) for t in taps)
    return strongest * tx_array.element_count * rx_array.element_count


def noise_variance(taps, tx_array: ArrayConfig, rx_array: ArrayConfig, snr_db: Optional[float]) -> float:
    if snr_db is None:
        return 0.0
    return reference_amplitude(taps, tx_array, rx_array) ** 2 / 10 ** (snr_db / 10.0)


def propagate(sequence, taps: List[ChannelTap], tx_awv: AwvConfig, rx_awv: AwvConfig,
              tx_pol: Polarization = Polarization.VERTICAL,
              rx_pol: Polarization = Polarization.VERTICAL,
              snr_db: Optional[float] = None,
              rng: SeedLike = 0,
              tx_array: Optional[ArrayConfig] = None,
              rx_array: Optional[ArrayConfig] = None,
              interference_db: Optional[float] = None) -> np.ndarray:
    """
    Send ``sequence`` through the channel and return the received samples.

    The output holds len(sequence) + max delay samples. ``snr_db=None`` means
    noiseless. ``interference_db`` adds a random unit-modulus jamming signal at
    that power over the same reference level as the noise.
    """
    taps = list(taps)
    if not taps:
        raise EmptyChannel("Cannot propagate through a channel without taps")
    tx_array = tx_array or ArrayConfig()
    rx_array = rx_array or ArrayConfig.quasi_omni(tx_array.carrier_ghz, tx_array.bandwidth_ghz)

    sequence = np.asarray(sequence, dtype=complex)
    period = tx_array.sample_period_ps
    delays = [delay_index(tap.delay_ps, period) for tap in taps]
    received = np.zeros(sequence.size + max(delays), dtype=complex)

    for tap, delay in zip(taps, delays):
        polarized = tap.gain(tx_pol, rx_pol)
        if polarized == 0:
            continue
        gain = (array_gain(tx_array, tx_awv, tap.departure)
                * array_gain(rx_array, rx_awv, tap.arrival)
                * polarized)
        received[delay:delay + sequence.size] += gain * sequence

    if snr_db is None and interference_db is None:
        return received

    generator = as_generator(rng)
    reference = reference_amplitude(taps, tx_array, rx_array)
    if snr_db is not None:
        sigma = math.sqrt(reference ** 2 / 10 ** (snr_db / 10.0) / 2.0)
        received += sigma * (generator.standard_normal(received.size)
                             + 1j * generator.standard_normal(received.size))
    if interference_db is not None:
        amplitude = reference * 10 ** (interference_db / 20.0)
        phases = generator.uniform(0.0, 2.0 * np.pi, received.size)
        received += amplitude * np.exp(1j * phases)
    return received


# Power delay profiles

class PdpTap(NamedTuple):
    delay_sample_index: int
    i_component: float
    q_component: float
    snr_db: float

    @property
    def power(self) -> float:
        return self.i_component ** 2 + self.q_component ** 2

    @property
    def gain(self) -> complex:
        return complex(self.i_component, self.q_component)


@dataclass(frozen=True)
class Pdp:
    taps: Tuple[PdpTap, ...] = ()

    def __post_init__(self):
        taps = tuple(PdpTap(*t) for t in self.taps)
        indices = [t.delay_sample_index for t in taps]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("PDP taps must be sorted by strictly increasing delay")
        object.__setattr__(self, 'taps', taps)

    def __len__(self):
        return len(self.taps)

    def tap_at(self, delay_sample_index: int) -> Optional[PdpTap]:
        for tap in self.taps:
            if tap.delay_sample_index == delay_sample_index:
                return tap
        return None

    def to_element(self) -> ChannelMeasurementFeedback:
        return ChannelMeasurementFeedback(tuple(CmfTap(*t) for t in self.taps))

    @classmethod
    def from_element(cls, element: ChannelMeasurementFeedback) -> 'Pdp':
        return cls(tuple(PdpTap(*t) for t in element.taps))


def cir_to_pdp(cir: Cir, noise_floor: Optional[float] = None) -> Pdp:
    """Per-tap I/Q with snr_db = 10 log10(|gain|^2 / floor^2)"""
    floor = noise_floor if noise_floor is not None else cir.noise_floor
    floor = max(floor, MIN_NOISE_FLOOR)
    return Pdp(tuple(
        PdpTap(delay, float(gain.real), float(gain.imag), 20.0 * math.log10(abs(gain) / floor))
        for delay, gain in cir.taps
    ))


def measure_pdp(rx, pair: GolaySequencePair, noise_floor: Optional[float] = None) -> Pdp:
    """PDP of a received (Ga, Gb) pair; the correlator's median floor when none is given"""
    rx_ga, rx_gb = rx
    return cir_to_pdp(estimate_cir(rx_ga, rx_gb, pair), noise_floor)


# Simulated link

@dataclass(frozen=True)
class SimChannel:
    """One direction of a link: taps plus the antenna arrays on both ends"""
    taps: Tuple[ChannelTap, ...]
    tx_array: ArrayConfig = field(default_factory=ArrayConfig)
    rx_array: ArrayConfig = field(default_factory=ArrayConfig.quasi_omni)
    snr_db: Optional[float] = None
    jammed_subfields: FrozenSet[int] = frozenset()
    jam_power_db: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, 'taps', tuple(self.taps))
        object.__setattr__(self, 'jammed_subfields', frozenset(self.jammed_subfields))

    @classmethod
    def between(cls, geometry: Geometry, tx: str, rx: str, tx_array: ArrayConfig,
                rx_array: Optional[ArrayConfig] = None, snr_db: Optional[float] = None,
                **path_options) -> 'SimChannel':
        taps = compute_paths(geometry, tx, rx, carrier_ghz=tx_array.carrier_ghz, **path_options)
        rx_array = rx_array or ArrayConfig.quasi_omni(tx_array.carrier_ghz, tx_array.bandwidth_ghz)
        return cls(tuple(taps), tx_array, rx_array, snr_db)

    @property
    def sample_period_ps(self) -> float:
        return self.tx_array.sample_period_ps

    @property
    def noise_variance(self) -> float:
        if not self.taps:
            return 0.0
        return noise_variance(self.taps, self.tx_array, self.rx_array, self.snr_db)

    def with_tx_array(self, tx_array: ArrayConfig) -> 'SimChannel':
        return replace(self, tx_array=tx_array)

    def jammed(self, subfields: Iterable[int], power_db: float = 3.0) -> 'SimChannel':
        return replace(self, jammed_subfields=frozenset(subfields), jam_power_db=power_db)

    def transmit(self, sequence, tx_awv: AwvConfig, rx_awv: AwvConfig, rng: SeedLike,
                 tx_pol: Polarization = Polarization.VERTICAL,
                 rx_pol: Polarization = Polarization.VERTICAL,
                 subfield_index: Optional[int] = None) -> np.ndarray:
        interference = self.jam_power_db if subfield_index in self.jammed_subfields else None
        return propagate(sequence, self.taps, tx_awv, rx_awv, tx_pol, rx_pol, self.snr_db, rng,
                         self.tx_array, self.rx_array, interference)

    def tap_for_delay_index(self, index: int) -> Optional[ChannelTap]:
        """Physical path whose quantized delay is closest to ``index``"""
        if not self.taps:
            return None
        return min(self.taps, key=lambda t: (abs(delay_index(t.delay_ps, self.sample_period_ps) - index),
                                             t.delay_ps))
