"""
Scenario configuration and the Monte Carlo experiment runner.

A scenario is one ISTA and a list of RSTAs in a room. Every repetition runs
one FTM session per RSTA, adds the configured AoA error to the I2R angle,
and solves the RSTA position with the LOS solver when the reported LOS
likelihood is at least 0.5, otherwise with the single-bounce NLOS solver.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

from django.conf import settings

from .beamtraining import LOS_THRESHOLD
from .channel import ArrayConfig, Blocker, ElementPattern, Geometry, Room
from .exceptions import ConfigError, HarnessError, InvalidGeometry, PathTooShort, PositioningError, RayMissesWall
from .geometry import Position, angle_difference
from .randomness import child_seed, stream
from .session import ClockModel, FtmLink, IftmrParams, run_session
from .solver import first_wall_hit, position_error, position_los, position_nlos

logger = logging.getLogger(__name__)

ISTA_ID = 'ista'
LOS = 'LOS'
NLOS = 'NLOS'


@dataclass(frozen=True)
class NoiseConfig:
    tof_jitter_sigma_ps: float = 0.0
    aoa_error_max_deg_los: float = 0.0
    aoa_error_max_deg_nlos: float = 0.0
    snr_db: Optional[float] = None
    # envelope growth with path length; 0 keeps it flat
    aoa_error_growth_deg_per_m: float = 0.0

    def __post_init__(self):
        for name in ('tof_jitter_sigma_ps', 'aoa_error_max_deg_los', 'aoa_error_max_deg_nlos',
                     'aoa_error_growth_deg_per_m'):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def aoa_envelope_deg(self, los: bool, path_length_m: float) -> float:
        base = self.aoa_error_max_deg_los if los else self.aoa_error_max_deg_nlos
        return base + self.aoa_error_growth_deg_per_m * path_length_m


# AoA error envelopes (LOS, NLOS) in degrees
NOISE_PROFILES = {
    'none': None,
    # legacy hardware measurement
    'fig4b': (5.1, 8.3),
    # first-path 802.11az calibration
    'az': (0.5, 0.8),
}


def noise_profile(name: str) -> NoiseConfig:
    """Named noise model; timestamp jitter comes from FTM_TIMESTAMP_JITTER_PS"""
    if name not in NOISE_PROFILES:
        raise ConfigError('noise', f"unknown noise profile {name!r}, expected one of {sorted(NOISE_PROFILES)}")
    envelopes = NOISE_PROFILES[name]
    if envelopes is None:
        return NoiseConfig()
    jitter = getattr(settings, 'FTM_TIMESTAMP_JITTER_PS', 50.0)
    return NoiseConfig(jitter, *envelopes)


@dataclass(frozen=True)
class RstaSpec:
    label: str
    position: Position
    los_or_nlos: str = LOS

    def __post_init__(self):
        if self.los_or_nlos not in (LOS, NLOS):
            raise ValueError(f"los_or_nlos must be {LOS} or {NLOS}, got {self.los_or_nlos!r}")
        if self.label == ISTA_ID:
            raise ValueError(f"RSTA label {ISTA_ID!r} is reserved for the initiator")

    @property
    def is_los(self) -> bool:
        return self.los_or_nlos == LOS


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    geometry: Geometry
    rsta_specs: Tuple[RstaSpec, ...]
    array: ArrayConfig = field(default_factory=lambda: ArrayConfig(element_pattern=ElementPattern.CARDIOID))
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    repetitions: int = 1
    seed: int = 0
    legacy_mismatch: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'rsta_specs', tuple(self.rsta_specs))
        if not isinstance(self.repetitions, int) or self.repetitions < 1:
            raise ConfigError('repetitions', f"must be a positive integer, got {self.repetitions!r}")
        if not self.rsta_specs:
            raise ConfigError('rsta_specs', 'at least one RSTA is required')
        labels = [spec.label for spec in self.rsta_specs]
        if len(set(labels)) != len(labels):
            raise ConfigError('rsta_specs', f"duplicate RSTA labels in {labels}")

    @property
    def ista_position(self) -> Position:
        return self.geometry.position(ISTA_ID)

    def with_overrides(self, **overrides) -> 'ScenarioConfig':
        """Copy with command-line overrides; None values are ignored"""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        room = self.geometry.room
        return {
            'name': self.name,
            'geometry': {
                'room': {'width_m': room.width_m, 'depth_m': room.depth_m, 'height_m': room.height_m},
                'ista': _xyz(self.ista_position),
                'blockers': [[b.x1_m, b.y1_m, b.x2_m, b.y2_m] for b in self.geometry.blockers],
            },
            'array': {
                'rows': self.array.rows, 'cols': self.array.cols,
                'element_spacing_wavelengths': self.array.element_spacing_wavelengths,
                'carrier_ghz': self.array.carrier_ghz, 'bandwidth_ghz': self.array.bandwidth_ghz,
                'element_pattern': self.array.element_pattern.value,
            },
            'rsta_specs': [{'label': s.label, 'position': _xyz(s.position), 'los_or_nlos': s.los_or_nlos}
                           for s in self.rsta_specs],
            'noise': {
                'tof_jitter_sigma_ps': self.noise.tof_jitter_sigma_ps,
                'aoa_error_max_deg_los': self.noise.aoa_error_max_deg_los,
                'aoa_error_max_deg_nlos': self.noise.aoa_error_max_deg_nlos,
                'snr_db': self.noise.snr_db,
                'aoa_error_growth_deg_per_m': self.noise.aoa_error_growth_deg_per_m,
            },
            'repetitions': self.repetitions,
            'seed': self.seed,
            'legacy_mismatch': self.legacy_mismatch,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ScenarioConfig':
        """Build from a JSON object; errors carry the dotted path of the bad field"""
        if not isinstance(data, dict):
            raise ConfigError('', 'scenario must be a JSON object')

        geometry_data = _get(data, 'geometry', '', dict)
        room = _build('geometry.room', lambda: Room(**_get(geometry_data, 'room', 'geometry', dict)))
        ista = _position(_get(geometry_data, 'ista', 'geometry', list), 'geometry.ista')
        if not room.contains(ista):
            raise ConfigError('geometry.ista', f"{ista} is not strictly inside the room")
        blockers = []
        for i, item in enumerate(geometry_data.get('blockers', [])):
            path = f"geometry.blockers[{i}]"
            blockers.append(_build(path, lambda: Blocker(*(float(v) for v in item))))

        specs = []
        for i, item in enumerate(_get(data, 'rsta_specs', '', list)):
            path = f"rsta_specs[{i}]"
            if not isinstance(item, dict):
                raise ConfigError(path, 'must be an object')
            label = str(_get(item, 'label', path, str))
            position = _position(_get(item, 'position', path, list), f"{path}.position")
            if not room.contains(position):
                raise ConfigError(f"{path}.position", f"{position} is not strictly inside the room")
            kind = str(item.get('los_or_nlos', LOS)).upper()
            specs.append(_build(f"{path}.los_or_nlos", lambda: RstaSpec(label, position, kind)))

        positions = {ISTA_ID: ista}
        positions.update({spec.label: spec.position for spec in specs})
        geometry = _build('rsta_specs', lambda: Geometry(room, positions, tuple(blockers)))

        array = _build('array', lambda: ArrayConfig(**data.get('array', {'element_pattern': 'cardioid'})))
        noise_data = data.get('noise', {})
        if isinstance(noise_data, str):
            noise = noise_profile(noise_data)
        else:
            noise = _build('noise', lambda: NoiseConfig(**noise_data))

        repetitions = data.get('repetitions', 1)
        seed = data.get('seed', 0)
        if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ConfigError('seed', f"must be an unsigned 64-bit integer, got {seed!r}")
        return cls(str(data.get('name', 'scenario')), geometry, tuple(specs), array, noise,
                   repetitions, seed, bool(data.get('legacy_mismatch', False)))


def _xyz(position: Position) -> List[float]:
    return [position.x_m, position.y_m, position.z_m]


def _get(data: Dict[str, Any], key: str, parent: str, kind: type):
    path = f"{parent}.{key}" if parent else key
    if key not in data:
        raise ConfigError(path, 'is required')
    value = data[key]
    if not isinstance(value, kind):
        raise ConfigError(path, f"must be a {kind.__name__}, got {type(value).__name__}")
    return value


def _position(values, path: str) -> Position:
    if len(values) != 3:
        raise ConfigError(path, f"must hold three coordinates, got {len(values)}")
    return _build(path, lambda: Position(*(float(v) for v in values)))


def _build(path: str, factory: Callable):
    try:
        return factory()
    except ConfigError:
        raise
    except (PositioningError, TypeError, ValueError) as e:
        raise ConfigError(path, str(e))


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ConfigError('', f"{path} is not valid JSON: {e}")
    config = ScenarioConfig.from_dict(data)
    logger.info(f"Loaded scenario {config.name} from {path}: {len(config.rsta_specs)} RSTAs")
    return config


# Default scenarios

def _at_bearing(origin: Position, distance_m: float, bearing_deg: float) -> Position:
    rad = math.radians(bearing_deg)
    return Position(origin.x_m + distance_m * math.cos(rad), origin.y_m + distance_m * math.sin(rad), origin.z_m)


def _south_bounce(ista: Position, path_length_m: float, rsta_y_m: float, towards_east: bool) -> Position:
    """RSTA at height rsta_y_m whose south-wall bounce path to the ISTA has the given length"""
    dy = ista.y_m + rsta_y_m
    if path_length_m <= dy:
        raise InvalidGeometry(f"Bounce path of {path_length_m} m is shorter than the wall detour")
    dx = math.sqrt(path_length_m ** 2 - dy ** 2)
    return Position(ista.x_m + dx if towards_east else ista.x_m - dx, rsta_y_m, ista.z_m)


def _partition_between(a: Position, b: Position) -> Blocker:
    """0.8 m partition across the midpoint of the east-west line a-b, clear of the floor-level bounce"""
    mid_x = (a.x_m + b.x_m) / 2.0
    mid_y = (a.y_m + b.y_m) / 2.0
    return Blocker(mid_x, mid_y - 0.3, mid_x, mid_y + 0.5, "partition")


def fig4a_scenario(noise: Optional[NoiseConfig] = None, repetitions: int = 1, seed: int = 0,
                   legacy_mismatch: bool = False) -> ScenarioConfig:
    """
    One ISTA and six RSTAs in a 16 x 10 x 3 m room, every station 1 m above
    the floor. LOS RSTAs sit 2, 4 and 8 m away; NLOS RSTAs are hidden behind
    partitions and reached over a south-wall bounce of 2, 4 and 8 m.
    """
    room = Room(16.0, 10.0, 3.0)
    ista = Position(8.0, 0.5, 1.0)
    los = [
        RstaSpec('los-2m', _at_bearing(ista, 2.0, 60.0), LOS),
        RstaSpec('los-4m', _at_bearing(ista, 4.0, 75.0), LOS),
        RstaSpec('los-8m', _at_bearing(ista, 8.0, 105.0), LOS),
    ]
    nlos_2 = _south_bounce(ista, 2.0, 0.5, towards_east=False)
    nlos_4 = _south_bounce(ista, 4.0, 0.5, towards_east=True)
    nlos_8 = _south_bounce(ista, 8.0, 3.0, towards_east=False)
    nlos = [RstaSpec('nlos-2m', nlos_2, NLOS), RstaSpec('nlos-4m', nlos_4, NLOS), RstaSpec('nlos-8m', nlos_8, NLOS)]
    # the first partition also cuts the direct and west-wall paths to nlos-8m
    blockers = (_partition_between(ista, nlos_2), _partition_between(ista, nlos_4))

    positions = {ISTA_ID: ista}
    positions.update({spec.label: spec.position for spec in los + nlos})
    return ScenarioConfig('fig4a', Geometry(room, positions, blockers), tuple(los + nlos),
                          noise=noise or NoiseConfig(), repetitions=repetitions, seed=seed,
                          legacy_mismatch=legacy_mismatch)


COMPARE_DISTANCES_M = (7.0, 7.07, 9.0, 11.2, 14.2)


def compare_scenario_name(distance_m: float) -> str:
    return f"{distance_m:g}m"


def compare_scenarios(noise: Optional[NoiseConfig] = None, repetitions: int = 100,
                      seed: int = 0) -> List[ScenarioConfig]:
    """One LOS RSTA per comparison distance, in the same room with the ISTA in a corner"""
    room = Room(16.0, 10.0, 3.0)
    ista = Position(1.0, 1.0, 1.0)
    scenarios = []
    for distance in COMPARE_DISTANCES_M:
        spec = RstaSpec(f"los-{distance:g}m", _at_bearing(ista, distance, 35.0), LOS)
        geometry = Geometry(room, {ISTA_ID: ista, spec.label: spec.position})
        scenarios.append(ScenarioConfig(compare_scenario_name(distance), geometry, (spec,),
                                        noise=noise or noise_profile('az'),
                                        repetitions=repetitions, seed=seed))
    return scenarios


# Running

class RstaOutcome(NamedTuple):
    aoa_error_deg: float
    position_error_cm: float
    distance_error_cm: float
    los_likelihood: float


@dataclass
class RunResult:
    name: str = ''
    per_rsta: Dict[str, List[RstaOutcome]] = field(default_factory=dict)

    def errors_cm(self, label: Optional[str] = None) -> List[float]:
        labels = [label] if label is not None else list(self.per_rsta)
        return [o.position_error_cm for name in labels for o in self.per_rsta[name]]

    @property
    def repetitions(self) -> int:
        return max((len(v) for v in self.per_rsta.values()), default=0)


def _session_params(legacy: bool) -> IftmrParams:
    return IftmrParams(request_r2i_aod=False, first_path=not legacy)


def injected_aoa_error(config: ScenarioConfig, spec: RstaSpec, repetition: int, path_length_m: float) -> float:
    """AoA error added to one estimate, uniform within the station envelope"""
    envelope = config.noise.aoa_envelope_deg(spec.is_los, path_length_m)
    if envelope <= 0:
        return 0.0
    return float(stream(config.seed, 'aoa', repetition, spec.label).uniform(-envelope, envelope))


def solve_rsta(config: ScenarioConfig, spec: RstaSpec, repetition: int) -> RstaOutcome:
    """One repetition for one RSTA: session, AoA error injection, position solve"""
    noise = config.noise
    legacy = config.legacy_mismatch
    link = FtmLink(config.geometry, ISTA_ID, spec.label, array=config.array, snr_db=noise.snr_db,
                   clock=ClockModel(timestamp_jitter_sigma_ps=noise.tof_jitter_sigma_ps))
    seed = child_seed(stream(config.seed, 'run', repetition, spec.label))
    state = run_session(link, _session_params(legacy), seed)
    if not state.is_done:
        raise HarnessError(f"Session with {spec.label} (repetition {repetition}) ended in {state.phase.value}")

    angle = state.i2r_aod
    if legacy:
        # AoA from a separate channel realization, as with an out-of-band angle estimate
        aoa_seed = child_seed(stream(config.seed, 'legacy-aoa', repetition, spec.label))
        angle = run_session(link, _session_params(legacy), aoa_seed).i2r_aod
    if angle is None:
        raise HarnessError(f"No I2R AoD estimate for {spec.label}")

    path = state.path_tap
    angle = angle.perturbed(injected_aoa_error(config, spec, repetition, path.path_length_m))
    aoa_error = angle_difference(angle.azimuth_deg, path.departure[0])

    anchor = config.ista_position
    distance = state.distance_m
    likelihood = state.los_report.likelihood
    if likelihood >= LOS_THRESHOLD:
        estimate = position_los(anchor, distance, angle)
    else:
        try:
            wall = first_wall_hit(anchor, angle, config.geometry.room.walls().values())
            estimate, _ = position_nlos(anchor, distance, angle, wall)
        except (RayMissesWall, PathTooShort) as e:
            logger.warning(f"NLOS solve for {spec.label} failed ({e}); using the LOS solution")
            estimate = position_los(anchor, distance, angle)

    return RstaOutcome(
        aoa_error_deg=float(aoa_error),
        position_error_cm=position_error(estimate, spec.position) * 100.0,
        distance_error_cm=abs(distance - path.path_length_m) * 100.0,
        los_likelihood=float(likelihood),
    )


def run_scenario(config: ScenarioConfig, progress=None) -> RunResult:
    """
    Every (repetition, RSTA) pair is seeded from (seed, repetition, label)
    alone, so results do not depend on execution order.
    """
    result = RunResult(config.name, {spec.label: [] for spec in config.rsta_specs})
    total = config.repetitions * len(config.rsta_specs)
    logger.info(f"Running scenario {config.name}: {len(config.rsta_specs)} RSTAs x {config.repetitions} "
                f"repetitions, seed {config.seed}")
    step = 0
    for repetition in range(config.repetitions):
        for spec in config.rsta_specs:
            result.per_rsta[spec.label].append(solve_rsta(config, spec, repetition))
            step += 1
            if progress is not None:
                progress.update(step, f"{spec.label} repetition {repetition}", f"{step}/{total}")
    if progress is not None:
        progress.complete(f"Scenario {config.name} done")
    logger.info(f"Scenario {config.name} done: {total} sessions")
    return result


def default_output_dir() -> Path:
    return Path(getattr(settings, 'FTM_OUTPUT_DIR', 'results'))
