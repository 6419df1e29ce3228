"""
First Path Beam Training and polarization-based LOS assessment.

The initiator sweeps its AWV over groups of TRN M-subfields while the
responder listens quasi-omni, measures one PDP per subfield, combines the PDPs
of a group and scores them. The AWV whose combined PDP scores highest points
to the first path. Two further subfields sent with that AWV, co- and
cross-polarized, give the LOS likelihood.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings
from scipy.optimize import minimize_scalar

from .channel import (
    ArrayConfig,
    AwvConfig,
    Pdp,
    PdpTap,
    Polarization,
    SimChannel,
    array_pattern,
    measure_pdp,
)
from .exceptions import BeamTrainingError, EmptyGroup, EmptyPdp
from .frames import SubfieldSequence, TrnConfig
from .geometry import AngleEstimate, AngleSource, angle_difference, wrap_azimuth
from .golay import GolaySequencePair, golay_pair
from .randomness import child_seed, stream

logger = logging.getLogger(__name__)

QUASI_OMNI = AwvConfig(awv_id=0, steer_azimuth_deg=0.0, steer_elevation_deg=0.0)

# first-path preference: earliest tap holding at least this share of the peak power
FIRST_PATH_POWER_RATIO = 0.5

LOS_THRESHOLD = 0.5


class GolayTrn:
    """Standard TRN: every subfield carries the same Golay pair"""

    sequence_id = SubfieldSequence.GOLAY

    def __init__(self, pair: Optional[GolaySequencePair] = None):
        self.pair = pair or golay_pair(getattr(settings, 'FTM_GOLAY_LENGTH', 128))

    @property
    def n(self) -> int:
        return self.pair.n

    def for_ppdu(self, label, trn: Optional[TrnConfig] = None) -> 'GolayTrn':
        return self

    def sequences(self, subfield_index: int):
        return self.pair.ga_array, self.pair.gb_array

    def estimate(self, subfield_index: int, rx_a, rx_b, noise_variance: float = 0.0) -> Optional[Pdp]:
        return measure_pdp((rx_a, rx_b), self.pair)


@dataclass(frozen=True)
class SweepPlan:
    candidates: Tuple[AwvConfig, ...]
    trn: TrnConfig

    def __post_init__(self):
        object.__setattr__(self, 'candidates', tuple(self.candidates))
        if not self.candidates:
            raise BeamTrainingError("A sweep needs at least one candidate AWV")
        ids = [c.awv_id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise BeamTrainingError("Candidate AWV ids must be unique")
        needed = len(self.candidates) * self.trn.awv_group_size
        if needed > self.trn.total_m_subfields:
            raise BeamTrainingError(
                f"{len(self.candidates)} candidates x group {self.trn.awv_group_size} exceed "
                f"{self.trn.total_m_subfields} M-subfields"
            )

    @classmethod
    def build(cls, candidates: Sequence[AwvConfig], awv_group_size: Optional[int] = None,
              m_subfields: int = 4, p_subfields: int = 0) -> 'SweepPlan':
        if awv_group_size is None:
            awv_group_size = getattr(settings, 'FTM_AWV_GROUP_SIZE', 2)
        trn = TrnConfig.for_sweep(len(candidates), awv_group_size, m_subfields, p_subfields)
        return cls(tuple(candidates), trn)

    def subfields_for(self, candidate_index: int) -> List[int]:
        """TRN subfield indices carrying candidate ``candidate_index``"""
        size = self.trn.awv_group_size
        first = candidate_index * size
        return [self.trn.m_subfield_index(j) for j in range(first, first + size)]

    @property
    def group_assignment(self) -> Dict[int, int]:
        """TRN subfield index -> candidate index"""
        return {sub: i for i in range(len(self.candidates)) for sub in self.subfields_for(i)}

    def candidate(self, awv_id: int) -> AwvConfig:
        for awv in self.candidates:
            if awv.awv_id == awv_id:
                return awv
        raise BeamTrainingError(f"AWV {awv_id} is not part of this sweep")


@dataclass(frozen=True)
class BestAwvResult:
    awv: AwvConfig
    quality: float
    combined_pdp: Pdp
    # every candidate's combined PDP and quality, keyed by awv_id
    candidate_pdps: Dict[int, Pdp] = field(default_factory=dict, compare=False, repr=False)
    qualities: Dict[int, float] = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class LosLikelihoodReport:
    p_main_copol: float
    p_main_crosspol: float
    likelihood: float
    main_delay_index: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.likelihood <= 1.0:
            raise BeamTrainingError(f"LOS likelihood {self.likelihood} outside [0, 1]")

    @property
    def is_los(self) -> bool:
        return self.likelihood >= LOS_THRESHOLD


# PDP processing

def combine_pdps(group: Sequence[Pdp]) -> Pdp:
    """
    Coherently average a group of PDPs over the union of their delays.

    A delay missing from a PDP counts as a zero tap. The noise amplitude of
    each tap is recovered from its SNR, averaged the same way, and the SNR is
    recomputed, so G identical taps gain 10 log10(G) dB.
    """
    group = list(group)
    if not group:
        raise EmptyGroup("Cannot combine an empty PDP group")
    if len(group) == 1:
        return group[0]

    size = len(group)
    gains: Dict[int, complex] = {}
    noise_powers: Dict[int, List[float]] = {}
    for pdp in group:
        for tap in pdp.taps:
            k = tap.delay_sample_index
            gains[k] = gains.get(k, 0j) + tap.gain
            noise = abs(tap.gain) / 10 ** (tap.snr_db / 20.0)
            noise_powers.setdefault(k, []).append(noise ** 2)

    taps = []
    for k in sorted(gains):
        mean_gain = gains[k] / size
        if mean_gain == 0:
            continue
        # absent entries carry the same noise as the present ones
        mean_noise = math.sqrt(sum(noise_powers[k]) / len(noise_powers[k]) / size)
        mean_noise = max(mean_noise, abs(mean_gain) * 1e-15)
        snr = 20.0 * math.log10(abs(mean_gain) / mean_noise)
        taps.append(PdpTap(k, float(mean_gain.real), float(mean_gain.imag), snr))
    return Pdp(tuple(taps))


def main_tap(pdp: Pdp, first_path: bool = True) -> PdpTap:
    """Earliest tap with at least half the peak power, or the strongest tap"""
    if not pdp.taps:
        raise EmptyPdp("PDP has no taps")
    peak = max(tap.power for tap in pdp.taps)
    if not first_path:
        return max(pdp.taps, key=lambda t: (t.power, -t.delay_sample_index))
    for tap in pdp.taps:
        if tap.power >= FIRST_PATH_POWER_RATIO * peak:
            return tap
    return max(pdp.taps, key=lambda t: t.power)


def pdp_quality(pdp: Pdp, window: Optional[int] = None, first_path: bool = True) -> float:
    """P_main / (1 + sum of tap powers within ``window`` samples of the main tap)"""
    if window is None:
        window = getattr(settings, 'FTM_PDP_QUALITY_WINDOW', 3)
    main = main_tap(pdp, first_path)
    k = main.delay_sample_index
    neighbours = sum(t.power for t in pdp.taps if 0 < abs(t.delay_sample_index - k) <= window)
    return main.power / (1.0 + neighbours)


# Sweeps

def measure_subfield(channel: SimChannel, waveform, subfield_index: int, tx_awv: AwvConfig, seed: int,
                     rx_awv: AwvConfig = QUASI_OMNI,
                     tx_pol: Polarization = Polarization.VERTICAL,
                     rx_pol: Polarization = Polarization.VERTICAL) -> Optional[Pdp]:
    """
    PDP measured on one TRN subfield, or None when the receiver discards it.

    Noise for a subfield depends only on (seed, subfield, polarizations), so
    candidates can be measured in any order with identical results.
    """
    rng = stream(seed, 'subfield', subfield_index, tx_pol.value, rx_pol.value)
    seq_a, seq_b = waveform.sequences(subfield_index)
    rx_a = channel.transmit(seq_a, tx_awv, rx_awv, rng, tx_pol, rx_pol, subfield_index)
    rx_b = channel.transmit(seq_b, tx_awv, rx_awv, rng, tx_pol, rx_pol, subfield_index)
    return waveform.estimate(subfield_index, rx_a, rx_b, channel.noise_variance)


def evaluate_candidate(channel: SimChannel, plan: SweepPlan, waveform, seed: int, candidate_index: int,
                       first_path: bool = True, window: Optional[int] = None) -> Tuple[float, Pdp]:
    """(quality, combined PDP) of one candidate; quality 0 when nothing was detected"""
    awv = plan.candidates[candidate_index]
    pdps = []
    for subfield in plan.subfields_for(candidate_index):
        pdp = measure_subfield(channel, waveform, subfield, awv, seed)
        if pdp is None:
            logger.warning(f"Discarding TRN subfield {subfield} (AWV {awv.awv_id})")
            continue
        pdps.append(pdp)
    if not pdps:
        return 0.0, Pdp()
    combined = combine_pdps(pdps)
    if not combined.taps:
        return 0.0, combined
    return pdp_quality(combined, window, first_path), combined


def fpbt(channel: SimChannel, plan: SweepPlan, waveform, seed: int,
         first_path: bool = True, window: Optional[int] = None) -> BestAwvResult:
    """Sweep every candidate and keep the best quality; ties go to the lowest awv_id"""
    qualities: Dict[int, float] = {}
    pdps: Dict[int, Pdp] = {}
    for index, awv in enumerate(plan.candidates):
        quality, combined = evaluate_candidate(channel, plan, waveform, seed, index, first_path, window)
        qualities[awv.awv_id] = quality
        pdps[awv.awv_id] = combined

    detected = [awv for awv in plan.candidates if pdps[awv.awv_id].taps]
    if not detected:
        raise EmptyPdp("No candidate AWV detected any path")
    best = min(detected, key=lambda awv: (-qualities[awv.awv_id], awv.awv_id))
    logger.debug(f"FPBT over {len(plan.candidates)} AWVs: best {best.awv_id} "
                 f"(az {best.steer_azimuth_deg:.2f}) quality {qualities[best.awv_id]:.4g}")
    return BestAwvResult(best, qualities[best.awv_id], pdps[best.awv_id], pdps, qualities)


def sector_candidates(sectors: int, elevation_deg: float = 0.0) -> Tuple[AwvConfig, ...]:
    step = 360.0 / sectors
    return tuple(AwvConfig(k, wrap_azimuth(k * step), elevation_deg) for k in range(sectors))


def fine_candidates(center_azimuth_deg: float, span_deg: float, step_deg: float,
                    elevation_deg: float = 0.0) -> Tuple[AwvConfig, ...]:
    count = int(round(span_deg / step_deg))
    return tuple(
        AwvConfig(i, wrap_azimuth(center_azimuth_deg + k * step_deg), elevation_deg)
        for i, k in enumerate(range(-count, count + 1))
    )


@dataclass(frozen=True)
class BeamSearchResult:
    coarse: BestAwvResult
    fine: BestAwvResult
    plan: SweepPlan
    step_deg: float

    @property
    def best(self) -> BestAwvResult:
        return self.fine


def beam_search(channel: SimChannel, waveform, seed: int,
                sectors: Optional[int] = None,
                span_deg: Optional[float] = None,
                step_deg: Optional[float] = None,
                awv_group_size: Optional[int] = None,
                elevation_deg: float = 0.0,
                first_path: bool = True,
                coarse_cols: int = 2) -> BeamSearchResult:
    """
    Coarse sector sweep with a wide-beam subarray, then FPBT over a fine grid
    around the best sector.
    """
    sectors = sectors or getattr(settings, 'FTM_COARSE_SECTORS', 16)
    span_deg = span_deg if span_deg is not None else getattr(settings, 'FTM_FINE_SPAN_DEG', 15.0)
    step_deg = step_deg or getattr(settings, 'FTM_FINE_STEP_DEG', 2.5)

    wide = channel.with_tx_array(channel.tx_array.subarray(coarse_cols))
    coarse_plan = SweepPlan.build(sector_candidates(sectors, elevation_deg), awv_group_size=1)
    coarse = fpbt(wide, coarse_plan, waveform.for_ppdu('coarse', coarse_plan.trn),
                  child_seed(stream(seed, 'coarse')), first_path)

    fine_plan = SweepPlan.build(
        fine_candidates(coarse.awv.steer_azimuth_deg, span_deg, step_deg, elevation_deg),
        awv_group_size,
    )
    fine = fpbt(channel, fine_plan, waveform.for_ppdu('fine', fine_plan.trn),
                child_seed(stream(seed, 'fine')), first_path)
    return BeamSearchResult(coarse, fine, fine_plan, step_deg)


# LOS assessment

def likelihood_from_powers(p_co: float, p_cross: float, epsilon: float = 1e-12) -> float:
    """XPD / (1 + XPD) with XPD = p_co / (p_cross + epsilon)"""
    xpd = p_co / (p_cross + epsilon)
    if math.isinf(xpd):
        return 1.0
    return xpd / (1.0 + xpd)


def los_assessment(channel: SimChannel, best_awv: AwvConfig, waveform, seed: int,
                   p_subfields: int = 0, main_delay_index: Optional[int] = None,
                   first_path: bool = True, epsilon: float = 1e-12) -> LosLikelihoodReport:
    """
    Send TRN subfield P+1 co-polarized and P+2 cross-polarized with the best
    AWV and compare the main-tap powers.
    """
    waveform = waveform.for_ppdu('los', TrnConfig(num_units=1, p_subfields=p_subfields, m_subfields=2))
    co_index, cross_index = p_subfields, p_subfields + 1
    co = measure_subfield(channel, waveform, co_index, best_awv, seed,
                          tx_pol=Polarization.VERTICAL, rx_pol=Polarization.VERTICAL)
    cross = measure_subfield(channel, waveform, cross_index, best_awv, seed,
                             tx_pol=Polarization.VERTICAL, rx_pol=Polarization.HORIZONTAL)
    co = co or Pdp()
    cross = cross or Pdp()

    if main_delay_index is None:
        if not co.taps:
            raise EmptyPdp("Co-polarized subfield detected no path")
        main_delay_index = main_tap(co, first_path).delay_sample_index

    co_tap = co.tap_at(main_delay_index)
    cross_tap = cross.tap_at(main_delay_index)
    p_co = co_tap.power if co_tap else 0.0
    p_cross = cross_tap.power if cross_tap else 0.0
    likelihood = likelihood_from_powers(p_co, p_cross, epsilon)
    logger.debug(f"LOS assessment at tap {main_delay_index}: co {p_co:.4g} cross {p_cross:.4g} "
                 f"-> {likelihood:.4f}")
    return LosLikelihoodReport(p_co, p_cross, likelihood, main_delay_index)


# Departure angle

def _amplitude_at(pdp: Pdp, delay_index: int) -> Optional[float]:
    tap = pdp.tap_at(delay_index)
    return abs(tap.gain) if tap is not None else None


def estimate_departure(array: ArrayConfig, measurements: Sequence[Tuple[AwvConfig, Pdp]],
                       main_delay_index: int, step_deg: float,
                       source: AngleSource = AngleSource.I2R_AOD) -> AngleEstimate:
    """
    Departure angle from main-tap amplitudes measured with several AWVs.

    The first measurement is the reference AWV. A common path gain g and the
    azimuth are fitted so that g |AF(awv_k, azimuth)| matches each amplitude;
    with one usable measurement the reference steering direction is returned.
    """
    points = [(awv, amp) for awv, pdp in measurements
              if (amp := _amplitude_at(pdp, main_delay_index)) is not None]
    if not points:
        raise EmptyPdp(f"No measurement holds the main tap {main_delay_index}")

    reference = points[0][0]
    elevation = reference.steer_elevation_deg
    if len(points) == 1:
        return AngleEstimate(reference.steer_azimuth_deg, elevation, source)

    awvs = [awv for awv, _ in points]
    measured = np.array([amp for _, amp in points])
    offsets = [angle_difference(awv.steer_azimuth_deg, reference.steer_azimuth_deg) for awv in awvs]
    low, high = min(offsets) - step_deg, max(offsets) + step_deg

    def residual(offset: float) -> float:
        model = array_pattern(array, awvs, (reference.steer_azimuth_deg + offset, elevation))
        denominator = float(model @ model)
        if denominator == 0.0:
            return float(measured @ measured)
        g = float(model @ measured) / denominator
        return float(np.sum((measured - g * model) ** 2))

    result = minimize_scalar(residual, bounds=(low, high), method='bounded',
                             options={'xatol': 1e-10, 'maxiter': 500})
    return AngleEstimate(reference.steer_azimuth_deg + float(result.x), elevation, source)
