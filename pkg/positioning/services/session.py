"""
FTM-over-EDMG session: negotiation, burst exchanges, RTT ranging and the
I2R/R2I AoD measurement flow.

Every frame exchanged in a session is encoded with the ``frames`` codec,
optionally put through a frame guard (protection, tampering) and decoded
again on the receiving side; the session only acts on what it decoded.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

from django.conf import settings

from .beamtraining import (
    BeamSearchResult,
    GolayTrn,
    LosLikelihoodReport,
    beam_search,
    estimate_departure,
    los_assessment,
    main_tap,
)
from .channel import (
    EDMG_BANDWIDTHS_GHZ,
    ArrayConfig,
    ChannelTap,
    ElementPattern,
    Geometry,
    Pdp,
    SimChannel,
    compute_paths,
)
from .exceptions import (
    EmptyBurst,
    EmptyChannel,
    FrameCodecError,
    IntegrityFailure,
    NegativeRtt,
    NonceReuse,
    NonMonotonicTimestamps,
    NoPath,
    ProtocolViolation,
)
from .frames import (
    MAX_ERROR_PS,
    MAX_U64,
    AngleKind,
    AngleReport,
    AwvFeedback,
    ChannelMeasurementFeedback,
    EdmgPpdu,
    FtmFrame,
    LciReport,
    LosLikelihood,
    TrnConfig,
    decode_ftm_frame,
    decode_ppdu,
    encode_ftm_frame,
    encode_ppdu,
)
from .geometry import SPEED_OF_LIGHT_M_S, AngleEstimate, AngleSource, angle_difference
from .randomness import SeedLike, as_generator, child_seed, stream

logger = logging.getLogger(__name__)

ISTA = 'ISTA'
RSTA = 'RSTA'

# idle time between the end of one exchange and the next ToD
EXCHANGE_SPACING_PS = 100_000_000.0
SESSION_START_PS = 1_000_000.0

LOS_TRN = TrnConfig(num_units=1, p_subfields=0, m_subfields=2, awv_group_size=1)


class Phase(Enum):
    IDLE = 'Idle'
    NEGOTIATING = 'Negotiating'
    MEASURING = 'Measuring'
    AOD_FEEDBACK = 'AodFeedback'
    DONE = 'Done'
    FAILED = 'Failed'


class FailureReason(Enum):
    TIMEOUT = 'Timeout'
    REJECTED = 'Rejected'
    SECURITY_VIOLATION = 'SecurityViolation'


ALLOWED_TRANSITIONS = {
    Phase.IDLE: {Phase.NEGOTIATING},
    Phase.NEGOTIATING: {Phase.NEGOTIATING, Phase.MEASURING},
    Phase.MEASURING: {Phase.MEASURING, Phase.AOD_FEEDBACK, Phase.DONE},
    Phase.AOD_FEEDBACK: {Phase.MEASURING, Phase.DONE},
    Phase.DONE: set(),
    Phase.FAILED: set(),
}


@dataclass(frozen=True)
class IftmrParams:
    burst_count: int = 1
    session_duration_ms: int = 100
    bandwidth_ghz: float = 2.16
    secure: bool = False
    request_i2r_aod: bool = True
    request_r2i_aod: bool = True
    first_path: bool = True

    def validate(self) -> List[str]:
        """Problems that make the request unacceptable to any responder"""
        problems = []
        if not isinstance(self.burst_count, int) or self.burst_count < 1:
            problems.append(f"burst_count must be positive, got {self.burst_count!r}")
        if not self.session_duration_ms or self.session_duration_ms <= 0:
            problems.append(f"session_duration_ms must be positive, got {self.session_duration_ms!r}")
        if not any(math.isclose(self.bandwidth_ghz, bw) for bw in EDMG_BANDWIDTHS_GHZ):
            problems.append(f"bandwidth {self.bandwidth_ghz} GHz is not an EDMG channel width")
        return problems

    def merged(self, **counter) -> 'IftmrParams':
        return replace(self, **counter)


@dataclass(frozen=True)
class ResponderPolicy:
    max_bandwidth_ghz: float = 8.64
    max_burst_count: int = 16
    supports_secure: bool = True
    supports_aod: bool = True
    counter_propose: bool = False

    def evaluate(self, params: IftmrParams) -> Tuple[bool, Optional[Dict]]:
        """(accepted, counter-proposal) for an IFTMR"""
        if params.secure and not self.supports_secure:
            return False, None
        counter = {}
        if params.bandwidth_ghz > self.max_bandwidth_ghz + 1e-9:
            counter['bandwidth_ghz'] = self.max_bandwidth_ghz
        if params.burst_count > self.max_burst_count:
            counter['burst_count'] = self.max_burst_count
        if not self.supports_aod and (params.request_i2r_aod or params.request_r2i_aod):
            counter['request_i2r_aod'] = False
            counter['request_r2i_aod'] = False
        if not counter:
            return True, None
        return False, counter if self.counter_propose else None


@dataclass
class MeasurementExchange:
    t1_ps: float
    t2_ps: float
    t3_ps: float
    t4_ps: float
    tod_error_ps: int = 0
    toa_error_ps: int = 0
    tx_awv_id: int = 0
    rx_awv_id: int = 0

    @property
    def total_error_ps(self) -> int:
        return self.tod_error_ps + self.toa_error_ps


@dataclass(frozen=True)
class ClockModel:
    offsets_ps: Dict[str, float] = field(default_factory=dict)
    timestamp_jitter_sigma_ps: float = 0.0
    error_factor: float = 2.0

    def __post_init__(self):
        if self.timestamp_jitter_sigma_ps < 0:
            raise ValueError("Timestamp jitter sigma must be non-negative")

    def offset(self, sta: str) -> float:
        return float(self.offsets_ps.get(sta, 0.0))

    def reported_error(self, *jitters: float) -> int:
        """Error bound reported in the frame: factor x largest jitter, rounded up to 1 ps"""
        worst = max((abs(j) for j in jitters), default=0.0)
        return min(MAX_ERROR_PS, int(math.ceil(self.error_factor * worst)))


@dataclass
class TranscriptEntry:
    sender: str
    receiver: str
    phase: Phase
    label: str
    on_air: bytes = b''
    frame: Optional[FtmFrame] = None
    ppdu: Optional[EdmgPpdu] = None

    def __str__(self):
        lines = [f"[{self.phase.value}] {self.sender} -> {self.receiver}: {self.label}"]
        if self.on_air:
            lines.append(f"  hex: {self.on_air.hex()}")
        if self.ppdu is not None:
            trn = self.ppdu.trn_config
            lines.append(f"  ppdu: TRN {trn.num_units}x({trn.p_subfields}+{trn.m_subfields}) "
                         f"group {trn.awv_group_size}, {len(self.ppdu.mac_body)} byte MAC body")
        if self.frame is not None:
            lines.append(f"  frame: {self.frame!r}")
        return '\n'.join(lines)


@dataclass
class SessionState:
    params: IftmrParams = field(default_factory=IftmrParams)
    phase: Phase = Phase.IDLE
    failure: Optional[FailureReason] = None
    burst_index: int = 0
    exchange_index: int = 0
    exchanges: List[MeasurementExchange] = field(default_factory=list)
    i2r_aods: List[AngleEstimate] = field(default_factory=list)
    r2i_aods: List[AngleEstimate] = field(default_factory=list)
    los_report: Optional[LosLikelihoodReport] = None
    beam: Optional[BeamSearchResult] = None
    path_tap: Optional[ChannelTap] = None
    transcript: List[TranscriptEntry] = field(default_factory=list)

    def transition(self, phase: Phase) -> None:
        if phase is Phase.FAILED:
            raise ProtocolViolation("Use fail() to abort a session")
        if phase not in ALLOWED_TRANSITIONS[self.phase]:
            raise ProtocolViolation(f"Transition {self.phase.value} -> {phase.value} is not allowed")
        logger.debug(f"Session phase {self.phase.value} -> {phase.value}")
        self.phase = phase

    def fail(self, reason: FailureReason, detail: str = '') -> 'SessionState':
        if self.phase in (Phase.DONE, Phase.FAILED):
            raise ProtocolViolation(f"Session already finished ({self.phase.value})")
        self.phase = Phase.FAILED
        self.failure = reason
        logger.warning(f"FTM session failed: {reason.value} {detail}".rstrip())
        return self

    def require(self, *phases: Phase) -> None:
        if self.phase not in phases:
            allowed = ', '.join(p.value for p in phases)
            raise ProtocolViolation(f"Operation needs phase {allowed}, session is {self.phase.value}")

    @property
    def is_done(self) -> bool:
        return self.phase is Phase.DONE

    @property
    def best_exchange(self) -> MeasurementExchange:
        return select_best_exchange(self.exchanges)

    @property
    def distance_m(self) -> float:
        return rtt_to_distance(compute_rtt(self.best_exchange))

    @property
    def i2r_aod(self) -> Optional[AngleEstimate]:
        """Latest initiator-to-responder departure angle"""
        return self.i2r_aods[-1] if self.i2r_aods else None


def record_exchange(state: SessionState, exchange: MeasurementExchange, exchanges_per_burst: int) -> None:
    state.require(Phase.MEASURING)
    if len(state.exchanges) >= state.params.burst_count * exchanges_per_burst:
        raise ProtocolViolation("Burst budget exhausted")
    state.exchanges.append(exchange)
    state.exchange_index += 1


def record_i2r_aod(state: SessionState, estimate: AngleEstimate) -> None:
    state.require(Phase.MEASURING)
    state.i2r_aods.append(estimate)


def record_r2i_aod(state: SessionState, estimate: AngleEstimate) -> None:
    # R2I estimations happen once the burst is over
    state.require(Phase.AOD_FEEDBACK)
    state.r2i_aods.append(estimate)


# Negotiation

def negotiate(ista_params: IftmrParams, rsta_policy: Optional[ResponderPolicy] = None,
              reply_latency_ms: float = 5.0, deadline_ms: Optional[float] = None,
              max_rounds: int = 3) -> SessionState:
    """
    IFTMR / ACK / IFTM handshake.

    The ACK and IFTM must arrive strictly within the deadline. A responder
    that cannot satisfy the request rejects it or, when its policy allows,
    counter-proposes; the initiator then re-enters negotiation with the
    merged parameters.
    """
    if deadline_ms is None:
        deadline_ms = getattr(settings, 'FTM_NEGOTIATION_DEADLINE_MS', 10.0)
    policy = rsta_policy or ResponderPolicy()
    state = SessionState(params=ista_params)

    for round_index in range(max_rounds):
        state.transition(Phase.NEGOTIATING)
        state.transcript.append(TranscriptEntry(ISTA, RSTA, state.phase, f"IFTMR {state.params}"))

        problems = state.params.validate()
        if problems:
            return state.fail(FailureReason.REJECTED, '; '.join(problems))
        if reply_latency_ms >= deadline_ms:
            return state.fail(FailureReason.TIMEOUT,
                              f"reply after {reply_latency_ms} ms, deadline {deadline_ms} ms")

        accepted, counter = policy.evaluate(state.params)
        if accepted:
            state.transcript.append(TranscriptEntry(RSTA, ISTA, state.phase, 'ACK + IFTM (accept)'))
            state.transition(Phase.MEASURING)
            logger.info(f"FTM negotiation accepted after {round_index + 1} round(s), {reply_latency_ms} ms")
            return state
        if counter is None:
            return state.fail(FailureReason.REJECTED, 'responder cannot satisfy the request')
        state.transcript.append(TranscriptEntry(RSTA, ISTA, state.phase, f"IFTM counter-proposal {counter}"))
        state.params = state.params.merged(**counter)

    return state.fail(FailureReason.REJECTED, f"no agreement after {max_rounds} rounds")


# Ranging

def run_exchange(geometry: Geometry, clock: ClockModel, ista: str, rsta: str, seed: SeedLike = 0,
                 start_ps: float = 0.0, processing_delay_ps: Optional[float] = None,
                 path: Optional[ChannelTap] = None, state: Optional[SessionState] = None,
                 tx_awv_id: int = 0, rx_awv_id: int = 0) -> MeasurementExchange:
    """
    One timestamped exchange. t1/t4 are taken on the ISTA clock, t2/t3 on the
    RSTA clock; the true one-way flight time is the delay of ``path`` (the
    earliest path when none is given).
    """
    if state is not None:
        state.require(Phase.MEASURING)
    if processing_delay_ps is None:
        processing_delay_ps = getattr(settings, 'FTM_PROCESSING_DELAY_PS', 100_000_000.0)
    if path is None:
        taps = compute_paths(geometry, ista, rsta)
        if not taps:
            raise NoPath(f"No propagation path between {ista} and {rsta}")
        path = taps[0]
    tof = path.delay_ps

    if clock.timestamp_jitter_sigma_ps > 0:
        jitter = as_generator(seed).normal(0.0, clock.timestamp_jitter_sigma_ps, 4)
    else:
        jitter = (0.0, 0.0, 0.0, 0.0)
    j1, j2, j3, j4 = (float(j) for j in jitter)

    offset_i = clock.offset(ista)
    offset_r = clock.offset(rsta)
    exchange = MeasurementExchange(
        t1_ps=start_ps + offset_i + j1,
        t2_ps=start_ps + tof + offset_r + j2,
        t3_ps=start_ps + tof + processing_delay_ps + offset_r + j3,
        t4_ps=start_ps + 2 * tof + processing_delay_ps + offset_i + j4,
        tod_error_ps=clock.reported_error(j1, j3),
        toa_error_ps=clock.reported_error(j2, j4),
        tx_awv_id=tx_awv_id,
        rx_awv_id=rx_awv_id,
    )
    logger.debug(f"Exchange t=({exchange.t1_ps:.1f}, {exchange.t2_ps:.1f}, "
                 f"{exchange.t3_ps:.1f}, {exchange.t4_ps:.1f}) ps")
    return exchange


def compute_rtt(exchange: MeasurementExchange) -> float:
    """RTT = (t4 - t1) - (t3 - t2), in picoseconds"""
    if exchange.t4_ps < exchange.t1_ps or exchange.t3_ps < exchange.t2_ps:
        raise NonMonotonicTimestamps(
            f"Timestamps out of order: t1={exchange.t1_ps} t2={exchange.t2_ps} "
            f"t3={exchange.t3_ps} t4={exchange.t4_ps}"
        )
    return (exchange.t4_ps - exchange.t1_ps) - (exchange.t3_ps - exchange.t2_ps)


def rtt_to_distance(rtt_ps: float) -> float:
    if rtt_ps < 0:
        raise NegativeRtt(f"RTT {rtt_ps} ps is negative")
    return SPEED_OF_LIGHT_M_S * rtt_ps * 1e-12 / 2.0


def select_best_exchange(exchanges: Sequence[MeasurementExchange]) -> MeasurementExchange:
    """Exchange with the smallest reported ToD + ToA error; earliest on ties"""
    if not exchanges:
        raise EmptyBurst("No exchanges to choose from")
    return min(enumerate(exchanges), key=lambda item: (item[1].total_error_ps, item[0]))[1]


# Full session

@dataclass(frozen=True)
class FtmLink:
    """Everything the simulator knows about one ISTA/RSTA pair"""
    geometry: Geometry
    ista: str = 'ista'
    rsta: str = 'rsta'
    array: ArrayConfig = field(default_factory=lambda: ArrayConfig(element_pattern=ElementPattern.CARDIOID))
    snr_db: Optional[float] = None
    clock: ClockModel = field(default_factory=ClockModel)
    rsta_lci: Optional[LciReport] = None
    reflection_loss_db: Optional[float] = None
    cross_pol_angle_deg: Optional[float] = None
    jammed_subfields: FrozenSet[int] = frozenset()
    jam_power_db: float = 3.0

    def channel(self, tx: str, rx: str) -> SimChannel:
        channel = SimChannel.between(
            self.geometry, tx, rx, self.array, snr_db=self.snr_db,
            reflection_loss_db=self.reflection_loss_db,
            cross_pol_angle_deg=self.cross_pol_angle_deg,
        )
        if self.jammed_subfields:
            channel = channel.jammed(self.jammed_subfields, self.jam_power_db)
        return channel


class FrameGuard:
    """Plain FTM frames: encode on send, decode on receipt"""

    def seal(self, frame: FtmFrame) -> bytes:
        return encode_ftm_frame(frame)

    def open(self, data: bytes) -> FtmFrame:
        return decode_ftm_frame(data)


OnAir = Callable[[str, int, bytes], bytes]


class _SessionRunner:
    """Drives one session; keeps the bookkeeping out of run_session"""

    def __init__(self, state: SessionState, link: FtmLink, seed: int, waveform, guard: FrameGuard,
                 on_air: Optional[OnAir], exchanges_per_burst: int, processing_delay_ps: float):
        self.state = state
        self.link = link
        self.seed = seed
        self.waveform = waveform
        self.guard = guard
        self.on_air = on_air
        self.exchanges_per_burst = exchanges_per_burst
        self.processing_delay_ps = processing_delay_ps
        self.now_ps = SESSION_START_PS
        self.token = 0
        self.frame_count = 0
        self.last_ista_toa = 0

    def next_token(self) -> Tuple[int, int]:
        previous = self.token
        self.token = self.token % 255 + 1
        return self.token, previous

    def send(self, sender: str, receiver: str, label: str, frame: FtmFrame,
             trn: Optional[TrnConfig] = None) -> FtmFrame:
        """Put a frame on the air and return what the receiver decodes"""
        sealed = self.guard.seal(frame)
        ppdu = None
        if trn is not None:
            ppdu = EdmgPpdu.carrying(sealed, trn, self.waveform.sequence_id)
            data = encode_ppdu(ppdu)
        else:
            data = sealed
        index = self.frame_count
        self.frame_count += 1
        if self.on_air is not None:
            data = self.on_air(sender, index, data)

        try:
            received = decode_ppdu(data).mac_body if trn is not None else data
            decoded = self.guard.open(received)
        except FrameCodecError as e:
            raise IntegrityFailure(f"{label} no longer decodes: {e}") from e
        self.state.transcript.append(TranscriptEntry(sender, receiver, self.state.phase, label, data, decoded, ppdu))
        return decoded

    def neighbours(self, beam: BeamSearchResult) -> List:
        best = beam.fine.awv
        others = [awv for awv in beam.plan.candidates if awv.awv_id != best.awv_id]
        others.sort(key=lambda awv: (abs(angle_difference(awv.steer_azimuth_deg, best.steer_azimuth_deg)),
                                     awv.awv_id))
        return others

    def burst(self, burst_index: int) -> None:
        state, link = self.state, self.link
        state.burst_index = burst_index
        state.exchange_index = 0
        waveform = self.waveform.for_ppdu(f"burst{burst_index}")
        burst_seed = child_seed(stream(self.seed, 'burst', burst_index))

        i2r = link.channel(link.ista, link.rsta)
        beam = beam_search(i2r, waveform, child_seed(stream(burst_seed, 'i2r')),
                           first_path=state.params.first_path)
        main = main_tap(beam.fine.combined_pdp, state.params.first_path)
        los = los_assessment(i2r, beam.fine.awv, waveform, child_seed(stream(burst_seed, 'los')),
                             main_delay_index=main.delay_sample_index)
        state.beam = beam
        state.los_report = los
        state.path_tap = i2r.tap_for_delay_index(main.delay_sample_index)
        if state.path_tap is None:
            raise NoPath(f"No propagation path between {link.ista} and {link.rsta}")

        reported = [beam.fine.awv] + self.neighbours(beam)
        los_frame = min(1, self.exchanges_per_burst - 1)
        measurements = []

        for e in range(self.exchanges_per_burst):
            exchange = run_exchange(
                link.geometry, link.clock, link.ista, link.rsta,
                seed=stream(burst_seed, 'exchange', e),
                start_ps=self.now_ps,
                processing_delay_ps=self.processing_delay_ps,
                path=state.path_tap, state=state,
                tx_awv_id=beam.fine.awv.awv_id,
            )
            self.now_ps = exchange.t4_ps - link.clock.offset(link.ista) + EXCHANGE_SPACING_PS

            token, follow_up = self.next_token()
            trn = beam.plan.trn if e == 0 else LOS_TRN
            request = FtmFrame(token, follow_up, _ps(exchange.t1_ps), self.last_ista_toa)
            self.send(ISTA, RSTA, f"FTM request burst {burst_index} exchange {e}", request, trn)

            elements = []
            if e == 0 and link.rsta_lci is not None:
                elements.append(link.rsta_lci)
            if e < len(reported):
                awv = reported[e]
                pdp = beam.fine.candidate_pdps.get(awv.awv_id, Pdp())
                elements.append(AwvFeedback(awv.awv_id, float(beam.fine.qualities.get(awv.awv_id, 0.0))))
                elements.append(pdp.to_element())
            if e == los_frame:
                elements.append(LosLikelihood.from_probability(los.likelihood))
            response = FtmFrame(token, follow_up, _ps(exchange.t3_ps), _ps(exchange.t2_ps),
                                exchange.tod_error_ps, exchange.toa_error_ps, tuple(elements))
            decoded = self.send(RSTA, ISTA, f"FTM burst {burst_index} exchange {e}", response)
            self.last_ista_toa = _ps(exchange.t4_ps)
            record_exchange(state, exchange, self.exchanges_per_burst)

            feedback = decoded.element(AwvFeedback)
            cmf = decoded.element(ChannelMeasurementFeedback)
            if feedback is not None and cmf is not None:
                measurements.append((beam.plan.candidate(feedback.awv_id), Pdp.from_element(cmf)))
            if state.params.request_i2r_aod and e >= 1 and measurements:
                estimate = estimate_departure(link.array, measurements, main.delay_sample_index,
                                              beam.step_deg, AngleSource.I2R_AOD)
                record_i2r_aod(state, estimate)
                logger.debug(f"I2R AoD estimate {len(state.i2r_aods)}: {estimate}")

        if state.params.request_i2r_aod and not state.i2r_aods and measurements:
            # single-exchange bursts still yield one estimate
            record_i2r_aod(state, estimate_departure(link.array, measurements, main.delay_sample_index,
                                                     beam.step_deg, AngleSource.I2R_AOD))

    def r2i_feedback(self, burst_index: int) -> None:
        state, link = self.state, self.link
        state.transition(Phase.AOD_FEEDBACK)
        burst_seed = child_seed(stream(self.seed, 'burst', burst_index))
        waveform = self.waveform.for_ppdu(f"burst{burst_index}-r2i")

        r2i = link.channel(link.rsta, link.ista)
        beam = beam_search(r2i, waveform, child_seed(stream(burst_seed, 'r2i')),
                           first_path=state.params.first_path)
        sweep = EdmgPpdu.carrying(b'', beam.plan.trn, self.waveform.sequence_id)
        state.transcript.append(TranscriptEntry(RSTA, ISTA, state.phase, f"R2I sweep burst {burst_index}",
                                                encode_ppdu(sweep), None, sweep))

        token, follow_up = self.next_token()
        elements = [AwvFeedback(beam.fine.awv.awv_id, float(beam.fine.quality))]
        if state.i2r_aod is not None:
            elements.append(_angle_report(AngleKind.I2R_AOD, state.i2r_aod))
        feedback = self.send(ISTA, RSTA, f"AWV feedback burst {burst_index}",
                             FtmFrame(token, follow_up, 0, self.last_ista_toa, elements=tuple(elements)))

        chosen = beam.plan.candidate(feedback.element(AwvFeedback).awv_id)
        estimate = AngleEstimate(chosen.steer_azimuth_deg, chosen.steer_elevation_deg, AngleSource.R2I_AOD)
        record_r2i_aod(state, estimate)

        final = [_angle_report(AngleKind.R2I_AOD, estimate)]
        i2r_report = feedback.element(AngleReport, AngleKind.I2R_AOD)
        if i2r_report is not None:
            final.insert(0, i2r_report)
        token, follow_up = self.next_token()
        self.send(RSTA, ISTA, f"final FTM burst {burst_index}",
                  FtmFrame(token, follow_up, elements=tuple(final)))


def _ps(value: float) -> int:
    return min(MAX_U64, max(0, int(round(value))))


def _angle_report(kind: AngleKind, estimate: AngleEstimate) -> AngleReport:
    return AngleReport.from_degrees(kind, estimate.azimuth_deg, estimate.elevation_deg)


def run_session(link: FtmLink, params: Optional[IftmrParams] = None, seed: int = 0,
                policy: Optional[ResponderPolicy] = None,
                reply_latency_ms: float = 5.0,
                waveform=None,
                guard: Optional[FrameGuard] = None,
                on_air: Optional[OnAir] = None,
                exchanges_per_burst: Optional[int] = None,
                processing_delay_ps: Optional[float] = None) -> SessionState:
    """
    Negotiate, then run every burst: beam training and LOS assessment, the
    timestamped exchanges with I2R AoD estimates from the reported channel
    measurements, and, after the burst, the R2I AoD feedback.

    ``on_air(sender, frame_index, data)`` may rewrite bytes in flight; an
    integrity failure on a protected frame, or a frame or PPDU that no longer
    decodes, ends the session in Failed. A link whose every path is blocked
    raises NoPath.
    """
    params = params or IftmrParams()
    if exchanges_per_burst is None:
        exchanges_per_burst = getattr(settings, 'FTM_EXCHANGES_PER_BURST', 3)
    if processing_delay_ps is None:
        processing_delay_ps = getattr(settings, 'FTM_PROCESSING_DELAY_PS', 100_000_000.0)
    if exchanges_per_burst < 1:
        raise EmptyBurst("A burst needs at least one exchange")

    state = negotiate(params, policy, reply_latency_ms)
    if state.phase is Phase.FAILED:
        return state

    runner = _SessionRunner(state, link, seed, waveform or GolayTrn(), guard or FrameGuard(),
                            on_air, exchanges_per_burst, processing_delay_ps)
    try:
        for burst_index in range(state.params.burst_count):
            if burst_index > 0:
                state.transition(Phase.MEASURING)
            runner.burst(burst_index)
            if state.params.request_r2i_aod:
                runner.r2i_feedback(burst_index)
    except (IntegrityFailure, NonceReuse) as e:
        return state.fail(FailureReason.SECURITY_VIOLATION, str(e))
    except EmptyChannel as e:
        raise NoPath(f"No propagation path between {link.ista} and {link.rsta}") from e

    state.transition(Phase.DONE)
    logger.info(f"FTM session done: {len(state.exchanges)} exchanges, distance {state.distance_m:.4f} m, "
                f"{len(state.i2r_aods)} I2R / {len(state.r2i_aods)} R2I AoD estimates")
    return state


def dump_transcript(state: SessionState, path) -> Path:
    """Write every frame of the session as hex plus its decoded form"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"# FTM session transcript: phase {state.phase.value}"
    if state.failure is not None:
        header += f" ({state.failure.value})"
    with path.open('w', encoding='utf-8') as handle:
        handle.write(header + '\n')
        for entry in state.transcript:
            handle.write(str(entry) + '\n')
    logger.debug(f"Transcript with {len(state.transcript)} entries written to {path}")
    return path
