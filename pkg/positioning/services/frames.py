"""
FTM Action frame and EDMG PPDU data model with a canonical byte codec.

Wire layout, little-endian throughout:

    FTM frame   dialog_token u8 | follow_up_token u8 | tod_ps u64 | toa_ps u64
                | tod_error_ps u16 | toa_error_ps u16        (22-byte header)
                followed by measurement elements, each tag u8 | length u16 | body

    EDMG PPDU   num_units u16 | P u8 | M u8 | awv_group_size u8
                | mac_body_length u16 | mac_body
                | sequence_count u16 | one u8 sequence identifier per subfield

The TRN field travels as sequence identifiers plus its configuration; sample
synthesis happens in the channel simulator.
"""

import logging
import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Tuple, Union

from .exceptions import (
    DuplicateElement,
    InvariantViolation,
    TrnConfigMismatch,
    TruncatedFrame,
    UnknownElementTag,
)

logger = logging.getLogger(__name__)

HEADER = struct.Struct('<BBQQHH')
TLV_HEADER = struct.Struct('<BH')
PPDU_TRN_HEADER = struct.Struct('<HBBB')
LENGTH_FIELD = struct.Struct('<H')

HEADER_SIZE = HEADER.size  # 22
MAX_U64 = 2 ** 64 - 1
MAX_ERROR_PS = 2 ** 16 - 1


class ElementTag(IntEnum):
    LCI_REPORT = 0x01
    CHANNEL_MEASUREMENT_FEEDBACK = 0x02
    AWV_FEEDBACK = 0x03
    ANGLE_REPORT = 0x04
    LOS_LIKELIHOOD = 0x05


class AngleKind(IntEnum):
    I2R_AOD = 1
    R2I_AOD = 2


class SubfieldSequence(IntEnum):
    """What a TRN subfield carries"""
    GOLAY = 0x01
    SECURE = 0x02


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvariantViolation(message)


def _require_int(value, low: int, high: int, name: str) -> None:
    _require(isinstance(value, int) and not isinstance(value, bool), f"{name} must be an integer")
    _require(low <= value <= high, f"{name}={value} outside [{low}, {high}]")


def _require_finite(value: float, name: str) -> None:
    _require(isinstance(value, (int, float)) and math.isfinite(value), f"{name} must be finite")


def _positive_zero(value: float) -> float:
    """float with -0.0 folded to 0.0, so decoded -0.0 fails the canonical re-encode"""
    return float(value) + 0.0


# Measurement elements

@dataclass(frozen=True)
class LciReport:
    latitude_microdeg: int
    longitude_microdeg: int
    altitude_cm: int

    tag = ElementTag.LCI_REPORT
    _body = struct.Struct('<iii')

    def __post_init__(self):
        _require_int(self.latitude_microdeg, -90_000_000, 90_000_000, 'latitude_microdeg')
        _require_int(self.longitude_microdeg, -180_000_000, 180_000_000, 'longitude_microdeg')
        _require_int(self.altitude_cm, -(2 ** 31), 2 ** 31 - 1, 'altitude_cm')

    @property
    def key(self):
        return self.tag

    def encode_body(self) -> bytes:
        return self._body.pack(self.latitude_microdeg, self.longitude_microdeg, self.altitude_cm)

    @classmethod
    def decode_body(cls, body: bytes) -> 'LciReport':
        return cls(*_unpack_exact(cls._body, body, 'LCI Report'))


class CmfTap(NamedTuple):
    delay_sample_index: int
    i_component: float
    q_component: float
    snr_db: float


@dataclass(frozen=True)
class ChannelMeasurementFeedback:
    taps: Tuple[CmfTap, ...] = ()

    tag = ElementTag.CHANNEL_MEASUREMENT_FEEDBACK
    _tap = struct.Struct('<Hddd')

    def __post_init__(self):
        taps = tuple(CmfTap(*tap) for tap in self.taps)
        previous = -1
        for tap in taps:
            _require_int(tap.delay_sample_index, 0, 0xFFFF, 'delay_sample_index')
            _require(tap.delay_sample_index > previous,
                     'Channel Measurement Feedback taps must be strictly increasing in delay')
            previous = tap.delay_sample_index
            _require_finite(tap.i_component, 'i_component')
            _require_finite(tap.q_component, 'q_component')
            _require_finite(tap.snr_db, 'snr_db')
        object.__setattr__(self, 'taps', tuple(
            CmfTap(t.delay_sample_index, _positive_zero(t.i_component), _positive_zero(t.q_component),
                   _positive_zero(t.snr_db))
            for t in taps
        ))

    @property
    def key(self):
        return self.tag

    def encode_body(self) -> bytes:
        return b''.join(
            self._tap.pack(t.delay_sample_index, float(t.i_component), float(t.q_component), float(t.snr_db))
            for t in self.taps
        )

    @classmethod
    def decode_body(cls, body: bytes) -> 'ChannelMeasurementFeedback':
        _require(len(body) % cls._tap.size == 0,
                 f"Channel Measurement Feedback length {len(body)} is not a multiple of {cls._tap.size}")
        return cls(tuple(CmfTap(*values) for values in cls._tap.iter_unpack(body)))


@dataclass(frozen=True)
class AwvFeedback:
    awv_id: int
    quality_score: float

    tag = ElementTag.AWV_FEEDBACK
    _body = struct.Struct('<Hd')

    def __post_init__(self):
        _require_int(self.awv_id, 0, 0xFFFF, 'awv_id')
        _require_finite(self.quality_score, 'quality_score')
        object.__setattr__(self, 'quality_score', _positive_zero(self.quality_score))

    @property
    def key(self):
        return self.tag

    def encode_body(self) -> bytes:
        return self._body.pack(self.awv_id, float(self.quality_score))

    @classmethod
    def decode_body(cls, body: bytes) -> 'AwvFeedback':
        return cls(*_unpack_exact(cls._body, body, 'AWV Feedback'))


@dataclass(frozen=True)
class AngleReport:
    kind: AngleKind
    azimuth_centideg: int
    elevation_centideg: int

    tag = ElementTag.ANGLE_REPORT
    _body = struct.Struct('<Bhh')

    def __post_init__(self):
        try:
            object.__setattr__(self, 'kind', AngleKind(self.kind))
        except ValueError:
            raise InvariantViolation(f"Unknown angle report kind {self.kind!r}")
        _require_int(self.azimuth_centideg, -18000, 18000, 'azimuth_centideg')
        _require_int(self.elevation_centideg, -9000, 9000, 'elevation_centideg')

    @classmethod
    def from_degrees(cls, kind: AngleKind, azimuth_deg: float, elevation_deg: float) -> 'AngleReport':
        return cls(kind, int(round(azimuth_deg * 100)), int(round(elevation_deg * 100)))

    @property
    def azimuth_deg(self) -> float:
        return self.azimuth_centideg / 100.0

    @property
    def elevation_deg(self) -> float:
        return self.elevation_centideg / 100.0

    @property
    def key(self):
        # I2R and R2I reports are distinct kinds; the final frame carries both
        return (self.tag, self.kind)

    def encode_body(self) -> bytes:
        return self._body.pack(int(self.kind), self.azimuth_centideg, self.elevation_centideg)

    @classmethod
    def decode_body(cls, body: bytes) -> 'AngleReport':
        return cls(*_unpack_exact(cls._body, body, 'Angle Report'))


@dataclass(frozen=True)
class LosLikelihood:
    probability_milli: int

    tag = ElementTag.LOS_LIKELIHOOD
    _body = struct.Struct('<H')

    def __post_init__(self):
        _require_int(self.probability_milli, 0, 1000, 'probability_milli')

    @classmethod
    def from_probability(cls, probability: float) -> 'LosLikelihood':
        return cls(int(round(min(max(probability, 0.0), 1.0) * 1000)))

    @property
    def probability(self) -> float:
        return self.probability_milli / 1000.0

    @property
    def key(self):
        return self.tag

    def encode_body(self) -> bytes:
        return self._body.pack(self.probability_milli)

    @classmethod
    def decode_body(cls, body: bytes) -> 'LosLikelihood':
        return cls(*_unpack_exact(cls._body, body, 'LOS Likelihood'))


MeasurementElement = Union[LciReport, ChannelMeasurementFeedback, AwvFeedback, AngleReport, LosLikelihood]

ELEMENT_TYPES = {
    ElementTag.LCI_REPORT: LciReport,
    ElementTag.CHANNEL_MEASUREMENT_FEEDBACK: ChannelMeasurementFeedback,
    ElementTag.AWV_FEEDBACK: AwvFeedback,
    ElementTag.ANGLE_REPORT: AngleReport,
    ElementTag.LOS_LIKELIHOOD: LosLikelihood,
}


def _unpack_exact(layout: struct.Struct, body: bytes, name: str):
    if len(body) < layout.size:
        raise TruncatedFrame(f"{name} body has {len(body)} bytes, needs {layout.size}")
    if len(body) != layout.size:
        raise InvariantViolation(f"{name} body has {len(body)} bytes, expected {layout.size}")
    return layout.unpack(body)


# FTM frame

@dataclass(frozen=True)
class FtmFrame:
    dialog_token: int
    follow_up_token: int = 0
    tod_ps: int = 0
    toa_ps: int = 0
    tod_error_ps: int = 0
    toa_error_ps: int = 0
    elements: Tuple[MeasurementElement, ...] = ()
    # Tags skipped while decoding; informational, not part of the value
    skipped_tags: Tuple[int, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'elements', tuple(self.elements))
        _require_int(self.dialog_token, 0, 255, 'dialog_token')
        _require_int(self.follow_up_token, 0, 255, 'follow_up_token')
        _require_int(self.tod_ps, 0, MAX_U64, 'tod_ps')
        _require_int(self.toa_ps, 0, MAX_U64, 'toa_ps')
        _require_int(self.tod_error_ps, 0, MAX_ERROR_PS, 'tod_error_ps')
        _require_int(self.toa_error_ps, 0, MAX_ERROR_PS, 'toa_error_ps')
        seen = set()
        for element in self.elements:
            _require(type(element) in ELEMENT_TYPES.values(), f"Not a measurement element: {element!r}")
            if element.key in seen:
                raise DuplicateElement(f"Element {element.key!r} appears more than once")
            seen.add(element.key)

    def element(self, element_type, kind: AngleKind = None):
        """First element of the given type (and angle kind), or None"""
        for element in self.elements:
            if isinstance(element, element_type) and (kind is None or element.kind == kind):
                return element
        return None


def encode_ftm_frame(frame: FtmFrame) -> bytes:
    parts = [HEADER.pack(
        frame.dialog_token,
        frame.follow_up_token,
        frame.tod_ps,
        frame.toa_ps,
        frame.tod_error_ps,
        frame.toa_error_ps,
    )]
    for element in frame.elements:
        body = element.encode_body()
        parts.append(TLV_HEADER.pack(int(element.tag), len(body)))
        parts.append(body)
    return b''.join(parts)


def decode_ftm_frame(data: bytes, strict: bool = False) -> FtmFrame:
    """
    Decode an FTM frame.

    Unknown element tags are skipped and listed in ``skipped_tags`` unless
    ``strict`` is set, in which case UnknownElementTag is raised.
    """
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise TruncatedFrame(f"FTM frame has {len(data)} bytes, header needs {HEADER_SIZE}")

    header = HEADER.unpack_from(data, 0)
    offset = HEADER_SIZE
    elements = []
    skipped = []
    seen = set()

    while offset < len(data):
        if len(data) - offset < TLV_HEADER.size:
            raise TruncatedFrame(f"Element header truncated at offset {offset}")
        tag, length = TLV_HEADER.unpack_from(data, offset)
        offset += TLV_HEADER.size
        if len(data) - offset < length:
            raise TruncatedFrame(
                f"Element 0x{tag:02x} declares {length} bytes, {len(data) - offset} available"
            )
        body = data[offset:offset + length]
        offset += length

        element_type = ELEMENT_TYPES.get(tag)
        if element_type is None:
            if strict:
                raise UnknownElementTag(tag)
            logger.warning(f"Skipping unknown FTM element tag 0x{tag:02x} ({length} bytes)")
            skipped.append(tag)
            continue

        element = element_type.decode_body(body)
        if element.encode_body() != body:
            raise InvariantViolation(f"Non-canonical encoding of element 0x{tag:02x}")
        if element.key in seen:
            raise DuplicateElement(f"Element {element.key!r} appears more than once")
        seen.add(element.key)
        elements.append(element)

    return FtmFrame(*header, elements=tuple(elements), skipped_tags=tuple(skipped))


# EDMG PPDU

@dataclass(frozen=True)
class TrnConfig:
    """TRN field of L+1 units, each of P+M subfields"""
    num_units: int
    p_subfields: int
    m_subfields: int
    awv_group_size: int = 1

    def __post_init__(self):
        _require_int(self.num_units, 1, 0xFFFF, 'num_units')
        _require_int(self.p_subfields, 0, 0xFF, 'p_subfields')
        _require_int(self.m_subfields, 2, 0xFF, 'm_subfields')
        _require_int(self.awv_group_size, 1, self.m_subfields, 'awv_group_size')
        _require(self.m_subfields % self.awv_group_size == 0,
                 f"awv_group_size {self.awv_group_size} must divide M={self.m_subfields}")

    @property
    def subfields_per_unit(self) -> int:
        return self.p_subfields + self.m_subfields

    @property
    def total_subfields(self) -> int:
        return self.num_units * self.subfields_per_unit

    @property
    def total_m_subfields(self) -> int:
        return self.num_units * self.m_subfields

    def m_subfield_index(self, j: int) -> int:
        """Position in the TRN field of the j-th M-subfield counted across units"""
        unit, position = divmod(j, self.m_subfields)
        return unit * self.subfields_per_unit + self.p_subfields + position

    @classmethod
    def for_sweep(cls, candidates: int, awv_group_size: int = 2, m_subfields: int = 4,
                  p_subfields: int = 0) -> 'TrnConfig':
        """Smallest TRN field whose M-subfields hold ``candidates`` groups"""
        m_subfields = max(m_subfields, awv_group_size)
        m_subfields -= m_subfields % awv_group_size
        needed = candidates * awv_group_size
        num_units = max(1, -(-needed // m_subfields))
        return cls(num_units, p_subfields, m_subfields, awv_group_size)


@dataclass(frozen=True)
class EdmgPpdu:
    trn_config: TrnConfig
    mac_body: bytes
    trn_subfield_sequences: Tuple[SubfieldSequence, ...]

    def __post_init__(self):
        object.__setattr__(self, 'mac_body', bytes(self.mac_body))
        _require(len(self.mac_body) <= 0xFFFF, 'mac_body longer than 65535 bytes')
        try:
            sequences = tuple(SubfieldSequence(s) for s in self.trn_subfield_sequences)
        except ValueError as e:
            raise InvariantViolation(f"Unknown TRN sequence identifier: {e}")
        object.__setattr__(self, 'trn_subfield_sequences', sequences)
        expected = self.trn_config.total_subfields
        if len(sequences) != expected:
            raise TrnConfigMismatch(
                f"{len(sequences)} TRN sequence entries, configuration needs "
                f"{self.trn_config.num_units} x ({self.trn_config.p_subfields} + "
                f"{self.trn_config.m_subfields}) = {expected}"
            )

    @classmethod
    def carrying(cls, frame_bytes: bytes, trn: TrnConfig,
                 sequence: SubfieldSequence = SubfieldSequence.GOLAY) -> 'EdmgPpdu':
        return cls(trn, frame_bytes, (sequence,) * trn.total_subfields)


def encode_ppdu(ppdu: EdmgPpdu) -> bytes:
    trn = ppdu.trn_config
    parts = [
        PPDU_TRN_HEADER.pack(trn.num_units, trn.p_subfields, trn.m_subfields, trn.awv_group_size),
        LENGTH_FIELD.pack(len(ppdu.mac_body)),
        ppdu.mac_body,
        LENGTH_FIELD.pack(len(ppdu.trn_subfield_sequences)),
        bytes(int(s) for s in ppdu.trn_subfield_sequences),
    ]
    return b''.join(parts)


def decode_ppdu(data: bytes) -> EdmgPpdu:
    data = bytes(data)
    offset = 0

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if len(data) - offset < size:
            raise TruncatedFrame(f"PPDU truncated reading {what}")
        chunk = data[offset:offset + size]
        offset += size
        return chunk

    trn = TrnConfig(*PPDU_TRN_HEADER.unpack(take(PPDU_TRN_HEADER.size, 'TRN configuration')))
    (body_length,) = LENGTH_FIELD.unpack(take(LENGTH_FIELD.size, 'MAC body length'))
    mac_body = take(body_length, 'MAC body')
    (count,) = LENGTH_FIELD.unpack(take(LENGTH_FIELD.size, 'TRN sequence count'))
    sequences = tuple(take(count, 'TRN sequences'))
    if offset != len(data):
        raise InvariantViolation(f"{len(data) - offset} trailing bytes after PPDU")
    return EdmgPpdu(trn, mac_body, sequences)
