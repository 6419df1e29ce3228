"""
Secure FTM: PASN pre-association handshake, PTKSA derivation, protected FTM
frames and secure TRN sequences.

Cryptographic primitives come from ``cryptography``: X25519 for the ephemeral
key agreement, HKDF/HMAC-SHA-256 for key derivation, AES-CTR + truncated HMAC
(MAC-then-encrypt) for the protected PASN messages 2 and 3, and AES-GCM with
the TK for protected FTM frames.

Without a pre-shared PMK the handshake runs in non-RSNA mode: the PMK comes
from the unauthenticated ephemeral exchange alone.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Callable, List, Optional, Set, Tuple

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import constant_time, hashes, hmac
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF, HKDFExpand
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat
from django.conf import settings
from scipy.linalg import convolution_matrix

from .channel import Pdp, cir_to_pdp
from .exceptions import IntegrityFailure, NonceReuse, PasnAbort, TrnCapacityExceeded, ZeroLength
from .frames import FtmFrame, SubfieldSequence, TrnConfig, decode_ftm_frame, encode_ftm_frame
from .golay import Cir, detect_taps
from .randomness import stream
from .session import (
    FailureReason,
    FrameGuard,
    FtmLink,
    IftmrParams,
    Phase,
    SessionState,
    TranscriptEntry,
    run_session,
)

logger = logging.getLogger(__name__)

SECURE_TRN_LABEL = b"EDMG Secure RTT"
# subfields of a secure TRN whose PPDU has not been given a TRN field
DEFAULT_TRN_SUBFIELDS = 64
# HKDF-SHA-256 expands to at most 255 blocks of 32 bytes
HKDF_MAX_BITS = 255 * 32 * 8
PFTM_AAD = b"PFTM"
PTKSA_LENGTH = 48
KCK_LENGTH = 16
MAC_LENGTH = 16
NONCE_LENGTH = 12
BAD_MAC = 'BadMac'
PARAM_MISMATCH = 'ParamMismatch'


# HKDF core

def hkdf_extract(salt: bytes, ikm: bytes) -> bytes:
    """PRK = HMAC-SHA-256(salt, IKM); an empty salt acts as HashLen zero bytes"""
    h = hmac.HMAC(salt or bytes(32), hashes.SHA256())
    h.update(ikm)
    return h.finalize()


def hkdf_expand(prk: bytes, info: bytes, length: int) -> bytes:
    return HKDFExpand(algorithm=hashes.SHA256(), length=length, info=info).derive(prk)


def _hmac(key: bytes, *parts: bytes) -> bytes:
    h = hmac.HMAC(key, hashes.SHA256())
    for part in parts:
        h.update(part)
    return h.finalize()


def _sha256(*parts: bytes) -> bytes:
    digest = hashes.Hash(hashes.SHA256())
    for part in parts:
        digest.update(part)
    return digest.finalize()


# PASN

class Role(Enum):
    INITIATOR = 'Initiator'
    RESPONDER = 'Responder'


class PasnPhase(Enum):
    AWAIT_MSG1 = 'AwaitMsg1'
    AWAIT_MSG2 = 'AwaitMsg2'
    AWAIT_MSG3 = 'AwaitMsg3'
    ESTABLISHED = 'Established'
    ABORTED = 'Aborted'


@dataclass(frozen=True)
class PasnParams:
    group: str = 'x25519'
    akm: str = 'PASN'
    cipher: str = 'GCMP-256'
    ftm: IftmrParams = field(default_factory=lambda: IftmrParams(secure=True))

    def to_bytes(self) -> bytes:
        f = self.ftm
        text = (f"{self.group}|{self.akm}|{self.cipher}|bursts={f.burst_count}|dur={f.session_duration_ms}"
                f"|bw={f.bandwidth_ghz:.2f}|secure={int(f.secure)}|i2r={int(f.request_i2r_aod)}"
                f"|r2i={int(f.request_r2i_aod)}|fp={int(f.first_path)}")
        return text.encode('ascii')


@dataclass
class PasnState:
    role: Role
    ephemeral_private: X25519PrivateKey
    negotiated_params: PasnParams = field(default_factory=PasnParams)
    preshared_pmk: Optional[bytes] = None
    phase: PasnPhase = PasnPhase.AWAIT_MSG1
    peer_public: Optional[bytes] = None
    pmk: Optional[bytes] = None
    pmk_id: Optional[bytes] = None
    handshake_keys: Optional[Tuple[bytes, bytes]] = field(default=None, repr=False)
    _ptksa: Optional[bytes] = field(default=None, repr=False)

    @cached_property
    def ephemeral_public(self) -> bytes:
        return self.ephemeral_private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)

    @property
    def ptksa(self) -> Optional[bytes]:
        return self._ptksa if self.phase is PasnPhase.ESTABLISHED else None

    @property
    def kck(self) -> Optional[bytes]:
        return self.ptksa[:KCK_LENGTH] if self.ptksa else None

    @property
    def tk(self) -> Optional[bytes]:
        return self.ptksa[KCK_LENGTH:] if self.ptksa else None

    def abort(self, reason: str, detail: str = '') -> None:
        self.phase = PasnPhase.ABORTED
        self._ptksa = None
        logger.warning(f"PASN {self.role.value} aborted: {reason} {detail}".rstrip())
        raise PasnAbort(reason, detail)


def new_pasn_state(role: Role, seed: int, params: Optional[PasnParams] = None,
                   preshared_pmk: Optional[bytes] = None) -> PasnState:
    """Fresh state with an ephemeral key drawn from the seeded stream"""
    private_bytes = stream(seed, 'pasn', role.value).bytes(32)
    state = PasnState(role, X25519PrivateKey.from_private_bytes(private_bytes),
                      params or PasnParams(), preshared_pmk)
    if role is Role.INITIATOR:
        state.phase = PasnPhase.AWAIT_MSG2
    return state


def _ordered_publics(state: PasnState) -> Tuple[bytes, bytes]:
    if state.role is Role.INITIATOR:
        return state.ephemeral_public, state.peer_public
    return state.peer_public, state.ephemeral_public


def _agree(state: PasnState) -> None:
    """Shared secret -> handshake keys, PMK and PMKID"""
    shared = state.ephemeral_private.exchange(X25519PublicKey.from_public_bytes(state.peer_public))
    public_i, public_r = _ordered_publics(state)
    keys = HKDF(algorithm=hashes.SHA256(), length=64, salt=public_i + public_r,
                info=b"PASN handshake").derive(shared)
    state.handshake_keys = (keys[:32], keys[32:])
    if state.preshared_pmk is not None:
        state.pmk = state.preshared_pmk
    else:
        state.pmk = HKDF(algorithm=hashes.SHA256(), length=32, salt=b"PASN PMK",
                         info=public_i + public_r).derive(shared)
    state.pmk_id = _sha256(state.pmk, public_i, public_r)[:16]


def derive_ptksa(pmk: bytes, params: PasnParams, public_i: bytes, public_r: bytes) -> bytes:
    """48-byte PTKSA: KCK (16) followed by TK (32)"""
    return hkdf_expand(pmk, b"PASN PTK" + params.to_bytes() + public_i + public_r, PTKSA_LENGTH)


def _seal(state: PasnState, message_id: int, clear: bytes, body: bytes) -> bytes:
    mac_key, enc_key = state.handshake_keys
    tag = _hmac(mac_key, bytes([message_id]), clear, body)[:MAC_LENGTH]
    nonce = bytes([message_id]) + bytes(15)
    encryptor = Cipher(algorithms.AES(enc_key), modes.CTR(nonce)).encryptor()
    return clear + encryptor.update(body + tag) + encryptor.finalize()


def _unseal(state: PasnState, message_id: int, data: bytes, clear_length: int) -> bytes:
    mac_key, enc_key = state.handshake_keys
    clear, encrypted = data[:clear_length], data[clear_length:]
    if len(encrypted) < MAC_LENGTH:
        state.abort(BAD_MAC, f"message {message_id} too short")
    nonce = bytes([message_id]) + bytes(15)
    decryptor = Cipher(algorithms.AES(enc_key), modes.CTR(nonce)).decryptor()
    plain = decryptor.update(encrypted) + decryptor.finalize()
    body, tag = plain[:-MAC_LENGTH], plain[-MAC_LENGTH:]
    expected = _hmac(mac_key, bytes([message_id]), clear, body)[:MAC_LENGTH]
    if not constant_time.bytes_eq(tag, expected):
        state.abort(BAD_MAC, f"message {message_id} integrity check failed")
    return body


def pasn_msg1(initiator: PasnState) -> bytes:
    """Initiator ephemeral key and proposed parameters, in the clear"""
    return initiator.ephemeral_public + initiator.negotiated_params.to_bytes()


def pasn_msg2(responder: PasnState, msg1: bytes) -> bytes:
    if responder.phase is not PasnPhase.AWAIT_MSG1:
        responder.abort(PARAM_MISMATCH, f"msg1 received in {responder.phase.value}")
    responder.peer_public = msg1[:32]
    proposed = msg1[32:]
    _agree(responder)
    # the responder echoes what it chose; its own parameter set wins
    chosen = responder.negotiated_params.to_bytes()
    if chosen != proposed:
        logger.info("PASN responder chose parameters different from the proposal")
    responder.phase = PasnPhase.AWAIT_MSG3
    return _seal(responder, 2, responder.ephemeral_public, chosen)


def pasn_msg3(initiator: PasnState, msg2: bytes) -> bytes:
    if initiator.phase is not PasnPhase.AWAIT_MSG2:
        initiator.abort(PARAM_MISMATCH, f"msg2 received in {initiator.phase.value}")
    initiator.peer_public = msg2[:32]
    _agree(initiator)
    chosen = _unseal(initiator, 2, msg2, 32)
    proposed = initiator.negotiated_params.to_bytes()
    if chosen != proposed:
        initiator.abort(PARAM_MISMATCH, 'responder chose different parameters')
    initiator._ptksa = derive_ptksa(initiator.pmk, initiator.negotiated_params, *_ordered_publics(initiator))
    initiator.phase = PasnPhase.ESTABLISHED
    return _seal(initiator, 3, b'', proposed + b"|ACK")


def pasn_finish(responder: PasnState, msg3: bytes) -> None:
    if responder.phase is not PasnPhase.AWAIT_MSG3:
        responder.abort(PARAM_MISMATCH, f"msg3 received in {responder.phase.value}")
    confirmed = _unseal(responder, 3, msg3, 0)
    if confirmed != responder.negotiated_params.to_bytes() + b"|ACK":
        responder.abort(PARAM_MISMATCH, 'initiator confirmed different parameters')
    responder._ptksa = derive_ptksa(responder.pmk, responder.negotiated_params, *_ordered_publics(responder))
    responder.phase = PasnPhase.ESTABLISHED


Transport = Callable[[str, bytes], bytes]


def pasn_handshake(initiator: PasnState, responder: PasnState,
                   transport: Optional[Transport] = None) -> Tuple[bytes, bytes]:
    """
    Run the three-message exchange and return (ptksa_i, ptksa_r).

    ``transport(name, data)`` delivers each message and may alter it.
    """
    deliver = transport or (lambda name, data: data)
    msg2 = deliver('msg2', pasn_msg2(responder, deliver('msg1', pasn_msg1(initiator))))
    msg3 = deliver('msg3', pasn_msg3(initiator, msg2))
    pasn_finish(responder, msg3)
    logger.info(f"PASN established, PMKID {initiator.pmk_id.hex()}")
    return initiator.ptksa, responder.ptksa


# Secure TRN

def derive_secure_trn(secret_key: bytes, pmk_id: bytes, length_bits: int) -> np.ndarray:
    """
    Pseudorandom TRN bits: PRK = HMAC-SHA-256(pmk_id, secret_key), expanded
    with HKDF under the label "EDMG Secure RTT" and truncated to length_bits.
    """
    if length_bits <= 0:
        raise ZeroLength(f"Secure TRN length must be positive, got {length_bits}")
    if length_bits > HKDF_MAX_BITS:
        raise TrnCapacityExceeded(f"Secure TRN of {length_bits} bits exceeds the {HKDF_MAX_BITS}-bit HKDF output")
    prk = hkdf_extract(pmk_id, secret_key)
    okm = hkdf_expand(prk, SECURE_TRN_LABEL, -(-length_bits // 8))
    return np.unpackbits(np.frombuffer(okm, dtype=np.uint8))[:length_bits]


_PI2_ROTATION = np.array([1, 1j, -1, -1j])


def map_pi2_bpsk(bits) -> np.ndarray:
    """symbol_k = (1 - 2 bit_k) j^k"""
    bits = np.asarray(bits, dtype=np.int64)
    return (1 - 2 * bits) * _PI2_ROTATION[np.arange(bits.size) % 4]


class SecureTrn:
    """
    TRN whose subfields carry pseudorandom pi/2-BPSK halves of N symbols in
    place of Ga and Gb. Each PPDU derives its own bits from the TRN key and
    the PMKID; the legitimate receiver estimates the channel by least squares
    against the known symbols and discards subfields whose fit leaves more
    residual energy than its noise floor explains.
    """

    sequence_id = SubfieldSequence.SECURE

    def __init__(self, secret_key: bytes, pmk_id: bytes, n: Optional[int] = None,
                 trn: Optional[TrnConfig] = None, label: bytes = b'',
                 residual_threshold: Optional[float] = None):
        self.secret_key = secret_key
        self.pmk_id = pmk_id
        self.n = n or getattr(settings, 'FTM_GOLAY_LENGTH', 128)
        self.trn = trn
        self.label = label
        if residual_threshold is None:
            residual_threshold = getattr(settings, 'FTM_SECURE_RESIDUAL_THRESHOLD', 0.2)
        self.residual_threshold = residual_threshold

    @property
    def capacity_subfields(self) -> int:
        return self.trn.total_subfields if self.trn is not None else DEFAULT_TRN_SUBFIELDS

    def for_ppdu(self, label, trn: Optional[TrnConfig] = None) -> 'SecureTrn':
        """Sequences of one PPDU; ``trn`` sizes the key stream to its TRN field"""
        return SecureTrn(self.secret_key, self.pmk_id, self.n, trn or self.trn,
                         self.label + b'/' + str(label).encode('utf-8'), self.residual_threshold)

    @cached_property
    def symbols(self) -> np.ndarray:
        key = _hmac(self.secret_key, b"TRN PPDU", self.label)
        bits = derive_secure_trn(key, self.pmk_id, self.capacity_subfields * 2 * self.n)
        return map_pi2_bpsk(bits)

    def sequences(self, subfield_index: int):
        if not 0 <= subfield_index < self.capacity_subfields:
            raise TrnCapacityExceeded(f"Secure TRN holds {self.capacity_subfields} subfields, "
                                      f"subfield {subfield_index} requested")
        start = subfield_index * 2 * self.n
        return self.symbols[start:start + self.n], self.symbols[start + self.n:start + 2 * self.n]

    def estimate(self, subfield_index: int, rx_a, rx_b, noise_variance: float = 0.0) -> Optional[Pdp]:
        seq_a, seq_b = self.sequences(subfield_index)
        rx_a = np.asarray(rx_a, dtype=complex)
        rx_b = np.asarray(rx_b, dtype=complex)
        taps = rx_a.size - self.n + 1
        design = np.vstack([convolution_matrix(seq_a, taps, mode='full'),
                            convolution_matrix(seq_b, taps, mode='full')])
        received = np.concatenate([rx_a, rx_b])
        h, *_ = np.linalg.lstsq(design, received, rcond=None)

        energy = float(np.vdot(received, received).real)
        if energy == 0.0:
            return Pdp()
        residual = float(np.sum(np.abs(received - design @ h) ** 2))
        expected = noise_variance * (received.size - taps)
        excess = max(0.0, residual - expected) / energy
        if excess > self.residual_threshold:
            logger.warning(f"Secure TRN subfield residual {excess:.2f} above {self.residual_threshold}; discarded")
            return None

        floor = float(np.sqrt(noise_variance / (2 * self.n)))
        cir = Cir(detect_taps(h, floor), int(taps), floor)
        return cir_to_pdp(cir)


# Protected FTM frames

@dataclass(frozen=True)
class ProtectedFrame:
    nonce: bytes
    ciphertext: bytes  # includes the 16-byte tag

    def to_bytes(self) -> bytes:
        return self.nonce + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> 'ProtectedFrame':
        if len(data) < NONCE_LENGTH + 16:
            raise IntegrityFailure(f"Protected frame of {len(data)} bytes is too short")
        return cls(bytes(data[:NONCE_LENGTH]), bytes(data[NONCE_LENGTH:]))


def _tk(ptksa: bytes) -> bytes:
    if ptksa is None or len(ptksa) != PTKSA_LENGTH:
        raise IntegrityFailure("An established 48-byte PTKSA is required")
    return ptksa[KCK_LENGTH:]


def protect_ftm(frame: FtmFrame, ptksa: bytes, nonce: bytes,
                used_nonces: Optional[Set[bytes]] = None) -> ProtectedFrame:
    """AES-GCM over the encoded frame with the TK; nonces must never repeat"""
    if len(nonce) != NONCE_LENGTH:
        raise ValueError(f"PFTM nonce must be {NONCE_LENGTH} bytes")
    if used_nonces is not None:
        if nonce in used_nonces:
            raise NonceReuse(f"Nonce {nonce.hex()} already used with this key")
        used_nonces.add(nonce)
    ciphertext = AESGCM(_tk(ptksa)).encrypt(nonce, encode_ftm_frame(frame), PFTM_AAD)
    return ProtectedFrame(nonce, ciphertext)


def unprotect_ftm(protected: ProtectedFrame, ptksa: bytes,
                  seen_nonces: Optional[Set[bytes]] = None) -> FtmFrame:
    if seen_nonces is not None and protected.nonce in seen_nonces:
        raise NonceReuse(f"Replayed nonce {protected.nonce.hex()}")
    try:
        plain = AESGCM(_tk(ptksa)).decrypt(protected.nonce, protected.ciphertext, PFTM_AAD)
    except InvalidTag:
        raise IntegrityFailure("PFTM authentication failed")
    if seen_nonces is not None:
        seen_nonces.add(protected.nonce)
    return decode_ftm_frame(plain)


class SecureFrameGuard(FrameGuard):
    """PFTM protection for every frame of a session, with counter nonces"""

    def __init__(self, ptksa: bytes):
        self.ptksa = ptksa
        self.counter = 0
        self.used: Set[bytes] = set()
        self.seen: Set[bytes] = set()

    def seal(self, frame: FtmFrame) -> bytes:
        self.counter += 1
        nonce = self.counter.to_bytes(NONCE_LENGTH, 'big')
        return protect_ftm(frame, self.ptksa, nonce, self.used).to_bytes()

    def open(self, data: bytes) -> FtmFrame:
        return unprotect_ftm(ProtectedFrame.from_bytes(data), self.ptksa, self.seen)


# Secure session

def secure_ftm_session(link: FtmLink, seed: int = 0, params: Optional[IftmrParams] = None,
                       preshared_pmk: Optional[bytes] = None,
                       jammed_subfields=(), jam_power_db: float = 3.0,
                       pasn_transport: Optional[Transport] = None,
                       **session_options) -> SessionState:
    """
    PASN, then a measurement session whose frames are PFTM-protected and
    whose TRN subfields carry secure sequences keyed by the TK and PMKID.
    """
    params = replace(params or IftmrParams(), secure=True)
    pasn_params = PasnParams(ftm=params)
    initiator = new_pasn_state(Role.INITIATOR, seed, pasn_params, preshared_pmk)
    responder = new_pasn_state(Role.RESPONDER, seed, pasn_params, preshared_pmk)

    handshake: List[TranscriptEntry] = []

    def transport(name: str, data: bytes) -> bytes:
        if pasn_transport is not None:
            data = pasn_transport(name, data)
        sender, receiver = ('ISTA', 'RSTA') if name in ('msg1', 'msg3') else ('RSTA', 'ISTA')
        handshake.append(TranscriptEntry(sender, receiver, Phase.IDLE, f"PASN {name}", data))
        return data

    try:
        ptksa, _ = pasn_handshake(initiator, responder, transport)
    except PasnAbort as e:
        state = SessionState(params=params, transcript=handshake)
        return state.fail(FailureReason.SECURITY_VIOLATION, str(e))

    if jammed_subfields:
        link = replace(link, jammed_subfields=frozenset(jammed_subfields), jam_power_db=jam_power_db)
    waveform = SecureTrn(initiator.tk, initiator.pmk_id)
    state = run_session(link, params, seed, waveform=waveform, guard=SecureFrameGuard(ptksa), **session_options)
    state.transcript[:0] = handshake
    return state
