import logging

import numpy as np
import pytest
from scipy.signal import correlate

from positioning.services.exceptions import IntegrityFailure, NonceReuse, PasnAbort, TrnCapacityExceeded, ZeroLength
from positioning.services.frames import FtmFrame, LosLikelihood, TrnConfig, encode_ftm_frame
from positioning.services.golay import estimate_cir, golay_pair
from positioning.services.randomness import stream
from positioning.services.secure import (
    BAD_MAC,
    PARAM_MISMATCH,
    PasnParams,
    PasnPhase,
    ProtectedFrame,
    Role,
    SecureTrn,
    derive_secure_trn,
    hkdf_expand,
    hkdf_extract,
    map_pi2_bpsk,
    new_pasn_state,
    pasn_handshake,
    protect_ftm,
    secure_ftm_session,
    unprotect_ftm,
)
from positioning.services.session import FailureReason, IftmrParams, Phase, run_session
from positioning.tests.conftest import FIXTURES


def hkdf_vectors():
    for line in (FIXTURES / 'hkdf_sha256.txt').read_text(encoding='utf-8').splitlines():
        if not line.strip() or line.startswith('#'):
            continue
        name, ikm, salt, info, length, prk, okm = line.split()
        ikm, salt, info, prk, okm = (b'' if v == '-' else bytes.fromhex(v) for v in (ikm, salt, info, prk, okm))
        yield pytest.param(ikm, salt, info, int(length), prk, okm, id=name)


def handshake(seed=1, responder_seed=None, transport=None, responder_params=None, pmk=None):
    initiator = new_pasn_state(Role.INITIATOR, seed, preshared_pmk=pmk)
    responder = new_pasn_state(Role.RESPONDER, seed if responder_seed is None else responder_seed,
                               responder_params, preshared_pmk=pmk)
    return initiator, responder, pasn_handshake(initiator, responder, transport)


def flip_bit(data, bit):
    mutated = bytearray(data)
    mutated[bit // 8] ^= 1 << (bit % 8)
    return bytes(mutated)


def trn_key(seed):
    return stream(seed, 'trn-key').bytes(32), stream(seed, 'pmkid').bytes(16)


class TestHkdf:
    @pytest.mark.parametrize('ikm, salt, info, length, prk, okm', list(hkdf_vectors()))
    def test_reference_vectors(self, ikm, salt, info, length, prk, okm):
        assert hkdf_extract(salt, ikm) == prk
        assert hkdf_expand(prk, info, length) == okm


class TestPasn:
    def test_both_sides_derive_the_same_ptksa(self):
        for seed in range(1000):
            initiator, responder, (ptksa_i, ptksa_r) = handshake(seed)
            assert ptksa_i == ptksa_r
            assert len(ptksa_i) == 48
            assert initiator.phase is responder.phase is PasnPhase.ESTABLISHED

    def test_key_split(self):
        initiator, _, (ptksa, _) = handshake(3)
        assert initiator.kck == ptksa[:16]
        assert initiator.tk == ptksa[16:]

    def test_fresh_ephemeral_keys_give_fresh_ptksa(self):
        _, _, (first, _) = handshake(1)
        _, _, (second, _) = handshake(1, responder_seed=2)
        assert first != second

    def test_same_seed_same_ptksa(self):
        assert handshake(4)[2] == handshake(4)[2]

    def test_preshared_pmk(self):
        pmk = bytes(range(32))
        initiator, responder, (ptksa_i, ptksa_r) = handshake(5, pmk=pmk)
        assert ptksa_i == ptksa_r
        assert initiator.pmk == responder.pmk == pmk

    @pytest.mark.parametrize('target', ['msg2', 'msg3'])
    def test_every_bit_flip_aborts(self, target):
        length = len(self._capture(target))
        for bit in range(length * 8):
            transport = lambda name, data: flip_bit(data, bit) if name == target else data
            with pytest.raises(PasnAbort) as excinfo:
                handshake(6, transport=transport)
            assert excinfo.value.reason == BAD_MAC

    def _capture(self, target):
        captured = {}

        def transport(name, data):
            captured[name] = data
            return data

        handshake(6, transport=transport)
        return captured[target]

    def test_aborted_side_has_no_keys(self):
        transport = lambda name, data: flip_bit(data, 300) if name == 'msg2' else data
        initiator = new_pasn_state(Role.INITIATOR, 7)
        responder = new_pasn_state(Role.RESPONDER, 7)
        with pytest.raises(PasnAbort):
            pasn_handshake(initiator, responder, transport)
        assert initiator.phase is PasnPhase.ABORTED
        assert initiator.ptksa is None

    def test_parameter_mismatch(self):
        with pytest.raises(PasnAbort) as excinfo:
            handshake(8, responder_params=PasnParams(cipher='GCMP-128'))
        assert excinfo.value.reason == PARAM_MISMATCH


class TestSecureTrn:
    def test_derivation_is_deterministic(self):
        key, pmk_id = trn_key(1)
        bits = derive_secure_trn(key, pmk_id, 256)
        assert bits.size == 256
        assert set(np.unique(bits).tolist()) <= {0, 1}
        assert np.array_equal(bits, derive_secure_trn(key, pmk_id, 256))

    def test_truncation_keeps_the_prefix(self):
        key, pmk_id = trn_key(2)
        assert np.array_equal(derive_secure_trn(key, pmk_id, 10), derive_secure_trn(key, pmk_id, 16)[:10])

    def test_zero_length(self):
        key, pmk_id = trn_key(3)
        with pytest.raises(ZeroLength):
            derive_secure_trn(key, pmk_id, 0)

    def test_one_bit_key_change_decorrelates(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            key, pmk_id = rng.bytes(32), rng.bytes(16)
            other = flip_bit(key, int(rng.integers(0, 256)))
            first = map_pi2_bpsk(derive_secure_trn(key, pmk_id, 4096))
            second = map_pi2_bpsk(derive_secure_trn(other, pmk_id, 4096))
            peak = np.abs(correlate(first, second, mode='full', method='fft')).max() / 4096
            assert peak < 0.2

    def test_pi2_bpsk_mapping(self):
        assert np.array_equal(map_pi2_bpsk([0, 0, 0, 0]), [1, 1j, -1, -1j])
        assert np.array_equal(map_pi2_bpsk([1, 0, 1, 1]), [-1, 1j, 1, 1j])

    def test_subfields_and_ppdus_differ(self):
        trn = SecureTrn(*trn_key(4))
        assert not np.array_equal(trn.sequences(0)[0], trn.sequences(1)[0])
        assert not np.array_equal(trn.sequences(0)[0], trn.for_ppdu('next').sequences(0)[0])
        again = SecureTrn(*trn_key(4)).for_ppdu('x')
        assert np.array_equal(trn.for_ppdu('x').sequences(2)[1], again.sequences(2)[1])

    def test_capacity_follows_the_trn_field(self):
        trn = SecureTrn(*trn_key(5), trn=TrnConfig(num_units=1, p_subfields=0, m_subfields=4))
        assert trn.capacity_subfields == 4
        assert trn.symbols.size == 4 * 2 * trn.n
        with pytest.raises(TrnCapacityExceeded):
            trn.sequences(4)

    def test_ppdu_trn_field_sizes_the_key_stream(self):
        sweep = TrnConfig(num_units=7, p_subfields=0, m_subfields=4)
        trn = SecureTrn(*trn_key(5)).for_ppdu('fine', sweep)
        assert trn.capacity_subfields == 28
        assert trn.for_ppdu('next').capacity_subfields == 28
        assert SecureTrn(*trn_key(5)).for_ppdu('fine').capacity_subfields == 64
        wide = SecureTrn(*trn_key(5)).for_ppdu('fine', TrnConfig(num_units=20, p_subfields=0, m_subfields=4))
        assert np.array_equal(trn.sequences(27)[1], wide.sequences(27)[1])

    def test_key_stream_beyond_hkdf_output(self):
        secret_key, pmk_id = trn_key(8)
        with pytest.raises(TrnCapacityExceeded):
            derive_secure_trn(secret_key, pmk_id, 255 * 32 * 8 + 1)
        assert derive_secure_trn(secret_key, pmk_id, 255 * 32 * 8).size == 255 * 32 * 8

    def test_legitimate_receiver_recovers_the_channel(self):
        trn = SecureTrn(*trn_key(6))
        channel = np.array([1.0, 0, 0, 0.5j])
        seq_a, seq_b = trn.sequences(0)
        pdp = trn.estimate(0, np.convolve(seq_a, channel), np.convolve(seq_b, channel))
        assert [t.delay_sample_index for t in pdp.taps] == [0, 3]
        assert pdp.tap_at(3).q_component == pytest.approx(0.5)

    def test_eavesdropper_sees_no_taps(self):
        pair = golay_pair(128)
        channel = np.array([1.0, 0, 0, 0.5j])
        for seed in range(100):
            seq_a, seq_b = SecureTrn(*trn_key(seed)).sequences(0)
            cir = estimate_cir(np.convolve(seq_a, channel), np.convolve(seq_b, channel), pair)
            assert len(cir) == 0

    def test_jammed_subfield_is_discarded(self, caplog):
        trn = SecureTrn(*trn_key(7))
        seq_a, seq_b = trn.sequences(0)
        rng = np.random.default_rng(0)
        jam_a = 1.4 * np.exp(1j * rng.uniform(0, 2 * np.pi, seq_a.size))
        jam_b = 1.4 * np.exp(1j * rng.uniform(0, 2 * np.pi, seq_b.size))
        with caplog.at_level(logging.WARNING):
            assert trn.estimate(0, seq_a + jam_a, seq_b + jam_b) is None
        assert 'discarded' in caplog.text


class TestProtectedFrames:
    FRAME = FtmFrame(3, 2, 1000, 2000, 5, 6, (LosLikelihood(900),))

    @pytest.fixture
    def ptksa(self):
        return handshake(9)[2][0]

    def test_round_trip(self, ptksa):
        protected = protect_ftm(self.FRAME, ptksa, bytes(12))
        assert unprotect_ftm(ProtectedFrame.from_bytes(protected.to_bytes()), ptksa) == self.FRAME

    def test_tampered_ciphertext(self, ptksa):
        protected = protect_ftm(self.FRAME, ptksa, bytes(12))
        for bit in range(0, len(protected.ciphertext) * 8, 7):
            tampered = ProtectedFrame(protected.nonce, flip_bit(protected.ciphertext, bit))
            with pytest.raises(IntegrityFailure):
                unprotect_ftm(tampered, ptksa)

    def test_wrong_key(self, ptksa):
        protected = protect_ftm(self.FRAME, ptksa, bytes(12))
        with pytest.raises(IntegrityFailure):
            unprotect_ftm(protected, handshake(10)[2][0])

    def test_nonce_reuse(self, ptksa):
        used = set()
        protect_ftm(self.FRAME, ptksa, bytes(12), used)
        with pytest.raises(NonceReuse):
            protect_ftm(self.FRAME, ptksa, bytes(12), used)

    def test_replay(self, ptksa):
        seen = set()
        protected = protect_ftm(self.FRAME, ptksa, (1).to_bytes(12, 'big'))
        unprotect_ftm(protected, ptksa, seen)
        with pytest.raises(NonceReuse):
            unprotect_ftm(protected, ptksa, seen)

    def test_short_inputs(self, ptksa):
        with pytest.raises(IntegrityFailure):
            ProtectedFrame.from_bytes(bytes(20))
        with pytest.raises(IntegrityFailure):
            protect_ftm(self.FRAME, ptksa[:32], bytes(12))
        with pytest.raises(ValueError):
            protect_ftm(self.FRAME, ptksa, bytes(8))


class TestSecureSession:
    def test_distance_matches_the_plain_session(self, link):
        for seed in range(3):
            secure = secure_ftm_session(link, seed)
            plain = run_session(link, IftmrParams(), seed)
            assert secure.is_done and plain.is_done
            assert secure.distance_m == pytest.approx(plain.distance_m, abs=1e-6)
            assert secure.distance_m == pytest.approx(2.0, abs=1e-6)

    def test_transcript_starts_with_pasn(self, link):
        state = secure_ftm_session(link, 1)
        assert [e.label for e in state.transcript[:3]] == ['PASN msg1', 'PASN msg2', 'PASN msg3']
        assert state.params.secure

    def test_frames_on_the_air_are_encrypted(self, link):
        captured = []

        def on_air(sender, index, data):
            captured.append(data)
            return data

        state = secure_ftm_session(link, 2, on_air=on_air)
        response = next(e for e in state.transcript if e.label == 'FTM burst 0 exchange 0')
        # counter nonce: the request used 1
        assert captured[1][:12] == (2).to_bytes(12, 'big')
        plain = encode_ftm_frame(response.frame)
        assert len(captured[1]) == 12 + len(plain) + 16
        assert plain not in captured[1]

    def test_jammed_subfield_is_discarded_and_session_completes(self, link, caplog):
        with caplog.at_level(logging.WARNING):
            state = secure_ftm_session(link, 3, jammed_subfields={9})
        assert state.is_done
        assert state.distance_m == pytest.approx(2.0, abs=1e-6)
        assert 'discarded' in caplog.text

    def test_tampered_frame_fails_the_session(self, link):
        def on_air(sender, index, data):
            if index == 1:
                return data[:-1] + bytes([data[-1] ^ 0x01])
            return data

        state = secure_ftm_session(link, 4, on_air=on_air)
        assert state.phase is Phase.FAILED
        assert state.failure is FailureReason.SECURITY_VIOLATION

    def test_tampered_pasn_fails_the_session(self, link):
        transport = lambda name, data: flip_bit(data, 0) if name == 'msg2' else data
        state = secure_ftm_session(link, 5, pasn_transport=transport)
        assert state.failure is FailureReason.SECURITY_VIOLATION
        assert not state.exchanges
