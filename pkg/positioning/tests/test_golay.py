import numpy as np
import pytest

from positioning.services.exceptions import LengthMismatch, NotPowerOfTwo
from positioning.services.golay import (
    GolaySequencePair,
    complementary_sum,
    correlate_pair,
    detect_taps,
    estimate_cir,
    golay_pair,
)


def received(pair, channel):
    """Noiseless reception of Ga and Gb through a tap vector"""
    return np.convolve(pair.ga_array, channel), np.convolve(pair.gb_array, channel)


class TestGolayPair:
    def test_base_case(self):
        pair = golay_pair(2)
        assert pair.ga == (1, 1)
        assert pair.gb == (1, -1)

    def test_autocorrelations_of_the_base_case(self):
        pair = golay_pair(2)
        assert np.correlate(pair.ga_array, pair.ga_array, 'full').tolist() == [1, 2, 1]
        assert np.correlate(pair.gb_array, pair.gb_array, 'full').tolist() == [-1, 2, -1]
        assert complementary_sum(pair).tolist() == [0, 4, 0]

    @pytest.mark.parametrize('n', [2 ** k for k in range(1, 9)])
    def test_complementary_sum_is_an_exact_delta(self, n):
        total = complementary_sum(golay_pair(n))
        assert total.dtype.kind == 'i'
        expected = np.zeros(2 * n - 1, dtype=np.int64)
        expected[n - 1] = 2 * n
        assert np.array_equal(total, expected)
        assert np.array_equal(total, total[::-1])

    def test_length_eight(self):
        total = complementary_sum(golay_pair(8))
        assert total[7] == 16
        assert np.count_nonzero(total) == 1

    def test_non_complementary_pair(self):
        pair = GolaySequencePair((1, 1), (1, 1))
        assert complementary_sum(pair).tolist() == [2, 4, 2]
        assert not pair.is_complementary

    @pytest.mark.parametrize('n', [0, 1, 3, 6, 100])
    def test_not_power_of_two(self, n):
        with pytest.raises(NotPowerOfTwo):
            golay_pair(n)

    def test_halves_must_match(self):
        with pytest.raises(LengthMismatch):
            GolaySequencePair((1, 1), (1, -1, 1, 1))


class TestEstimateCir:
    def test_single_unit_tap(self):
        pair = golay_pair(128)
        rx_a, rx_b = received(pair, np.array([1.0 + 0j]))
        cir = estimate_cir(rx_a, rx_b, pair)
        assert len(cir) == 1
        delay, gain = cir.taps[0]
        assert delay == 0
        assert abs(gain - 1.0) < 1e-12

    def test_two_taps(self):
        pair = golay_pair(64)
        rx_a, rx_b = received(pair, np.array([1.0, 0, 0, 0.5 + 0.5j]))
        cir = estimate_cir(rx_a, rx_b, pair)
        assert [d for d, _ in cir.taps] == [0, 3]
        assert abs(cir.gain_at(3) - (0.5 + 0.5j)) / abs(0.5 + 0.5j) < 1e-9
        assert cir.length_samples == 4

    def test_unequal_lengths(self):
        pair = golay_pair(16)
        with pytest.raises(LengthMismatch):
            estimate_cir(np.ones(20), np.ones(21), pair)

    def test_shorter_than_the_sequence(self):
        with pytest.raises(LengthMismatch):
            correlate_pair(np.ones(8), np.ones(8), golay_pair(16))

    def test_random_noiseless_channels_are_recovered_exactly(self):
        rng = np.random.default_rng(11)
        pair = golay_pair(128)
        for _ in range(500):
            length = int(rng.integers(1, 40))
            delays = np.sort(rng.choice(length, size=int(rng.integers(1, min(length, 5) + 1)), replace=False))
            gains = rng.uniform(0.2, 1.0, delays.size) * np.exp(1j * rng.uniform(0, 2 * np.pi, delays.size))
            channel = np.zeros(length, dtype=complex)
            channel[delays] = gains
            cir = estimate_cir(*received(pair, channel), pair)
            assert [d for d, _ in cir.taps] == delays.tolist()
            for delay, gain in zip(delays, gains):
                assert abs(cir.gain_at(int(delay)) - gain) / abs(gain) < 1e-9

    def test_strongest_tap_at_20_db(self):
        rng = np.random.default_rng(12)
        pair = golay_pair(128)
        good = 0
        trials = 500
        for _ in range(trials):
            channel = np.zeros(12, dtype=complex)
            channel[0] = 1.0
            channel[int(rng.integers(2, 12))] = 0.5 * np.exp(1j * rng.uniform(0, 2 * np.pi))
            rx_a, rx_b = received(pair, channel)
            sigma = np.sqrt(10 ** (-20 / 10) / 2)
            rx_a = rx_a + sigma * (rng.standard_normal(rx_a.size) + 1j * rng.standard_normal(rx_a.size))
            rx_b = rx_b + sigma * (rng.standard_normal(rx_b.size) + 1j * rng.standard_normal(rx_b.size))
            cir = estimate_cir(rx_a, rx_b, pair)
            if abs(cir.gain_at(0) - 1.0) < 0.05:
                good += 1
        assert good >= 0.95 * trials

    def test_estimation_is_linear(self):
        pair = golay_pair(64)
        first = np.array([1.0, 0, 0.3j])
        second = np.array([0, 0.7, 0, 0, -0.4], dtype=complex)
        total = np.zeros(5, dtype=complex)
        total[:3] += first
        total += second
        summed = correlate_pair(*received(pair, total), pair)
        first_only = correlate_pair(*received(pair, first), pair)
        parts = correlate_pair(*received(pair, second), pair)
        parts[:first_only.size] += first_only
        assert np.allclose(summed, parts, atol=1e-9)


class TestDetectTaps:
    def test_relative_threshold(self):
        window = np.array([1.0, 0.04, 0.06])
        assert [d for d, _ in detect_taps(window, 0.0, 0.05, 8.0)] == [0, 2]

    def test_noise_threshold(self):
        window = np.array([1.0, 0.5])
        assert [d for d, _ in detect_taps(window, 0.1, 0.05, 8.0)] == [0]

    def test_silent_window(self):
        assert detect_taps(np.zeros(4), 0.0) == ()
