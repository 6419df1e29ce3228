"""
Golay complementary pairs and correlate-and-sum channel estimation.
"""

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional, Tuple

import numpy as np
from django.conf import settings

from .exceptions import LengthMismatch, NotPowerOfTwo


def _is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 2 and (int(n) & (int(n) - 1)) == 0


@dataclass(frozen=True)
class GolaySequencePair:
    """
    Two +/-1 sequences of power-of-two length N.

    Pairs built by ``golay_pair`` are complementary; ``is_complementary``
    checks the delta property for pairs built by hand.
    """
    ga: Tuple[int, ...]
    gb: Tuple[int, ...]

    def __post_init__(self):
        ga = tuple(int(v) for v in self.ga)
        gb = tuple(int(v) for v in self.gb)
        if len(ga) != len(gb):
            raise LengthMismatch(f"Golay halves differ in length: {len(ga)} != {len(gb)}")
        if not _is_power_of_two(len(ga)):
            raise NotPowerOfTwo(f"Golay length {len(ga)} is not a power of two >= 2")
        if any(v not in (1, -1) for v in ga + gb):
            raise ValueError("Golay sequences must be +/-1 valued")
        object.__setattr__(self, 'ga', ga)
        object.__setattr__(self, 'gb', gb)

    @property
    def n(self) -> int:
        return len(self.ga)

    @cached_property
    def ga_array(self) -> np.ndarray:
        return np.array(self.ga, dtype=np.int64)

    @cached_property
    def gb_array(self) -> np.ndarray:
        return np.array(self.gb, dtype=np.int64)

    @property
    def is_complementary(self) -> bool:
        expected = np.zeros(2 * self.n - 1, dtype=np.int64)
        expected[self.n - 1] = 2 * self.n
        return bool(np.array_equal(complementary_sum(self), expected))


@dataclass(frozen=True)
class Cir:
    taps: Tuple[Tuple[int, complex], ...]
    length_samples: int
    # median |correlator output| over all lags, normalized like the taps
    noise_floor: float = field(default=0.0, compare=False)

    def __post_init__(self):
        previous = -1
        for delay, _ in self.taps:
            if delay <= previous or delay >= self.length_samples:
                raise ValueError(f"CIR tap delay {delay} out of order or beyond {self.length_samples}")
            previous = delay

    def gain_at(self, delay: int) -> complex:
        for d, gain in self.taps:
            if d == delay:
                return gain
        return 0j

    def __len__(self):
        return len(self.taps)


@lru_cache(maxsize=None)
def golay_pair(n: int) -> GolaySequencePair:
    """Recursive doubling: Ga' = Ga | Gb, Gb' = Ga | -Gb, from ([1, 1], [1, -1])"""
    if not _is_power_of_two(n):
        raise NotPowerOfTwo(f"Golay length must be a power of two >= 2, got {n!r}")
    ga = np.array([1, 1], dtype=np.int64)
    gb = np.array([1, -1], dtype=np.int64)
    while len(ga) < n:
        ga, gb = np.concatenate([ga, gb]), np.concatenate([ga, -gb])
    return GolaySequencePair(tuple(ga.tolist()), tuple(gb.tolist()))


def complementary_sum(pair: GolaySequencePair) -> np.ndarray:
    """Sum of the aperiodic autocorrelations of Ga and Gb over lags -(N-1)..N-1"""
    ga, gb = pair.ga_array, pair.gb_array
    return np.correlate(ga, ga, mode='full') + np.correlate(gb, gb, mode='full')


def correlate_pair(rx_ga, rx_gb, pair: GolaySequencePair) -> np.ndarray:
    """
    Correlator output over every lag, normalized by 2N.

    Index i of the result is lag i - (N - 1); lag 0 of a noiseless
    reception through a unit tap is exactly 1.
    """
    rx_ga = np.asarray(rx_ga, dtype=complex)
    rx_gb = np.asarray(rx_gb, dtype=complex)
    if rx_ga.shape != rx_gb.shape:
        raise LengthMismatch(f"Received Ga/Gb lengths differ: {rx_ga.size} != {rx_gb.size}")
    if rx_ga.size < pair.n:
        raise LengthMismatch(f"Received vectors ({rx_ga.size}) shorter than N={pair.n}")
    summed = np.correlate(rx_ga, pair.ga_array, mode='full') + np.correlate(rx_gb, pair.gb_array, mode='full')
    return summed / (2 * pair.n)


def detect_taps(window: np.ndarray, noise_floor: float,
                relative_threshold: Optional[float] = None,
                noise_factor: Optional[float] = None) -> Tuple[Tuple[int, complex], ...]:
    """Taps of a lag-0-aligned estimate that pass the detection rule"""
    if relative_threshold is None:
        relative_threshold = getattr(settings, 'FTM_TAP_RELATIVE_THRESHOLD', 0.05)
    if noise_factor is None:
        noise_factor = getattr(settings, 'FTM_TAP_NOISE_FACTOR', 8.0)

    magnitudes = np.abs(window)
    peak = float(magnitudes.max()) if magnitudes.size else 0.0
    if peak == 0.0:
        return ()
    threshold = max(relative_threshold * peak, noise_factor * noise_floor)
    detected = np.flatnonzero((magnitudes >= threshold) & (magnitudes > 0.0))
    return tuple((int(k), complex(window[k])) for k in detected)


def estimate_cir(rx_ga, rx_gb, pair: GolaySequencePair,
                 relative_threshold: Optional[float] = None,
                 noise_factor: Optional[float] = None) -> Cir:
    """
    Estimate the channel impulse response from received Ga and Gb vectors.

    Taps are read at lags 0..len(rx)-N. A tap is kept when its magnitude is at
    least ``relative_threshold`` of the strongest one and at least
    ``noise_factor`` times the median correlator magnitude.
    """
    output = correlate_pair(rx_ga, rx_gb, pair)
    noise_floor = float(np.median(np.abs(output)))
    window = output[pair.n - 1:len(np.asarray(rx_ga))]
    taps = detect_taps(window, noise_floor, relative_threshold, noise_factor)
    return Cir(taps=taps, length_samples=int(window.size), noise_floor=noise_floor)
