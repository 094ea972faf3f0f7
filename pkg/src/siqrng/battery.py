"""Statistical randomness test battery (subset of the standard suite).

Seven tests are implemented: Frequency, BlockFrequency, CumulativeSums
(forward and backward), Runs, LongestRun, ApproximateEntropy, and Serial.
The remaining items of the usual fifteen-test battery are reported as not
implemented.

Battery pass criteria per test: the proportion of sequences with
P >= alpha must reach (1 - alpha) - 3 * sqrt(alpha * (1 - alpha) / count),
and the P-values must look uniform (ten-bin chi-square P-value_T of at
least 1e-4).  Where a test yields several P-values per sequence the
smallest proportion / uniformity across sub-statistics is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy.special import erfc, gammaincc, ndtr

from .bitops import BitsLike, as_bits
from .errors import ConfigError, InsufficientTestDataError

UNIFORMITY_MIN = 1e-4

IMPLEMENTED_TESTS = (
    "Frequency",
    "BlockFrequency",
    "CumulativeSums",
    "Runs",
    "LongestRun",
    "ApproximateEntropy",
    "Serial",
)
NOT_IMPLEMENTED_TESTS = (
    "Rank",
    "FFT",
    "NonOverlappingTemplate",
    "OverlappingTemplate",
    "Universal",
    "RandomExcursions",
    "RandomExcursionsVariant",
    "LinearComplexity",
)


@dataclass(frozen=True)
class BatteryConfig:
    sequence_count: int = 100
    sequence_length: int = 1_000_000
    significance: float = 0.01
    block_frequency_block: int = 128
    approximate_entropy_block: int = 2
    serial_block: int = 3

    def __post_init__(self) -> None:
        if self.sequence_count < 1:
            raise ConfigError("sequence_count must be positive")
        if self.sequence_length < 100:
            raise ConfigError("sequence_length must be at least 100 bits")
        if not 0.0 < self.significance < 1.0:
            raise ConfigError("significance must lie in (0, 1)")

    @property
    def proportion_threshold(self) -> float:
        p_hat = 1.0 - self.significance
        return p_hat - 3.0 * math.sqrt(
            p_hat * self.significance / self.sequence_count
        )


def _require_length(bits: np.ndarray, minimum: int, test: str) -> None:
    if bits.size < minimum:
        raise InsufficientTestDataError(
            f"{test} needs at least {minimum} bits, got {bits.size}"
        )


def frequency_monobit(bits: BitsLike) -> float:
    """Fraction-of-ones test; P from the normalized absolute partial sum."""
    b = as_bits(bits)
    _require_length(b, 100, "Frequency")
    s = abs(2 * int(b.sum()) - b.size)
    return float(erfc(s / math.sqrt(2.0 * b.size)))


def block_frequency(bits: BitsLike, block: int = 128) -> float:
    b = as_bits(bits)
    _require_length(b, 100, "BlockFrequency")
    n_blocks = b.size // block
    if n_blocks < 1:
        raise InsufficientTestDataError("BlockFrequency needs one full block")
    pis = b[: n_blocks * block].reshape(n_blocks, block).mean(axis=1)
    chi2 = 4.0 * block * float(np.sum((pis - 0.5) ** 2))
    return float(gammaincc(n_blocks / 2.0, chi2 / 2.0))


def runs_test(bits: BitsLike) -> float:
    """Run-count test; P = 0 by convention when the frequency precondition
    |pi - 1/2| >= 2/sqrt(n) already fails."""
    b = as_bits(bits)
    _require_length(b, 100, "Runs")
    n = b.size
    pi = float(b.mean())
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v = 1 + int(np.count_nonzero(np.diff(b)))
    denom = 2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)
    return float(erfc(abs(v - 2.0 * n * pi * (1.0 - pi)) / denom))


_LONGEST_RUN_REGIMES = (
    # (min n, block M, lowest category, highest category, expected pis)
    (128, 8, 1, 4, (0.2148, 0.3672, 0.2305, 0.1875)),
    (6272, 128, 4, 9, (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (
        750_000,
        10_000,
        10,
        16,
        (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727),
    ),
)


def longest_run(bits: BitsLike) -> float:
    """Longest run of ones within fixed-size blocks, chi-square against the
    tabulated category probabilities for the block size in use."""
    b = as_bits(bits)
    _require_length(b, 128, "LongestRun")
    regime = _LONGEST_RUN_REGIMES[0]
    for candidate in _LONGEST_RUN_REGIMES:
        if b.size >= candidate[0]:
            regime = candidate
    _, block, lo, hi, pis = regime
    n_blocks = b.size // block
    rows = b[: n_blocks * block].reshape(n_blocks, block)

    run = np.zeros(n_blocks, dtype=np.int64)
    longest = np.zeros(n_blocks, dtype=np.int64)
    for col in range(block):
        run = (run + 1) * rows[:, col]
        np.maximum(longest, run, out=longest)

    cats = np.clip(longest, lo, hi) - lo
    counts = np.bincount(cats, minlength=hi - lo + 1).astype(np.float64)
    expected = n_blocks * np.asarray(pis)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    k = len(pis) - 1
    return float(gammaincc(k / 2.0, chi2 / 2.0))


def _cusum_p(z: int, n: int) -> float:
    if z == 0:
        return 1.0
    sqn = math.sqrt(n)
    k_hi = int(math.floor((n / z - 1) / 4))
    k1 = np.arange(int(math.floor((-n / z + 1) / 4)), k_hi + 1)
    term1 = float(
        np.sum(ndtr((4 * k1 + 1) * z / sqn) - ndtr((4 * k1 - 1) * z / sqn))
    )
    k2 = np.arange(int(math.floor((-n / z - 3) / 4)), k_hi + 1)
    term2 = float(
        np.sum(ndtr((4 * k2 + 3) * z / sqn) - ndtr((4 * k2 + 1) * z / sqn))
    )
    return float(min(max(1.0 - term1 + term2, 0.0), 1.0))


def cumulative_sums(bits: BitsLike) -> tuple[float, float]:
    """Maximum partial-sum excursion, forward and backward."""
    b = as_bits(bits)
    _require_length(b, 100, "CumulativeSums")
    steps = 2 * b.astype(np.int64) - 1
    n = b.size
    forward = int(np.max(np.abs(np.cumsum(steps))))
    backward = int(np.max(np.abs(np.cumsum(steps[::-1]))))
    return _cusum_p(forward, n), _cusum_p(backward, n)


def _pattern_counts(b: np.ndarray, width: int) -> np.ndarray:
    """Counts of overlapping width-bit windows, wrapping around the end."""
    ext = np.concatenate([b, b[: width - 1]]) if width > 1 else b
    idx = np.zeros(b.size, dtype=np.int64)
    for offset in range(width):
        idx = (idx << 1) | ext[offset : offset + b.size]
    return np.bincount(idx, minlength=2**width)


def approximate_entropy(bits: BitsLike, block: int = 2) -> float:
    b = as_bits(bits)
    _require_length(b, 100, "ApproximateEntropy")
    n = b.size

    def phi(width: int) -> float:
        freq = _pattern_counts(b, width) / n
        freq = freq[freq > 0]
        return float(np.sum(freq * np.log(freq)))

    ap_en = phi(block) - phi(block + 1)
    chi2 = 2.0 * n * (math.log(2.0) - ap_en)
    return float(gammaincc(2 ** (block - 1), chi2 / 2.0))


def serial(bits: BitsLike, block: int = 3) -> tuple[float, float]:
    b = as_bits(bits)
    _require_length(b, 100, "Serial")
    n = b.size

    def psi_sq(width: int) -> float:
        if width < 1:
            return 0.0
        counts = _pattern_counts(b, width).astype(np.float64)
        return float(2.0**width / n * np.sum(counts**2) - n)

    d1 = psi_sq(block) - psi_sq(block - 1)
    d2 = psi_sq(block) - 2.0 * psi_sq(block - 1) + psi_sq(block - 2)
    p1 = float(gammaincc(2 ** (block - 2), d1 / 2.0))
    p2 = float(gammaincc(2 ** (block - 3), d2 / 2.0))
    return p1, p2


def uniformity_p_value(p_values: np.ndarray) -> float:
    """Ten-bin chi-square uniformity statistic over a set of P-values."""
    counts, _ = np.histogram(np.asarray(p_values), bins=10, range=(0.0, 1.0))
    expected = p_values.size / 10.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return float(gammaincc(9.0 / 2.0, chi2 / 2.0))


@dataclass
class TestResult:
    """One battery row: per-substream P-values plus the pass verdict."""

    name: str
    implemented: bool = True
    p_values: Dict[str, np.ndarray] = field(default_factory=dict)
    proportion: Optional[float] = None
    proportion_threshold: Optional[float] = None
    uniformity_p: Optional[float] = None
    passed: Optional[bool] = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "implemented": self.implemented,
            "p_values": {k: [float(p) for p in v] for k, v in self.p_values.items()},
            "proportion": self.proportion,
            "proportion_threshold": self.proportion_threshold,
            "uniformity_p": self.uniformity_p,
            "passed": self.passed,
        }


def _substream_runners(
    config: BatteryConfig,
) -> Dict[str, Callable[[np.ndarray], Dict[str, float]]]:
    return {
        "Frequency": lambda s: {"": frequency_monobit(s)},
        "BlockFrequency": lambda s: {
            "": block_frequency(s, config.block_frequency_block)
        },
        "CumulativeSums": lambda s: dict(
            zip(("forward", "backward"), cumulative_sums(s))
        ),
        "Runs": lambda s: {"": runs_test(s)},
        "LongestRun": lambda s: {"": longest_run(s)},
        "ApproximateEntropy": lambda s: {
            "": approximate_entropy(s, config.approximate_entropy_block)
        },
        "Serial": lambda s: dict(zip(("d1", "d2"), serial(s, config.serial_block))),
    }


def run_battery(bits: BitsLike, config: BatteryConfig = BatteryConfig()) -> list[TestResult]:
    """Split the stream into sequences and apply every implemented test.

    Returns one result per battery test (implemented ones first), each
    carrying the minimum proportion and uniformity across its
    sub-statistics and an overall pass flag.
    """
    b = as_bits(bits)
    needed = config.sequence_count * config.sequence_length
    if b.size < needed:
        raise InsufficientTestDataError(
            f"battery needs {needed} bits "
            f"({config.sequence_count} x {config.sequence_length}), got {b.size}"
        )
    sequences = b[:needed].reshape(config.sequence_count, config.sequence_length)

    results = []
    threshold = config.proportion_threshold
    for name, runner in _substream_runners(config).items():
        per_stream: Dict[str, list] = {}
        for seq in sequences:
            for sub, p in runner(seq).items():
                per_stream.setdefault(sub, []).append(p)
        streams = {sub: np.asarray(ps) for sub, ps in per_stream.items()}
        proportions = {
            sub: float(np.mean(ps >= config.significance))
            for sub, ps in streams.items()
        }
        uniformities = {sub: uniformity_p_value(ps) for sub, ps in streams.items()}
        passed = all(
            proportions[sub] >= threshold and uniformities[sub] >= UNIFORMITY_MIN
            for sub in streams
        )
        results.append(
            TestResult(
                name=name,
                p_values=streams,
                proportion=min(proportions.values()),
                proportion_threshold=threshold,
                uniformity_p=min(uniformities.values()),
                passed=passed,
            )
        )
    for name in NOT_IMPLEMENTED_TESTS:
        results.append(TestResult(name=name, implemented=False))
    return results


def render_battery_table(results: list[TestResult]) -> str:
    """Plain-text battery report with one row per test."""
    lines = [
        f"{'Test name':<26} {'P-value_T':>10} {'Proportion':>10}  Result",
        "-" * 58,
    ]
    for r in results:
        if not r.implemented:
            lines.append(f"{r.name:<26} {'-':>10} {'-':>10}  not implemented")
            continue
        verdict = "Pass" if r.passed else "Fail"
        lines.append(
            f"{r.name:<26} {r.uniformity_p:>10.4f} {r.proportion:>10.2f}  {verdict}"
        )
    return "\n".join(lines)
