"""Finite-size security analysis: from tallies to a certified bit count.

The chain is: observed test-basis error rate -> upper bound via a
sampling-without-replacement tail bound (``gamma_bound``) -> phase-error
bound concentrated on the single-click generation rounds
(``phase_error_upper``) -> d-dimensional entropy (``entropy_hd``) ->
certified length

    l = eta_e * ( n_z_single * (q - h_d(phi)) - 2*log2(3 / (2*eps_sec)) )
        - n_seeds                                        [blinding-aware]
    l = n_z_single * (q - h_d(phi)) - 2*log2(3 / (2*eps_sec)) - n_seeds
                                                         [legacy]

floored at zero and reported in whole bits.  The secrecy budget splits
eps_sec equally between smoothing, sampling, and hashing failures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .detectors import TREATMENT_BLINDING_AWARE, TREATMENT_LEGACY
from .errors import (
    ConfigError,
    InsufficientTestDataError,
    NoExtractableRoundsError,
)
from .session import TallySummary, seed_cost

GAMMA_CHERNOFF = "chernoff"
GAMMA_SERFLING = "serfling"
GAMMA_METHODS = (GAMMA_CHERNOFF, GAMMA_SERFLING)
DEFAULT_GAMMA_METHOD = GAMMA_CHERNOFF

DEFAULT_EPS_SEC = 1e-9

# Calibration of the demonstration setup: basis incompatibility measured at
# 0.954 and detection-balance coefficient 2*min(eta)/(eta0+eta1) = 0.9932
# once the circulator insertion loss is folded in.
CALIBRATED_INCOMPATIBILITY = 0.954
CALIBRATED_DETECTION_BALANCE = 0.9932


def secrecy_budget(eps_sec: float) -> tuple[float, float, float]:
    """Equal three-way split (smoothing, sampling, hashing); never exceeds
    eps_sec in total, even after rounding."""
    if not 0.0 < eps_sec < 1.0:
        raise ConfigError("eps_sec must lie strictly between 0 and 1")
    part = eps_sec / 3.0
    while part * 3.0 > eps_sec:
        part = math.nextafter(part, 0.0)
    return part, part, part


@dataclass(frozen=True)
class SecurityParams:
    """Secrecy failure budget and measurement calibration.

    ``incompatibility`` (q) lower-bounds how complementary the two bases
    are, at most log2(d); ``detection_balance`` (eta_e) corrects for
    unequal detector efficiencies and only enters the blinding-aware
    formula.
    """

    incompatibility: float
    detection_balance: float = 1.0
    eps_sec: float = DEFAULT_EPS_SEC

    def __post_init__(self) -> None:
        if self.incompatibility <= 0.0:
            raise ConfigError("incompatibility must be positive")
        if not 0.0 < self.detection_balance <= 1.0:
            raise ConfigError("detection_balance must lie in (0, 1]")
        secrecy_budget(self.eps_sec)

    @classmethod
    def ideal(cls, dimension: int, eps_sec: float = DEFAULT_EPS_SEC) -> "SecurityParams":
        """Perfectly complementary bases and balanced detectors."""
        return cls(incompatibility=math.log2(dimension), eps_sec=eps_sec)

    @classmethod
    def calibrated(cls, eps_sec: float = DEFAULT_EPS_SEC) -> "SecurityParams":
        """The two-detector demonstration setup's measured calibration."""
        return cls(
            incompatibility=CALIBRATED_INCOMPATIBILITY,
            detection_balance=CALIBRATED_DETECTION_BALANCE,
            eps_sec=eps_sec,
        )

    @property
    def eps_sampling(self) -> float:
        return secrecy_budget(self.eps_sec)[1]

    def validate_for_dimension(self, dimension: int) -> None:
        if self.incompatibility > math.log2(dimension) + 1e-12:
            raise ConfigError(
                f"incompatibility {self.incompatibility} exceeds log2({dimension})"
            )


def _kl_bernoulli(a: float, b: float) -> float:
    """KL divergence D(a || b) between Bernoulli distributions, in nats."""
    if a <= 0.0:
        return -math.log1p(-b) if b < 1.0 else math.inf
    if a >= 1.0:
        return -math.log(b) if b > 0.0 else math.inf
    if b <= 0.0 or b >= 1.0:
        return math.inf
    return a * math.log(a / b) + (1.0 - a) * math.log((1.0 - a) / (1.0 - b))


def _validate_gamma_args(n: float, k: float, observed_rate: float, eps: float) -> None:
    if k < 1:
        raise InsufficientTestDataError(
            "sampling bound needs at least one test round (k >= 1)"
        )
    if n < 1:
        raise ConfigError("sampling bound needs a non-empty remainder (n >= 1)")
    if not 0.0 <= observed_rate <= 1.0:
        raise ConfigError("observed rate must lie in [0, 1]")
    if not 0.0 < eps < 1.0:
        raise ConfigError("failure probability must lie strictly in (0, 1)")


def gamma_serfling(n: float, k: float, observed_rate: float, eps: float) -> float:
    """Closed-form additive tail bound for sampling without replacement.

    gamma = sqrt((n + k)(k + 1) / (n k^2) * ln(1/eps) / 2); independent of
    the observed rate, clamped so observed_rate + gamma <= 1.
    """
    _validate_gamma_args(n, k, observed_rate, eps)
    gamma = math.sqrt(
        (n + k) * (k + 1) / (n * k * k) * math.log(1.0 / eps) / 2.0
    )
    return min(gamma, 1.0 - observed_rate)

def gamma_chernoff(n: float, k: float, observed_rate: float, eps: float) -> float:
    """Rate-adaptive tail bound: invert the Kullback-Leibler form.

    Observing rate ``lam`` on the k sampled rounds while the n unsampled
    rounds exceed ``lam + gamma`` forces the population rate above
    ``lam + gamma * n/(n+k)``; the hypergeometric lower tail at the sample
    is then at most exp(-k * D(lam || lam + gamma*n/(n+k))).  The returned
    gamma is the smallest value pushing that bound to eps.  Much tighter
    than the additive form at small observed rates.
    """
    _validate_gamma_args(n, k, observed_rate, eps)
    lam = observed_rate
    if lam >= 1.0:
        return 0.0
    target = math.log(1.0 / eps) / k
    scale = (n + k) / n

    def deficit(shift: float) -> float:
        return _kl_bernoulli(lam, lam + shift) - target

    hi = 1.0 - lam
    if deficit(hi) <= 0.0:
        # Even a certain population cannot be excluded at this budget.
        return 1.0 - lam
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if deficit(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15:
            break
    return min(hi * scale, 1.0 - lam)


def gamma_bound(
    n: float,
    k: float,
    observed_rate: float,
    eps: float,
    method: str = DEFAULT_GAMMA_METHOD,
) -> float:
    """Penalty gamma such that the unsampled fraction exceeds
    observed_rate + gamma with probability at most eps.

    ``n`` is the unsampled population, ``k`` the sample size.  Both methods
    are sound against the exact hypergeometric tail; ``chernoff`` (default)
    is rate-adaptive and close to the exact quantile, ``serfling`` is the
    classical additive closed form.
    """
    if method == GAMMA_SERFLING:
        return gamma_serfling(n, k, observed_rate, eps)
    if method == GAMMA_CHERNOFF:
        return gamma_chernoff(n, k, observed_rate, eps)
    raise ConfigError(f"unknown gamma method {method!r}; expected {GAMMA_METHODS}")


class PhaseErrorBound(NamedTuple):
    value: float
    saturated: bool


def phase_error_upper(
    e_x_upper: float, n_z: float, n_z_single: float, dimension: int
) -> PhaseErrorBound:
    """Pessimistic phase-error rate on single-click generation rounds.

    All hypothetical test-basis errors among the n_z generation rounds are
    charged to the n_z_single extractable ones: phi = e_x_upper * n_z /
    n_z_single, capped at (d-1)/d (the random-guessing rate, where the
    entropy bound saturates).
    """
    if n_z_single < 1:
        raise NoExtractableRoundsError(
            "no single-click generation rounds; nothing to certify"
        )
    cap = (dimension - 1) / dimension
    phi = e_x_upper * n_z / n_z_single
    if phi > cap:
        return PhaseErrorBound(cap, True)
    return PhaseErrorBound(phi, False)


def entropy_hd(x: float, dimension: int) -> float:
    """d-dimensional Shannon entropy h_d(x) = -x log2(x/(d-1)) - (1-x) log2(1-x).

    Continuous at 0 (h_d(0) = 0), concave, and equal to its maximum
    log2(d) for every x at or beyond the random-guessing rate (d-1)/d.
    """
    if dimension < 2:
        raise ConfigError("dimension must be at least 2")
    if not 0.0 <= x <= 1.0:
        raise ConfigError("entropy argument must lie in [0, 1]")
    cap = (dimension - 1) / dimension
    if x >= cap:
        return math.log2(dimension)
    if x <= 0.0:
        return 0.0
    return -x * math.log2(x / (dimension - 1)) - (1.0 - x) * math.log2(1.0 - x)


@dataclass(frozen=True)
class AnalysisReport:
    """Everything the certification produced, ready for serialization."""

    variant: str
    rounds: int
    dimension: int
    n_x_tested: float
    n_z_effective: float
    n_z_single: float
    x_error_rate: float
    x_error_upper: float
    sampling_gamma: float
    gamma_method: Optional[str]
    phase_error_upper: float
    phase_saturated: bool
    entropy: float
    incompatibility: float
    detection_balance: float
    eps_sec: float
    n_seeds: int
    length: int
    rate: float
    asymptotic: bool = False

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "rounds": self.rounds,
            "dimension": self.dimension,
            "n_x_tested": self.n_x_tested,
            "n_z_effective": self.n_z_effective,
            "n_z_single": self.n_z_single,
            "x_error_rate": self.x_error_rate,
            "x_error_upper": self.x_error_upper,
            "sampling_gamma": self.sampling_gamma,
            "gamma_method": self.gamma_method,
            "phase_error_upper": self.phase_error_upper,
            "phase_saturated": self.phase_saturated,
            "entropy": self.entropy,
            "incompatibility": self.incompatibility,
            "detection_balance": self.detection_balance,
            "eps_sec": self.eps_sec,
            "n_seeds": self.n_seeds,
            "length": self.length,
            "rate": self.rate,
            "asymptotic": self.asymptotic,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisReport":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def key_length(
    tally: TallySummary,
    sec: SecurityParams,
    phi_override: Optional[float] = None,
    gamma_method: str = DEFAULT_GAMMA_METHOD,
    asymptotic: bool = False,
) -> AnalysisReport:
    """Certified extractable length for a tally under its own treatment.

    ``phi_override`` bypasses the sampling bound and phase-error formula
    entirely (exact-reproduction mode for ingested experiment records).
    ``asymptotic`` sets gamma to zero and drops the hashing/smoothing
    constant while keeping the seed cost, for infinite-data comparisons.
    """
    d = tally.dimension
    sec.validate_for_dimension(d)
    variant = tally.treatment
    aware = variant == TREATMENT_BLINDING_AWARE

    n_z_single = float(tally.n_z_single)
    n_z_eff = float(tally.n_z_effective)
    n_tested = float(tally.n_x_tested)
    e_x = tally.x_error_rate

    gamma = 0.0
    method: Optional[str] = None
    if phi_override is not None:
        if n_z_single < 1:
            raise NoExtractableRoundsError(
                "no single-click generation rounds; nothing to certify"
            )
        if phi_override < 0.0:
            raise ConfigError("phase-error override must be non-negative")
        cap = (d - 1) / d
        phi = min(float(phi_override), cap)
        saturated = phi_override > cap
        e_x_upper = e_x
    elif asymptotic:
        e_x_upper = e_x
        phi, saturated = phase_error_upper(e_x_upper, n_z_eff, n_z_single, d)
    else:
        gamma = gamma_bound(
            n_z_eff, n_tested, e_x, sec.eps_sampling, method=gamma_method
        )
        method = gamma_method
        e_x_upper = min(e_x + gamma, 1.0)
        phi, saturated = phase_error_upper(e_x_upper, n_z_eff, n_z_single, d)

    entropy = entropy_hd(phi, d)
    n_seeds = seed_cost(tally.rounds, tally.n_x, d, variant)
    hash_term = 0.0 if asymptotic else 2.0 * math.log2(3.0 / (2.0 * sec.eps_sec))

    core = n_z_single * (sec.incompatibility - entropy) - hash_term
    if aware:
        raw_length = sec.detection_balance * core - n_seeds
    else:
        raw_length = core - n_seeds
    length = max(0, math.floor(raw_length))
    rounds = int(tally.rounds)

    return AnalysisReport(
        variant=variant,
        rounds=rounds,
        dimension=d,
        n_x_tested=n_tested,
        n_z_effective=n_z_eff,
        n_z_single=n_z_single,
        x_error_rate=e_x,
        x_error_upper=e_x_upper,
        sampling_gamma=gamma,
        gamma_method=method,
        phase_error_upper=phi,
        phase_saturated=saturated,
        entropy=entropy,
        incompatibility=sec.incompatibility,
        detection_balance=sec.detection_balance if aware else 1.0,
        eps_sec=sec.eps_sec,
        n_seeds=n_seeds,
        length=length,
        rate=length / rounds,
        asymptotic=asymptotic,
    )
