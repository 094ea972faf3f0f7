"""Threshold detector bank and per-round measurement model.

Two regimes share one detector abstraction:

* **honest** light: a coherent pulse with Poissonian photon statistics; a
  detector fires when at least one photon survives the channel and its own
  efficiency, or on a dark count.
* **blinded** light: classical bright illumination; each detector has been
  turned into an intensity threshold and fires iff the intensity routed to
  it strictly exceeds that threshold (dark counts still apply).

Intensities are arbitrary linear units and intentionally not unified with
photon numbers: the blinded regime is a purely classical threshold model.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError

BASES = ("X", "Z")
TREATMENT_BLINDING_AWARE = "blinding_aware"
TREATMENT_LEGACY = "legacy_squash"
TREATMENTS = (TREATMENT_BLINDING_AWARE, TREATMENT_LEGACY)

DEFAULT_MISALIGNMENT = 0.004


def validate_basis(basis: str) -> str:
    if basis not in BASES:
        raise ConfigError(f"unknown basis {basis!r}; expected one of {BASES}")
    return basis


def validate_treatment(treatment: str) -> str:
    if treatment not in TREATMENTS:
        raise ConfigError(
            f"unknown treatment {treatment!r}; expected one of {TREATMENTS}"
        )
    return treatment


def _as_per_detector(value, dimension: int, name: str) -> Tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * dimension
    out = tuple(float(v) for v in value)
    if len(out) != dimension:
        raise ConfigError(f"{name} must have one entry per detector ({dimension})")
    return out


@dataclass(frozen=True)
class DetectorBank:
    """A set of ``dimension`` threshold detectors behind one measurement.

    ``thresholds`` are the blinding intensities currently imposed on each
    detector; 0 means the detector is unblinded and retains single-photon
    sensitivity.
    """

    dimension: int
    efficiency: Tuple[float, ...] = 1.0
    dark_count: float = 0.0
    thresholds: Tuple[float, ...] = 0.0

    def __post_init__(self) -> None:
        if self.dimension < 2:
            raise ConfigError("detector dimension must be at least 2")
        object.__setattr__(
            self,
            "efficiency",
            _as_per_detector(self.efficiency, self.dimension, "efficiency"),
        )
        object.__setattr__(
            self,
            "thresholds",
            _as_per_detector(self.thresholds, self.dimension, "thresholds"),
        )
        if any(not 0.0 <= eta <= 1.0 for eta in self.efficiency):
            raise ConfigError("detector efficiencies must lie in [0, 1]")
        if not 0.0 <= self.dark_count < 1.0:
            raise ConfigError("dark count probability must lie in [0, 1)")
        if any(t < 0.0 for t in self.thresholds):
            raise ConfigError("blinding thresholds must be non-negative")

    def with_thresholds(self, thresholds) -> "DetectorBank":
        return DetectorBank(
            dimension=self.dimension,
            efficiency=self.efficiency,
            dark_count=self.dark_count,
            thresholds=_as_per_detector(thresholds, self.dimension, "thresholds"),
        )


@dataclass(frozen=True)
class SignalSpec:
    """Light entering the measurement for one round.

    Honest mode describes a coherent pulse (mean photon number at the
    source, channel transmittance, prepared test-basis eigenstate index and
    a misalignment probability that reroutes the pulse to a wrong port).
    Blinded mode describes attacker-crafted classical light: a total
    intensity plus, per basis, the fraction of that intensity reaching each
    detector.
    """

    mode: str
    mean_photons: float = 0.0
    transmittance: float = 1.0
    prepared_index: int = 0
    misalignment: float = DEFAULT_MISALIGNMENT
    intensity: float = 0.0
    routing: Optional[Mapping[str, Mapping[int, float]]] = None

    def __post_init__(self) -> None:
        if self.mode not in ("honest", "blinded"):
            raise ConfigError(f"unknown signal mode {self.mode!r}")
        if self.mode == "honest":
            if self.mean_photons < 0:
                raise ConfigError("mean photon number must be non-negative")
            if not 0.0 <= self.transmittance <= 1.0:
                raise ConfigError("channel transmittance must lie in [0, 1]")
            if not 0.0 <= self.misalignment < 1.0:
                raise ConfigError("misalignment must lie in [0, 1)")
        else:
            if self.intensity < 0:
                raise ConfigError("blinded intensity must be non-negative")
            if self.routing is None:
                raise ConfigError("blinded signals need a per-basis routing rule")
            for basis in BASES:
                fractions = self.routing.get(basis)
                if fractions is None:
                    raise ConfigError(f"blinded routing missing basis {basis!r}")
                total = sum(fractions.values())
                if fractions and abs(total - 1.0) > 1e-9:
                    raise ConfigError(
                        f"routing fractions for basis {basis} sum to {total}, not 1"
                    )

    @classmethod
    def coherent(
        cls,
        mean_photons: float,
        transmittance: float = 1.0,
        prepared_index: int = 0,
        misalignment: float = DEFAULT_MISALIGNMENT,
    ) -> "SignalSpec":
        return cls(
            mode="honest",
            mean_photons=mean_photons,
            transmittance=transmittance,
            prepared_index=prepared_index,
            misalignment=misalignment,
        )

    @classmethod
    def blinded(
        cls, intensity: float, routing: Mapping[str, Mapping[int, float]]
    ) -> "SignalSpec":
        return cls(mode="blinded", intensity=intensity, routing=routing)

    def routed_intensity(self, basis: str, dimension: int) -> np.ndarray:
        """Intensity arriving at each physical detector in the given basis."""
        validate_basis(basis)
        if self.mode != "blinded":
            raise ConfigError("routed_intensity is only defined for blinded signals")
        out = np.zeros(dimension)
        for det, frac in self.routing[basis].items():
            if not 0 <= int(det) < dimension:
                raise ConfigError(f"routing targets detector {det} outside bank")
            out[int(det)] += self.intensity * frac
        return out


@dataclass(frozen=True)
class ClickPattern:
    """Set of detectors that fired in one round."""

    fired: frozenset

    @classmethod
    def from_flags(cls, flags: Sequence[bool]) -> "ClickPattern":
        return cls(frozenset(int(i) for i, f in enumerate(flags) if f))

    @property
    def n_clicks(self) -> int:
        return len(self.fired)


class Category(enum.Enum):
    X_CORRECT = "x_correct"
    X_ERROR = "x_error"
    X_DISCARDED = "x_discarded"
    Z_SINGLE = "z_single"
    Z_NO_RANDOMNESS = "z_no_randomness"
    Z_DISCARDED = "z_discarded"


class Classified(NamedTuple):
    category: Category
    detector: Optional[int] = None


def _validate_assignment(assignment: Sequence[int], dimension: int) -> np.ndarray:
    arr = np.asarray(assignment, dtype=np.int64)
    if arr.shape != (dimension,) or sorted(arr.tolist()) != list(range(dimension)):
        raise ConfigError(
            f"detector assignment {assignment!r} is not a permutation of "
            f"range({dimension})"
        )
    return arr


def measure_pulse(
    signal: SignalSpec,
    bank: DetectorBank,
    basis: str,
    detector_assignment: Sequence[int],
    rng: np.random.Generator,
) -> ClickPattern:
    """Measure one pulse and return which detectors fired.

    ``detector_assignment`` maps logical outcomes to physical detectors;
    entry 0 is the physical detector that represents the correct test-basis
    outcome this round.  Honest pulses follow the assignment (all photons
    reach the assigned port in the test basis, a uniform 1/d split in the
    generation basis); blinded light ignores it, because the attacker's
    classical intensity splits through the optics the same way no matter
    how Alice labels the ports.
    """
    validate_basis(basis)
    assignment = _validate_assignment(detector_assignment, bank.dimension)
    d = bank.dimension
    p_d = bank.dark_count

    if signal.mode == "blinded":
        routed = signal.routed_intensity(basis, d)
        fired = routed > np.asarray(bank.thresholds)
    else:
        n = int(rng.poisson(signal.mean_photons))
        counts = np.zeros(d, dtype=np.int64)
        if basis == "X":
            target = int(assignment[signal.prepared_index])
            if signal.misalignment > 0.0 and rng.random() < signal.misalignment:
                # Misaligned optics dump the pulse into one of the wrong ports.
                target = (target + int(rng.integers(1, d))) % d
            counts[target] = n
        else:
            counts = rng.multinomial(n, np.full(d, 1.0 / d))
        survive_p = signal.transmittance * np.asarray(bank.efficiency)
        survived = rng.binomial(counts, survive_p)
        fired = survived > 0

    if p_d > 0.0:
        fired = fired | (rng.random(d) < p_d)
    return ClickPattern.from_flags(fired)


def classify_pattern(
    pattern: ClickPattern,
    basis: str,
    correct_index: int,
    treatment: str = TREATMENT_BLINDING_AWARE,
) -> Classified:
    """Assign a round outcome to its post-processing category.

    The blinding-aware treatment keeps every round: in the test basis only
    a single click on the correct detector counts as correct and everything
    else (wrong single, multi-click, no click) is an error; in the
    generation basis only single clicks carry randomness while multi- and
    no-click rounds count as valid events without randomness.  The legacy
    treatment is identical except that no-click rounds are discarded.
    """
    validate_basis(basis)
    validate_treatment(treatment)
    k = pattern.n_clicks
    if basis == "X":
        if k == 1 and correct_index in pattern.fired:
            return Classified(Category.X_CORRECT)
        if k == 0 and treatment == TREATMENT_LEGACY:
            return Classified(Category.X_DISCARDED)
        return Classified(Category.X_ERROR)
    if k == 1:
        return Classified(Category.Z_SINGLE, next(iter(pattern.fired)))
    if k == 0 and treatment == TREATMENT_LEGACY:
        return Classified(Category.Z_DISCARDED)
    return Classified(Category.Z_NO_RANDOMNESS)
