"""Blinding-attack construction and feasibility analysis.

An attacker who controls the detector thresholds steers generation-basis
outcomes by routing all intensity to one detector, while choosing the total
intensity so that the test basis sees either no click (balanced strategy)
or a single click on a detector of her choice (unbalanced / d-dimensional
strategy, which requires the guessed correct detector to hold the strictly
smallest threshold).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .detectors import SignalSpec
from .errors import ConfigError, InfeasibleAttackError

STRATEGY_BALANCED = "balanced"
STRATEGY_UNBALANCED = "unbalanced"
STRATEGY_D_DIMENSIONAL = "d_dimensional"
STRATEGIES = (STRATEGY_BALANCED, STRATEGY_UNBALANCED, STRATEGY_D_DIMENSIONAL)

DEFAULT_EVE_SEED = 0x0E5E


@dataclass(frozen=True)
class AttackConfig:
    """One blinding campaign: strategy, thresholds, and intended outcomes.

    ``target_sequence`` fixes the attacker's intended generation-basis
    outcome per round; when omitted, targets come from a pseudorandom
    stream keyed by ``eve_seed`` — numbers that would sail through naive
    frequency checks while being fully known to the attacker.
    ``attack_fraction`` < 1 interleaves honest rounds (``honest_signal``)
    uniformly at random.
    """

    strategy: str
    thresholds: Tuple[float, ...]
    intensity: Optional[float] = None
    attack_fraction: float = 1.0
    guessed_plus_index: int = 0
    target_sequence: Optional[Tuple[int, ...]] = None
    eve_seed: int = DEFAULT_EVE_SEED
    honest_signal: Optional[SignalSpec] = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown attack strategy {self.strategy!r}; expected {STRATEGIES}"
            )
        object.__setattr__(
            self, "thresholds", tuple(float(t) for t in self.thresholds)
        )
        if any(t < 0 for t in self.thresholds):
            raise ConfigError("attack thresholds must be non-negative")
        if not 0.0 <= self.attack_fraction <= 1.0:
            raise ConfigError("attack_fraction must lie in [0, 1]")
        d = len(self.thresholds)
        if not 0 <= self.guessed_plus_index < d:
            raise ConfigError("guessed_plus_index outside the detector bank")
        if self.target_sequence is not None:
            seq = tuple(int(t) for t in self.target_sequence)
            if any(not 0 <= t < d for t in seq):
                raise ConfigError("target_sequence entries must lie in [0, d)")
            object.__setattr__(self, "target_sequence", seq)
        if self.attack_fraction < 1.0 and self.honest_signal is None:
            raise ConfigError(
                "attack_fraction < 1 interleaves honest rounds; provide "
                "honest_signal for them"
            )

    @property
    def dimension(self) -> int:
        return len(self.thresholds)

    def chosen_intensity(self) -> float:
        """The configured intensity, or the window midpoint when unset."""
        if self.intensity is not None:
            return float(self.intensity)
        lo, hi = feasible_intensity_window(self, self.dimension)
        return 0.5 * (lo + hi)

    def targets(
        self, n_rounds: int, chunk_index: int = 0, offset: Optional[int] = None
    ) -> np.ndarray:
        """Attacker's intended outcomes for one chunk of rounds.

        ``offset`` is the absolute round index of the chunk's first round;
        it defaults to ``chunk_index * n_rounds``, which is only right when
        every preceding chunk had the same size.
        """
        if self.target_sequence is not None:
            start = chunk_index * n_rounds if offset is None else int(offset)
            seq = np.asarray(self.target_sequence, dtype=np.int64)
            if start + n_rounds > seq.size:
                raise ConfigError(
                    f"target_sequence has {seq.size} entries; round "
                    f"{start + n_rounds} requested"
                )
            return seq[start : start + n_rounds]
        rng = np.random.default_rng([int(self.eve_seed), int(chunk_index)])
        return rng.integers(0, self.dimension, size=n_rounds, dtype=np.int64)


def feasible_intensity_window(config: AttackConfig, d: int) -> Tuple[float, float]:
    """Half-open interval (lo, hi] of intensities that realize the strategy.

    Balanced: every threshold equal to I, window (I, d*I] — the test basis
    splits the pulse d ways and must stay below threshold everywhere.
    Unbalanced / d-dimensional: the guessed correct detector holds the
    strictly smallest threshold s0; the window is
    (max(d*s0, max(other thresholds)), d*s1] with s1 the second-smallest
    threshold, so the generation basis can fire any detector while the test
    basis single-clicks only the guessed one.  Ties at the smallest
    threshold leave s1 == s0 and the window closes.
    """
    if d != config.dimension:
        raise ConfigError(
            f"window requested for d={d} but config has {config.dimension} thresholds"
        )
    thr = np.asarray(config.thresholds, dtype=float)

    if config.strategy == STRATEGY_BALANCED:
        if thr.max() - thr.min() > 0:
            raise InfeasibleAttackError(
                "balanced strategy premise violated: thresholds are not all equal"
            )
        level = float(thr[0])
        lo, hi = level, d * level
    else:
        if config.strategy == STRATEGY_UNBALANCED and d != 2:
            raise ConfigError("unbalanced strategy is the two-detector case")
        guessed = config.guessed_plus_index
        others = np.delete(thr, guessed)
        if not np.all(thr[guessed] < others):
            raise InfeasibleAttackError(
                "dominant strategy premise violated: guessed correct detector "
                "must hold the strictly smallest threshold"
            )
        second = float(np.min(others))
        lo = max(d * float(thr[guessed]), float(np.max(others)))
        hi = d * second

    if not lo < hi:
        raise InfeasibleAttackError(
            f"empty intensity window: lo={lo:.6g} >= hi={hi:.6g}"
        )
    return lo, hi


def craft_attack_pulse(
    config: AttackConfig, round_target: int, intensity: float
) -> SignalSpec:
    """Build the blinded signal steering one round to ``round_target``.

    Generation basis: all intensity to the target detector.  Test basis:
    the optics split the pulse 1/d to every detector regardless of the
    target.
    """
    d = config.dimension
    if not 0 <= int(round_target) < d:
        raise ConfigError(f"round target {round_target} outside [0, {d})")
    lo, hi = feasible_intensity_window(config, d)
    if not lo < intensity <= hi:
        raise InfeasibleAttackError(
            f"intensity {intensity:.6g} outside feasible window ({lo:.6g}, {hi:.6g}]"
        )
    routing = {
        "Z": {int(round_target): 1.0},
        "X": {i: 1.0 / d for i in range(d)},
    }
    return SignalSpec.blinded(intensity=float(intensity), routing=routing)
