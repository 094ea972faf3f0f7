"""Protocol session engine: runs rounds, classifies them, tallies counts.

Each round Alice measures in the test basis X with probability ``p_x`` and
in the generation basis Z otherwise.  Under the blinding-aware treatment
she additionally draws, per X round, a uniformly random physical detector
to represent the correct outcome; the legacy treatment keeps that detector
fixed (port 0), which is exactly the weakness the unbalanced attack
exploits.

Rounds are processed in chunks.  Chunk ``c`` draws from the deterministic
substream ``default_rng([seed, c])``, and the attacker's target stream is
keyed independently, so identical parameters reproduce identical tallies
byte for byte while honest and attacked randomness stay separated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .attacks import AttackConfig, feasible_intensity_window
from .bitops import bits_to_str, symbols_to_bits
from .detectors import (
    TREATMENT_BLINDING_AWARE,
    TREATMENT_LEGACY,
    DetectorBank,
    SignalSpec,
    validate_treatment,
)
from .errors import ConfigError, InfeasibleAttackError, InsufficientTestDataError

DEFAULT_CHUNK_ROUNDS = 1 << 20


@dataclass(frozen=True)
class ProtocolParams:
    """Session-level knobs: size, dimension, basis bias, treatment, seed."""

    rounds: int
    p_x: float
    seed: int
    dimension: int = 2
    treatment: str = TREATMENT_BLINDING_AWARE
    chunk_rounds: int = DEFAULT_CHUNK_ROUNDS

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if not 0.0 < self.p_x < 1.0:
            raise ConfigError("p_x must lie strictly between 0 and 1")
        if self.dimension < 2:
            raise ConfigError("dimension must be at least 2")
        validate_treatment(self.treatment)
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit non-negative integer")
        if self.chunk_rounds < 1:
            raise ConfigError("chunk_rounds must be positive")


@dataclass
class TallySummary:
    """Aggregate round counts plus the ordered generation-basis symbols.

    The click-level breakdown is treatment-agnostic; the treatment tag
    selects which view the derived properties expose (the legacy treatment
    drops no-click rounds from both bases).  Fields hold integers for
    simulated sessions and floats for closed-form expected tallies.
    """

    treatment: str
    rounds: float
    dimension: int
    n_x: float
    n_z: float
    x_correct: float
    x_wrong_single: float
    x_multi: float
    x_none: float
    z_single_by_detector: np.ndarray
    z_multi: float
    z_none: float
    z_total_by_detector: np.ndarray
    raw_symbols: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.int16)
    )
    eve_symbols: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        validate_treatment(self.treatment)
        self.z_single_by_detector = np.asarray(self.z_single_by_detector)
        self.z_total_by_detector = np.asarray(self.z_total_by_detector)

    # -- treatment-aware views -------------------------------------------

    @property
    def n_z_single(self) -> float:
        return self.z_single_by_detector.sum()

    @property
    def n_x_error(self) -> float:
        wrong = self.x_wrong_single + self.x_multi
        if self.treatment == TREATMENT_BLINDING_AWARE:
            return wrong + self.x_none
        return wrong

    @property
    def n_x_discarded(self) -> float:
        return self.x_none if self.treatment == TREATMENT_LEGACY else 0

    @property
    def n_z_discarded(self) -> float:
        return self.z_none if self.treatment == TREATMENT_LEGACY else 0

    @property
    def n_x_tested(self) -> float:
        """Rounds entering the test-basis error rate (clicked only, legacy)."""
        if self.treatment == TREATMENT_LEGACY:
            return self.n_x - self.x_none
        return self.n_x

    @property
    def n_z_effective(self) -> float:
        """Generation rounds the phase-error bound is spread over."""
        if self.treatment == TREATMENT_LEGACY:
            return self.n_z - self.z_none
        return self.n_z

    @property
    def x_error_rate(self) -> float:
        tested = self.n_x_tested
        if tested <= 0:
            raise InsufficientTestDataError(
                "no test-basis rounds available to estimate the error rate"
            )
        return self.n_x_error / tested

    def check(self) -> None:
        """Assert the counting invariants; cheap, used after simulation."""
        assert self.n_x + self.n_z == self.rounds
        assert (
            self.x_correct + self.x_wrong_single + self.x_multi + self.x_none
            == self.n_x
        )
        assert self.n_z_single + self.z_multi + self.z_none == self.n_z
        if self.raw_symbols.size:
            assert self.raw_symbols.size == self.n_z_single

    def to_dict(self) -> dict:
        return {
            "treatment": self.treatment,
            "rounds": int(self.rounds),
            "dimension": self.dimension,
            "n_x": int(self.n_x),
            "n_z": int(self.n_z),
            "x_correct": int(self.x_correct),
            "x_wrong_single": int(self.x_wrong_single),
            "x_multi": int(self.x_multi),
            "x_none": int(self.x_none),
            "z_single_by_detector": [int(v) for v in self.z_single_by_detector],
            "z_multi": int(self.z_multi),
            "z_none": int(self.z_none),
            "z_total_by_detector": [int(v) for v in self.z_total_by_detector],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TallySummary":
        d = int(data["dimension"])
        return cls(
            treatment=data["treatment"],
            rounds=data["rounds"],
            dimension=d,
            n_x=data["n_x"],
            n_z=data["n_z"],
            x_correct=data["x_correct"],
            x_wrong_single=data["x_wrong_single"],
            x_multi=data["x_multi"],
            x_none=data["x_none"],
            z_single_by_detector=np.asarray(data["z_single_by_detector"]),
            z_multi=data["z_multi"],
            z_none=data["z_none"],
            z_total_by_detector=np.asarray(data["z_total_by_detector"]),
        )


def run_session(
    params: ProtocolParams,
    source: Union[SignalSpec, AttackConfig],
    bank: DetectorBank,
) -> TallySummary:
    """Simulate ``params.rounds`` rounds of the protocol.

    ``source`` is either an honest coherent signal, a static blinded
    signal, or an attack campaign.  Given identical parameters the result
    is reproducible byte for byte; honest-light sampling uses the exact
    per-detector Poisson-thinning equivalent of routing each photon and
    losing it independently.
    """
    d = params.dimension
    if bank.dimension != d:
        raise ConfigError(
            f"detector bank has {bank.dimension} detectors, session expects {d}"
        )

    attack: Optional[AttackConfig] = None
    honest: Optional[SignalSpec] = None
    static_blinded: Optional[SignalSpec] = None
    if isinstance(source, AttackConfig):
        attack = source
        if attack.dimension != d:
            raise ConfigError("attack thresholds do not match the session dimension")
        attack_intensity = attack.chosen_intensity()
        # Validates the window once; per-round pulses share the intensity.
        lo, hi = feasible_intensity_window(attack, d)
        if not lo < attack_intensity <= hi:
            raise InfeasibleAttackError(
                f"attack intensity {attack_intensity:.6g} outside window "
                f"({lo:.6g}, {hi:.6g}]"
            )
        honest = attack.honest_signal
        blinded_bank = bank.with_thresholds(attack.thresholds)
    elif isinstance(source, SignalSpec):
        if source.mode == "honest":
            honest = source
        else:
            static_blinded = source
    else:
        raise ConfigError(f"unsupported session source {type(source).__name__}")

    legacy = params.treatment == TREATMENT_LEGACY
    p_d = bank.dark_count
    eff = np.asarray(bank.efficiency)
    thresholds = np.asarray(
        blinded_bank.thresholds if attack is not None else bank.thresholds
    )

    if honest is not None:
        if honest.prepared_index != 0:
            raise ConfigError(
                "the session engine assumes the prepared eigenstate is index 0"
            )
        mu_det = honest.mean_photons * honest.transmittance * eff
        p_fire_z = 1.0 - (1.0 - p_d) * np.exp(-mu_det / d)
        p_fire_x_routed = 1.0 - (1.0 - p_d) * np.exp(-mu_det)
        misalignment = honest.misalignment
    else:
        p_fire_z = np.full(d, p_d)
        p_fire_x_routed = np.full(d, p_d)
        misalignment = 0.0

    if static_blinded is not None:
        static_fire_z = static_blinded.routed_intensity("Z", d) > thresholds
        static_fire_x = static_blinded.routed_intensity("X", d) > thresholds

    n_x = n_z = 0
    x_correct = x_wrong = x_multi = x_none = 0
    z_multi = z_none = 0
    z_single_by_det = np.zeros(d, dtype=np.int64)
    z_total_by_det = np.zeros(d, dtype=np.int64)
    raw_chunks = []
    eve_chunks = [] if attack is not None else None

    n_chunks = -(-params.rounds // params.chunk_rounds)
    for chunk in range(n_chunks):
        m = min(params.chunk_rounds, params.rounds - chunk * params.chunk_rounds)
        rng = np.random.default_rng([int(params.seed), chunk])

        u_basis = rng.random(m)
        assign_draw = rng.integers(0, d, size=m)
        u_flip = rng.random(m)
        flip_offset = rng.integers(1, d, size=m)
        u_det = rng.random((m, d))

        is_x = u_basis < params.p_x
        correct = np.zeros(m, dtype=np.int64) if legacy else assign_draw

        # Honest click thresholds per round/detector.
        routed = correct.copy()
        if misalignment > 0.0:
            flipped = u_flip < misalignment
            routed[flipped] = (routed[flipped] + flip_offset[flipped]) % d
        p_honest = np.where(
            is_x[:, None],
            np.where(
                np.arange(d)[None, :] == routed[:, None],
                p_fire_x_routed[None, :],
                p_d,
            ),
            p_fire_z[None, :],
        )
        fire = u_det < p_honest

        if static_blinded is not None:
            fire = np.where(
                is_x[:, None], static_fire_x[None, :], static_fire_z[None, :]
            ) | (u_det < p_d)

        targets = None
        if attack is not None:
            u_attack = rng.random(m)
            attacked = u_attack < attack.attack_fraction
            targets = attack.targets(m, chunk, offset=chunk * params.chunk_rounds)
            routed_z = (
                np.arange(d)[None, :] == targets[:, None]
            ) * attack_intensity
            blinded_z = routed_z > thresholds[None, :]
            blinded_x = (attack_intensity / d) > thresholds
            blinded = np.where(is_x[:, None], blinded_x[None, :], blinded_z)
            blinded |= u_det < p_d
            fire = np.where(attacked[:, None], blinded, fire)

        k = fire.sum(axis=1)
        hit_correct = fire[np.arange(m), correct]
        x_mask = is_x
        x_correct += int(np.sum(x_mask & (k == 1) & hit_correct))
        x_wrong += int(np.sum(x_mask & (k == 1) & ~hit_correct))
        x_multi += int(np.sum(x_mask & (k >= 2)))
        x_none += int(np.sum(x_mask & (k == 0)))
        n_x += int(np.sum(x_mask))

        z_mask = ~x_mask
        n_z += int(np.sum(z_mask))
        z_none += int(np.sum(z_mask & (k == 0)))
        z_multi += int(np.sum(z_mask & (k >= 2)))
        single = z_mask & (k == 1)
        symbols = np.argmax(fire[single], axis=1).astype(np.int16)
        z_single_by_det += np.bincount(symbols, minlength=d).astype(np.int64)
        z_total_by_det += fire[z_mask].sum(axis=0)
        raw_chunks.append(symbols)
        if eve_chunks is not None:
            eve_chunks.append(targets[single].astype(np.int16))

    tally = TallySummary(
        treatment=params.treatment,
        rounds=params.rounds,
        dimension=d,
        n_x=n_x,
        n_z=n_z,
        x_correct=x_correct,
        x_wrong_single=x_wrong,
        x_multi=x_multi,
        x_none=x_none,
        z_single_by_detector=z_single_by_det,
        z_multi=z_multi,
        z_none=z_none,
        z_total_by_detector=z_total_by_det,
        raw_symbols=np.concatenate(raw_chunks) if raw_chunks else np.zeros(0, np.int16),
        eve_symbols=(
            np.concatenate(eve_chunks) if eve_chunks else None
        ),
    )
    tally.check()
    return tally


def seed_cost(
    rounds: float, n_x: float, dimension: int, treatment: str = TREATMENT_BLINDING_AWARE
) -> int:
    """Random bits consumed by basis choice (and, blinding-aware, by the
    per-round detector assignment): ceil(n_x * (log2 N + log2 d)), the
    legacy protocol paying only the basis-choice term."""
    validate_treatment(treatment)
    if n_x < 0 or n_x > rounds:
        raise ConfigError("n_x must lie in [0, rounds]")
    if n_x == 0:
        return 0
    per_round = math.log2(rounds)
    if treatment == TREATMENT_BLINDING_AWARE:
        per_round += math.log2(dimension)
    return math.ceil(n_x * per_round)


def raw_bits(tally: TallySummary, dimension: Optional[int] = None) -> str:
    """Serialize the ordered generation-basis single-click symbols to bits.

    Requires a power-of-two dimension; each symbol contributes
    log2(d) bits, most significant first.
    """
    d = tally.dimension if dimension is None else dimension
    return bits_to_str(symbols_to_bits(tally.raw_symbols, d))
