import numpy as np
import pytest

from siqrng.attacks import AttackConfig, craft_attack_pulse, feasible_intensity_window
from siqrng.detectors import DetectorBank, measure_pulse
from siqrng.errors import ConfigError, InfeasibleAttackError


def test_balanced_window_spec_example():
    config = AttackConfig(strategy="balanced", thresholds=(1.0, 1.0))
    assert feasible_intensity_window(config, 2) == (1.0, 2.0)


def test_unbalanced_window_spec_example():
    config = AttackConfig(strategy="unbalanced", thresholds=(1.0, 1.8))
    lo, hi = feasible_intensity_window(config, 2)
    assert (lo, hi) == (2.0, pytest.approx(3.6))


def test_unbalanced_premise_violation_raises():
    config = AttackConfig(strategy="unbalanced", thresholds=(1.0, 0.9))
    with pytest.raises(InfeasibleAttackError):
        feasible_intensity_window(config, 2)


def test_balanced_premise_requires_equal_thresholds():
    config = AttackConfig(strategy="balanced", thresholds=(1.0, 1.1))
    with pytest.raises(InfeasibleAttackError):
        feasible_intensity_window(config, 2)


def test_d_dimensional_window_general_form():
    config = AttackConfig(
        strategy="d_dimensional", thresholds=(0.5, 1.2, 1.0), guessed_plus_index=0
    )
    lo, hi = feasible_intensity_window(config, 3)
    # lo = max(3 * 0.5, 1.2), hi = 3 * second smallest (1.0)
    assert (lo, hi) == (1.5, 3.0)


def test_d_dimensional_tie_at_smallest_is_infeasible():
    config = AttackConfig(
        strategy="d_dimensional", thresholds=(0.5, 0.5, 1.0), guessed_plus_index=0
    )
    with pytest.raises(InfeasibleAttackError):
        feasible_intensity_window(config, 3)


def test_randomized_empty_windows_raise(rng):
    # A large non-guessed threshold squeezes lo above hi = d * second-min.
    for _ in range(50):
        d = int(rng.integers(3, 6))
        second = float(rng.uniform(0.5, 1.0))
        smallest = second * float(rng.uniform(0.3, 0.95))
        rest = [float(rng.uniform(d * second, d * second + 3.0)) for _ in range(d - 2)]
        config = AttackConfig(
            strategy="d_dimensional",
            thresholds=tuple([smallest, second] + rest),
            guessed_plus_index=0,
        )
        with pytest.raises(InfeasibleAttackError):
            feasible_intensity_window(config, d)


def test_intensity_at_window_lower_bound_rejected():
    config = AttackConfig(strategy="balanced", thresholds=(1.0, 1.0))
    with pytest.raises(InfeasibleAttackError):
        craft_attack_pulse(config, 0, 1.0)


def test_crafted_pulse_spec_examples(rng):
    bank = DetectorBank(dimension=2, thresholds=(1.0, 1.0))
    config = AttackConfig(strategy="balanced", thresholds=(1.0, 1.0))
    pulse = craft_attack_pulse(config, 0, 1.6)
    assert measure_pulse(pulse, bank, "Z", [0, 1], rng).fired == {0}
    assert measure_pulse(pulse, bank, "X", [0, 1], rng).fired == frozenset()

    bank = DetectorBank(dimension=2, thresholds=(1.0, 1.8))
    config = AttackConfig(strategy="unbalanced", thresholds=(1.0, 1.8))
    pulse = craft_attack_pulse(config, 1, 3.0)
    assert measure_pulse(pulse, bank, "Z", [0, 1], rng).fired == {1}
    assert measure_pulse(pulse, bank, "X", [0, 1], rng).fired == {0}


@pytest.mark.parametrize("d", [2, 3, 4])
def test_balanced_attack_controls_z_and_silences_x(d, rng):
    level = 0.8
    config = AttackConfig(strategy="balanced", thresholds=(level,) * d)
    bank = DetectorBank(dimension=d, thresholds=(level,) * d)
    lo, hi = feasible_intensity_window(config, d)
    assignment = list(range(d))
    for intensity in np.linspace(lo, hi, 9)[1:]:
        for target in range(d):
            pulse = craft_attack_pulse(config, target, float(intensity))
            assert measure_pulse(pulse, bank, "Z", assignment, rng).fired == {target}
            assert measure_pulse(pulse, bank, "X", assignment, rng).fired == frozenset()


def test_unbalanced_attack_always_fires_smallest_threshold_in_x(rng):
    thresholds = (0.7, 1.1)
    config = AttackConfig(strategy="unbalanced", thresholds=thresholds)
    bank = DetectorBank(dimension=2, thresholds=thresholds)
    lo, hi = feasible_intensity_window(config, 2)
    for intensity in np.linspace(lo, hi, 7)[1:]:
        for target in range(2):
            pulse = craft_attack_pulse(config, target, float(intensity))
            assert measure_pulse(pulse, bank, "Z", [0, 1], rng).fired == {target}
            assert measure_pulse(pulse, bank, "X", [0, 1], rng).fired == {0}


def test_targets_stream_is_reproducible_and_in_range():
    config = AttackConfig(strategy="balanced", thresholds=(1.0, 1.0), eve_seed=99)
    a = config.targets(1000, chunk_index=3)
    b = config.targets(1000, chunk_index=3)
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0, 1}


def test_explicit_target_sequence_is_used_and_bounded():
    config = AttackConfig(
        strategy="balanced", thresholds=(1.0, 1.0), target_sequence=(0, 1, 1, 0)
    )
    assert config.targets(4, 0).tolist() == [0, 1, 1, 0]
    with pytest.raises(ConfigError):
        config.targets(5, 0)
    with pytest.raises(ConfigError):
        AttackConfig(
            strategy="balanced", thresholds=(1.0, 1.0), target_sequence=(0, 2)
        )


def test_partial_attack_requires_honest_signal():
    with pytest.raises(ConfigError):
        AttackConfig(strategy="balanced", thresholds=(1.0, 1.0), attack_fraction=0.5)


def test_chosen_intensity_defaults_to_window_midpoint():
    config = AttackConfig(strategy="balanced", thresholds=(1.0, 1.0))
    assert config.chosen_intensity() == pytest.approx(1.5)
