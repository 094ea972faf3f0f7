import math

import numpy as np
import pytest
from scipy.stats import poisson

from siqrng.analysis import SecurityParams
from siqrng.errors import NoExtractableRoundsError, UnsupportedDimensionError
from siqrng.rates import (
    ChannelModel,
    expected_rate,
    expected_tallies_legacy,
    expected_tallies_new,
    experiment_model,
    gain_x_correct,
    gain_z_single,
    optimize_params,
    yields_photon_number,
)


def _model(mu=4.1, eta=1.0, p_d=0.0, e_d=0.004, d=2):
    return ChannelModel(
        mean_photons=mu,
        transmittance=eta,
        dark_count=p_d,
        misalignment=e_d,
        dimension=d,
    )


def test_yields_spec_examples():
    assert yields_photon_number(0, _model(p_d=0.0)) == (0.0, 0.0)
    y_x, y_z = yields_photon_number(1, _model(mu=1.0, eta=1.0, p_d=0.0, d=2))
    assert y_x == pytest.approx(1.0)
    assert y_z == pytest.approx(0.5)
    y_x, _ = yields_photon_number(800, _model(eta=0.5, p_d=0.0))
    assert y_x == pytest.approx(1.0, abs=1e-12)


def test_gain_spec_examples():
    model = _model(mu=4.1, eta=1.0, p_d=0.0)
    assert gain_x_correct(model) == pytest.approx(1 - math.exp(-4.1), abs=1e-9)
    assert gain_x_correct(model) == pytest.approx(0.98343, abs=1e-5)
    expected_z = 2 * math.exp(-2.05) - 2 * math.exp(-4.1)
    assert gain_z_single(model) == pytest.approx(expected_z, abs=1e-9)
    assert gain_z_single(model) == pytest.approx(0.22434, abs=1e-4)


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("p_d", [0.0, 1e-3])
def test_gains_are_poisson_averages_of_yields(d, p_d):
    # Independent oracle: sum the per-photon-number yields against the
    # Poisson distribution, truncating once the tail mass drops below 1e-12.
    for mu_source in (0.3, 2.0, 8.0, 20.0):
        model = _model(mu=mu_source, eta=0.7, p_d=p_d, d=d)
        cutoff = int(poisson.isf(1e-13, model.mean_photons)) + 2
        weights = poisson.pmf(np.arange(cutoff), model.mean_photons)
        y = np.array(
            [yields_photon_number(n, model) for n in range(cutoff)]
        )
        q_x = float(weights @ y[:, 0])
        q_z = model.dimension * float(weights @ y[:, 1])
        assert q_x == pytest.approx(gain_x_correct(model), abs=1e-10)
        assert q_z == pytest.approx(gain_z_single(model), abs=1e-10)


def test_expected_tallies_dark_source():
    tally = expected_tallies_new(_model(mu=0.0, p_d=0.0), 1_000_000, 0.2)
    assert tally.n_x_error == pytest.approx(tally.n_x)
    assert tally.n_z_single == 0.0


def test_expected_tallies_formula_point():
    n, p_x = 1_000_000, 0.2
    tally = expected_tallies_new(_model(), n, p_x)
    q_x = 1 - math.exp(-4.1)
    q_z = 2 * math.exp(-2.05) - 2 * math.exp(-4.1)
    assert tally.n_x == pytest.approx(n * p_x)
    # At zero dark counts the test-basis error expectation is exactly
    # n_x * (1 - (1 - e_d) * q_x).
    assert tally.n_x_error == pytest.approx(n * p_x * (1 - 0.996 * q_x))
    assert tally.n_z_single == pytest.approx(n * (1 - p_x) * q_z)
    assert np.allclose(
        tally.z_single_by_detector, n * (1 - p_x) * q_z / 2
    )


def test_expected_tallies_legacy_examples():
    tally = expected_tallies_legacy(_model(e_d=0.0), 10**6, 0.3)
    assert tally.x_error_rate == pytest.approx(0.0, abs=1e-15)

    tally = expected_tallies_legacy(_model(), 10**6, 0.3)
    q_click = 1 - math.exp(-4.1)
    assert tally.n_x_tested / tally.n_x == pytest.approx(q_click, abs=1e-9)
    assert tally.x_error_rate == pytest.approx(0.004, abs=1e-6)

    bright = expected_tallies_legacy(_model(mu=80.0), 10**6, 0.3)
    assert bright.n_z_single / bright.n_z == pytest.approx(0.0, abs=1e-12)


def test_expected_tallies_legacy_requires_two_detectors():
    with pytest.raises(UnsupportedDimensionError):
        expected_tallies_legacy(_model(d=3), 10**6, 0.1)


def test_legacy_click_gains_match_in_both_bases():
    # The total-click gain is the same formula in either basis.
    tally = expected_tallies_legacy(_model(p_d=1e-3), 10**6, 0.25)
    x_click = tally.n_x_tested / tally.n_x
    z_click = tally.n_z_effective / tally.n_z
    assert x_click == pytest.approx(z_click, rel=1e-12)


def test_expected_rate_zero_light_with_dark_counts_is_zero():
    report = expected_rate(
        _model(mu=0.0, p_d=1e-5), 10**9, 1e-3, SecurityParams.ideal(2)
    )
    assert report.rate == 0.0


def test_expected_rate_zero_light_without_dark_counts_raises():
    with pytest.raises(NoExtractableRoundsError):
        expected_rate(_model(mu=0.0, p_d=0.0), 10**9, 1e-3, SecurityParams.ideal(2))


def test_fixed_intensity_dies_under_extra_loss():
    # An intensity tuned for the lossless channel certifies nothing once the
    # channel gets 10 dB worse.
    model = experiment_model(mean_photons=9.3)
    sec = SecurityParams.calibrated()
    assert expected_rate(model, 1e9, 5e-4, sec).rate > 0.08
    lossy = model.with_loss_db(10.0)
    assert expected_rate(lossy, 1e9, 5e-4, sec).rate == 0.0


def test_optimizer_beats_random_feasible_points(rng):
    model = _model(mu=1.0, eta=1.0, p_d=1e-5)
    sec = SecurityParams.ideal(2)
    result = optimize_params(model, 10**8, sec)
    assert result.rate > 0
    from dataclasses import replace

    from siqrng.rates import expected_rate as rate_fn

    for _ in range(20):
        mu = float(rng.uniform(0.5, 30.0))
        p_x = float(10 ** rng.uniform(-5, -0.31))
        try:
            rate = rate_fn(
                replace(model, mean_photons=mu), 10**8, p_x, sec
            ).rate
        except Exception:
            rate = 0.0
        assert result.rate >= rate - 1e-9


def test_optimizer_zero_rate_is_valid_outcome():
    swamped = _model(mu=1.0, eta=1.0, p_d=0.4)
    result = optimize_params(
        swamped, 10**6, SecurityParams.ideal(2), grid_points=12
    )
    assert result.rate == 0.0


def test_optimizer_is_deterministic():
    model = _model(mu=1.0, eta=1.0, p_d=1e-5)
    sec = SecurityParams.ideal(2)
    a = optimize_params(model, 10**7, sec, grid_points=20)
    b = optimize_params(model, 10**7, sec, grid_points=20)
    assert (a.mean_photons, a.p_x, a.rate) == (b.mean_photons, b.p_x, b.rate)
