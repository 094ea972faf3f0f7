"""Closed-form expected tallies and rates for coherent-state input.

For a coherent pulse of mean photon number mu seen through total
transmittance eta (channel and detection losses combined, mu' = mu * eta),
splitting and loss commute, so every click probability has a closed form.
With qbar = 1 - p_d and t = exp(-mu'):

* single click on the port that received the pulse (test basis):
  A = qbar^(d-1) * (1 - qbar * t)
* single click on a specific unlit port: B = p_d * qbar^(d-1) * t
* no click at all: C = qbar^d * t
* single click on a specific detector under the uniform 1/d split
  (generation basis): s = qbar^(d-1) * (exp(-(d-1) mu'/d) - qbar * t)

The misalignment probability e_d reroutes the test-basis pulse to a wrong
port.  These yields Poisson-average the per-photon-number yields exposed
by :func:`yields_photon_number`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .analysis import (
    DEFAULT_GAMMA_METHOD,
    AnalysisReport,
    SecurityParams,
    key_length,
)
from .detectors import (
    DEFAULT_MISALIGNMENT,
    TREATMENT_BLINDING_AWARE,
    TREATMENT_LEGACY,
    validate_treatment,
)
from .errors import (
    ConfigError,
    InsufficientTestDataError,
    NoExtractableRoundsError,
    UnsupportedDimensionError,
)
from .session import TallySummary

# Calibration of the demonstration system: each detector clicks at about
# 4.15 MHz out of 5 MHz gating when the intensity at the measurement box is
# 9.3 photons per pulse, so 1 - exp(-mu * eta / 2) = 0.83; dark counts
# average (24 + 5)/2 cps at the same gating rate.
CALIBRATED_TRANSMITTANCE = 2.0 * math.log(1.0 / 0.17) / 9.3
CALIBRATED_DARK_COUNT = 14.5 / 5e6
EXPERIMENT_ROUNDS = 1_000_000_000
EXPERIMENT_P_X = 5.0e-4


@dataclass(frozen=True)
class ChannelModel:
    """Source intensity plus everything that eats photons on the way."""

    mean_photons: float
    transmittance: float
    dark_count: float = 0.0
    misalignment: float = DEFAULT_MISALIGNMENT
    dimension: int = 2

    def __post_init__(self) -> None:
        if self.mean_photons < 0:
            raise ConfigError("mean photon number must be non-negative")
        if not 0.0 <= self.transmittance <= 1.0:
            raise ConfigError("transmittance must lie in [0, 1]")
        if not 0.0 <= self.dark_count < 1.0:
            raise ConfigError("dark count probability must lie in [0, 1)")
        if not 0.0 <= self.misalignment < 1.0:
            raise ConfigError("misalignment must lie in [0, 1)")
        if self.dimension < 2:
            raise ConfigError("dimension must be at least 2")

    @property
    def mu_eff(self) -> float:
        return self.mean_photons * self.transmittance

    def with_loss_db(self, loss_db: float) -> "ChannelModel":
        return replace(
            self, transmittance=self.transmittance * 10.0 ** (-loss_db / 10.0)
        )


def experiment_model(mean_photons: float = 9.3) -> ChannelModel:
    """Two-detector model calibrated to the demonstration system."""
    return ChannelModel(
        mean_photons=mean_photons,
        transmittance=CALIBRATED_TRANSMITTANCE,
        dark_count=CALIBRATED_DARK_COUNT,
        misalignment=DEFAULT_MISALIGNMENT,
        dimension=2,
    )


def yields_photon_number(n: int, model: ChannelModel) -> tuple[float, float]:
    """Click yields for an exactly-n-photon pulse.

    Returns (test-basis correct-single-click yield, generation-basis
    single-click yield on one specific detector).
    """
    if n < 0:
        raise ConfigError("photon number must be non-negative")
    d = model.dimension
    qbar = 1.0 - model.dark_count
    eta = model.transmittance
    y_x = qbar ** (d - 1) - qbar**d * (1.0 - eta) ** n
    y_z = qbar ** (d - 1) * (
        (1.0 - (d - 1) * eta / d) ** n - (1.0 - eta) ** n * qbar
    )
    return y_x, y_z


def _click_probabilities(model: ChannelModel) -> dict:
    d = model.dimension
    qbar = 1.0 - model.dark_count
    t = math.exp(-model.mu_eff)
    heavy_single = qbar ** (d - 1) * (1.0 - qbar * t)
    light_single = model.dark_count * qbar ** (d - 1) * t
    no_click = qbar**d * t
    z_single_each = qbar ** (d - 1) * (
        math.exp(-(d - 1) * model.mu_eff / d) - qbar * t
    )
    z_detector_total = 1.0 - qbar * math.exp(-model.mu_eff / d)
    return {
        "heavy_single": heavy_single,
        "light_single": light_single,
        "no_click": no_click,
        "z_single_each": z_single_each,
        "z_detector_total": z_detector_total,
    }


def gain_x_correct(model: ChannelModel) -> float:
    """Poisson-averaged correct-single-click gain in the test basis."""
    return _click_probabilities(model)["heavy_single"]


def gain_z_single(model: ChannelModel) -> float:
    """Poisson-averaged single-click gain in the generation basis (all d)."""
    return model.dimension * _click_probabilities(model)["z_single_each"]


def _expected_physical_tally(
    model: ChannelModel, rounds: float, p_x: float, treatment: str
) -> TallySummary:
    validate_treatment(treatment)
    if not 0.0 < p_x < 1.0:
        raise ConfigError("p_x must lie strictly between 0 and 1")
    d = model.dimension
    p = _click_probabilities(model)
    e_d = model.misalignment
    n_x = rounds * p_x
    n_z = rounds - n_x

    # Misalignment reroutes the pulse, making the correct port a dark-count
    # only "light" port; the e_d * light_single cross term keeps this exact.
    x_correct = (1.0 - e_d) * p["heavy_single"] + e_d * p["light_single"]
    x_wrong = (1.0 - e_d) * (d - 1) * p["light_single"] + e_d * (
        p["heavy_single"] + (d - 2) * p["light_single"]
    )
    x_none = p["no_click"]
    x_multi = 1.0 - x_correct - x_wrong - x_none

    z_single_each = p["z_single_each"]
    z_none = p["no_click"]
    z_multi = 1.0 - d * z_single_each - z_none

    return TallySummary(
        treatment=treatment,
        rounds=rounds,
        dimension=d,
        n_x=n_x,
        n_z=n_z,
        x_correct=n_x * x_correct,
        x_wrong_single=n_x * x_wrong,
        x_multi=n_x * x_multi,
        x_none=n_x * x_none,
        z_single_by_detector=np.full(d, n_z * z_single_each),
        z_multi=n_z * z_multi,
        z_none=n_z * z_none,
        z_total_by_detector=np.full(d, n_z * p["z_detector_total"]),
    )


def expected_tallies_new(
    model: ChannelModel, rounds: float, p_x: float
) -> TallySummary:
    """Expected tallies under the blinding-aware treatment."""
    return _expected_physical_tally(model, rounds, p_x, TREATMENT_BLINDING_AWARE)


def expected_tallies_legacy(
    model: ChannelModel, rounds: float, p_x: float
) -> TallySummary:
    """Expected tallies under the legacy treatment (two detectors only)."""
    if model.dimension != 2:
        raise UnsupportedDimensionError(
            "the legacy closed-form model is stated for two detectors"
        )
    return _expected_physical_tally(model, rounds, p_x, TREATMENT_LEGACY)


def expected_rate(
    model: ChannelModel,
    rounds: float,
    p_x: float,
    sec: SecurityParams,
    treatment: str = TREATMENT_BLINDING_AWARE,
    asymptotic: bool = False,
    gamma_method: str = DEFAULT_GAMMA_METHOD,
) -> AnalysisReport:
    """Certified rate from the closed-form tallies (no simulation)."""
    if treatment == TREATMENT_LEGACY:
        tally = expected_tallies_legacy(model, rounds, p_x)
    else:
        tally = expected_tallies_new(model, rounds, p_x)
    return key_length(
        tally, sec, gamma_method=gamma_method, asymptotic=asymptotic
    )


@dataclass(frozen=True)
class OptimizationResult:
    mean_photons: float
    p_x: float
    rate: float
    report: Optional[AnalysisReport] = None


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(
    fn: Callable[[float], float], lo: float, hi: float, rel_tol: float
) -> tuple[float, float]:
    """Golden-section maximization on [lo, hi]; deterministic."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > rel_tol * max(abs(b), 1e-12):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    x = c if fc >= fd else d
    return x, max(fc, fd)


def optimize_params(
    model: ChannelModel,
    rounds: float,
    sec: SecurityParams,
    treatment: str = TREATMENT_BLINDING_AWARE,
    asymptotic: bool = False,
    mu_bounds: tuple[float, float] = (1e-2, 100.0),
    p_x_bounds: tuple[float, float] = (1e-6, 0.5),
    grid_points: int = 50,
    rel_tol: float = 1e-4,
    gamma_method: str = DEFAULT_GAMMA_METHOD,
) -> OptimizationResult:
    """Maximize the certified rate over source intensity and basis bias.

    Deterministic: a log-spaced grid scan (ties broken toward the smallest
    intensity, then the smallest p_x) followed by two alternating
    golden-section passes, one per coordinate.  A rate of zero is a valid
    outcome.
    """

    def rate_at(mu: float, p_x: float) -> float:
        try:
            report = expected_rate(
                replace(model, mean_photons=mu),
                rounds,
                p_x,
                sec,
                treatment=treatment,
                asymptotic=asymptotic,
                gamma_method=gamma_method,
            )
        except (InsufficientTestDataError, NoExtractableRoundsError):
            return 0.0
        return report.rate

    mu_grid = np.geomspace(mu_bounds[0], mu_bounds[1], grid_points)
    px_grid = np.geomspace(p_x_bounds[0], p_x_bounds[1], grid_points)
    best_mu, best_px, best_rate = float(mu_grid[0]), float(px_grid[0]), -1.0
    for mu in mu_grid:
        for px in px_grid:
            r = rate_at(float(mu), float(px))
            if r > best_rate:
                best_mu, best_px, best_rate = float(mu), float(px), r

    mu_step = (mu_bounds[1] / mu_bounds[0]) ** (1.0 / (grid_points - 1))
    px_step = (p_x_bounds[1] / p_x_bounds[0]) ** (1.0 / (grid_points - 1))
    for _ in range(2):
        lo = max(mu_bounds[0], best_mu / mu_step)
        hi = min(mu_bounds[1], best_mu * mu_step)
        mu, r = _golden_max(lambda m: rate_at(m, best_px), lo, hi, rel_tol)
        if r > best_rate:
            best_mu, best_rate = mu, r
        lo = max(p_x_bounds[0], best_px / px_step)
        hi = min(p_x_bounds[1], best_px * px_step)
        px, r = _golden_max(lambda p: rate_at(best_mu, p), lo, hi, rel_tol)
        if r > best_rate:
            best_px, best_rate = px, r

    report = None
    try:
        report = expected_rate(
            replace(model, mean_photons=best_mu),
            rounds,
            best_px,
            sec,
            treatment=treatment,
            asymptotic=asymptotic,
            gamma_method=gamma_method,
        )
    except (InsufficientTestDataError, NoExtractableRoundsError):
        pass
    return OptimizationResult(
        mean_photons=best_mu,
        p_x=best_px,
        rate=max(best_rate, 0.0),
        report=report,
    )


def intensity_curve(
    mu_values: Sequence[float],
    rounds: float = EXPERIMENT_ROUNDS,
    p_x: float = EXPERIMENT_P_X,
    sec: Optional[SecurityParams] = None,
    model: Optional[ChannelModel] = None,
    treatment: str = TREATMENT_BLINDING_AWARE,
    gamma_method: str = DEFAULT_GAMMA_METHOD,
) -> list[dict]:
    """Certified rate versus source intensity (experiment-calibrated)."""
    sec = sec or SecurityParams.calibrated()
    base = model or experiment_model()
    rows = []
    for mu in mu_values:
        report = expected_rate(
            replace(base, mean_photons=float(mu)),
            rounds,
            p_x,
            sec,
            treatment=treatment,
            gamma_method=gamma_method,
        )
        rows.append(
            {
                "mean_photons": float(mu),
                "rate": report.rate,
                "length": report.length,
                "x_error_rate": report.x_error_rate,
                "phase_error_upper": report.phase_error_upper,
            }
        )
    return rows


def dimension_curve(
    dimensions: Sequence[int],
    rounds: float = EXPERIMENT_ROUNDS,
    dark_count: float = 1e-5,
    asymptotic: bool = True,
    eps_sec: float = 1e-9,
    gamma_method: str = DEFAULT_GAMMA_METHOD,
) -> list[dict]:
    """Optimized rate versus measurement dimension (ideal detection)."""
    rows = []
    for d in dimensions:
        d = int(d)
        model = ChannelModel(
            mean_photons=1.0, transmittance=1.0, dark_count=dark_count, dimension=d
        )
        result = optimize_params(
            model,
            rounds,
            SecurityParams.ideal(d, eps_sec=eps_sec),
            asymptotic=asymptotic,
            gamma_method=gamma_method,
        )
        rows.append(
            {
                "dimension": d,
                "rate": result.rate,
                "best_mean_photons": result.mean_photons,
                "best_p_x": result.p_x,
            }
        )
    return rows


def loss_curve(
    loss_db_values: Sequence[float],
    rounds: float = EXPERIMENT_ROUNDS,
    p_x: float = EXPERIMENT_P_X,
    sec: Optional[SecurityParams] = None,
    model: Optional[ChannelModel] = None,
    gamma_method: str = DEFAULT_GAMMA_METHOD,
) -> list[dict]:
    """Certified rate versus channel loss.

    Three columns per row: fixed-intensity blinding-aware, optimal-intensity
    blinding-aware (intensity re-optimized at each loss), and the legacy
    treatment at the fixed intensity.
    """
    sec = sec or SecurityParams.calibrated()
    base = model or experiment_model()
    rows = []
    for loss in loss_db_values:
        lossy = base.with_loss_db(float(loss))

        def aware_rate(mu: float) -> float:
            try:
                return expected_rate(
                    replace(lossy, mean_photons=mu),
                    rounds,
                    p_x,
                    sec,
                    gamma_method=gamma_method,
                ).rate
            except (InsufficientTestDataError, NoExtractableRoundsError):
                return 0.0

        fixed = aware_rate(base.mean_photons)
        mu_grid = np.geomspace(1.0, 200.0, 40)
        seed_mu = float(mu_grid[np.argmax([aware_rate(float(m)) for m in mu_grid])])
        opt_mu, optimal = _golden_max(
            aware_rate, seed_mu / 1.2, min(seed_mu * 1.2, 200.0), 1e-4
        )
        try:
            legacy = expected_rate(
                lossy,
                rounds,
                p_x,
                sec,
                treatment=TREATMENT_LEGACY,
                gamma_method=gamma_method,
            ).rate
        except (InsufficientTestDataError, NoExtractableRoundsError):
            legacy = 0.0
        rows.append(
            {
                "loss_db": float(loss),
                "rate_fixed": fixed,
                "rate_optimal": max(optimal, fixed),
                "optimal_mean_photons": opt_mu,
                "rate_legacy_fixed": legacy,
            }
        )
    return rows
