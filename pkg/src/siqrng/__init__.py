"""Source-independent quantum random number generation, hardened against
detector blinding by counting no-click test rounds as errors.

The package simulates protocol sessions against honest light and blinding
attacks, certifies extractable randomness with a finite-size analysis,
extracts it with Toeplitz hashing, and checks the output with a battery of
statistical tests.  See the ``siqrng`` CLI for the end-to-end pipeline.
"""

__version__ = "0.1.0"

from .analysis import (
    AnalysisReport,
    SecurityParams,
    entropy_hd,
    gamma_bound,
    key_length,
    phase_error_upper,
    secrecy_budget,
)
from .attacks import AttackConfig, craft_attack_pulse, feasible_intensity_window
from .battery import BatteryConfig, TestResult, run_battery
from .detectors import (
    Category,
    ClickPattern,
    DetectorBank,
    SignalSpec,
    classify_pattern,
    measure_pulse,
)
from .errors import SiqrngError
from .rates import (
    ChannelModel,
    expected_rate,
    expected_tallies_legacy,
    expected_tallies_new,
    experiment_model,
    optimize_params,
    yields_photon_number,
)
from .records import CountsRecord, analyze_record, ingest_counts
from .session import ProtocolParams, TallySummary, raw_bits, run_session, seed_cost
from .toeplitz import ToeplitzSpec, extract, plan_extraction

__all__ = [
    "AnalysisReport",
    "AttackConfig",
    "BatteryConfig",
    "Category",
    "ChannelModel",
    "ClickPattern",
    "CountsRecord",
    "DetectorBank",
    "ProtocolParams",
    "SecurityParams",
    "SignalSpec",
    "SiqrngError",
    "TallySummary",
    "TestResult",
    "ToeplitzSpec",
    "analyze_record",
    "classify_pattern",
    "craft_attack_pulse",
    "entropy_hd",
    "expected_rate",
    "expected_tallies_legacy",
    "expected_tallies_new",
    "experiment_model",
    "extract",
    "feasible_intensity_window",
    "gamma_bound",
    "ingest_counts",
    "key_length",
    "measure_pulse",
    "optimize_params",
    "phase_error_upper",
    "plan_extraction",
    "raw_bits",
    "run_battery",
    "run_session",
    "secrecy_budget",
    "seed_cost",
    "yields_photon_number",
]
