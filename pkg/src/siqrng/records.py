"""Ingestion and analysis of experimental count records.

A counts record is one JSON object per file holding the observed tallies of
a run: generation/test-basis round counts, per-detector total and single
click counts in the generation basis, the observed test-basis error rate
(or error count), an optional phase-error override for exact reproduction,
and the calibration (basis incompatibility, detection balance, secrecy
epsilon).  Records are the interchange format for the ``analyze`` command
and ship as fixtures mirroring the published experiment tables.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .analysis import (
    DEFAULT_EPS_SEC,
    DEFAULT_GAMMA_METHOD,
    AnalysisReport,
    SecurityParams,
    key_length,
)
from .detectors import TREATMENT_BLINDING_AWARE, TREATMENT_LEGACY, validate_treatment
from .errors import RecordError, UnsupportedDimensionError
from .session import TallySummary

# Tolerance for reconciling a quoted error rate against an error count:
# published rates carry about four significant digits.
_RATE_QUANTUM = 5e-4


@dataclass(frozen=True)
class CountsRecord:
    """Validated counts for one run, as ingested from a record file."""

    label: str
    variant: str
    z_basis_rounds: int
    x_basis_rounds: int
    z_total_clicks: Tuple[int, ...]
    z_single_clicks: Tuple[int, ...]
    x_error_rate: Optional[float] = None
    x_error_count: Optional[int] = None
    x_clicked_rounds: Optional[int] = None
    phase_error_override: Optional[float] = None
    basis_incompatibility: float = 1.0
    detection_balance: float = 1.0
    eps_sec: float = DEFAULT_EPS_SEC
    mean_photons: Optional[float] = None
    channel_loss_db: Optional[float] = None

    @property
    def dimension(self) -> int:
        return len(self.z_total_clicks)

    @property
    def rounds(self) -> int:
        return self.z_basis_rounds + self.x_basis_rounds

    @property
    def n_z_single(self) -> int:
        return int(sum(self.z_single_clicks))

    @property
    def double_clicks(self) -> int:
        if self.dimension != 2:
            raise UnsupportedDimensionError(
                "multi-click counts are only derivable from totals for d = 2"
            )
        return self.z_total_clicks[0] - self.z_single_clicks[0]

    def resolved_error_rate(self) -> float:
        tested = self.x_clicked_rounds
        if tested is None:
            tested = self.x_basis_rounds
        if self.x_error_rate is not None:
            return float(self.x_error_rate)
        return self.x_error_count / tested if tested else 0.0


def _require(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise RecordError(f"field {field!r}: {message}")


def _validate_record(rec: CountsRecord) -> CountsRecord:
    validate_treatment(rec.variant)
    d = rec.dimension
    _require(d >= 2, "z_total_clicks", "need at least two detectors")
    _require(
        len(rec.z_single_clicks) == d,
        "z_single_clicks",
        f"expected {d} entries to match z_total_clicks",
    )
    _require(rec.z_basis_rounds >= 0, "z_basis_rounds", "must be non-negative")
    _require(rec.x_basis_rounds >= 0, "x_basis_rounds", "must be non-negative")
    for i, (total, single) in enumerate(zip(rec.z_total_clicks, rec.z_single_clicks)):
        _require(total >= 0 and single >= 0, "z_total_clicks", "counts non-negative")
        _require(
            single <= total,
            "z_single_clicks",
            f"detector {i}: single clicks {single} exceed total clicks {total}",
        )
        _require(
            total <= rec.z_basis_rounds,
            "z_total_clicks",
            f"detector {i}: total clicks {total} exceed z_basis_rounds",
        )
    _require(
        rec.n_z_single <= rec.z_basis_rounds,
        "z_single_clicks",
        f"sum of singles {rec.n_z_single} exceeds z_basis_rounds "
        f"{rec.z_basis_rounds}",
    )
    if d == 2:
        doubles = [t - s for t, s in zip(rec.z_total_clicks, rec.z_single_clicks)]
        _require(
            doubles[0] == doubles[1],
            "z_total_clicks",
            "per-detector totals imply inconsistent double-click counts "
            f"({doubles[0]} vs {doubles[1]})",
        )
        _require(
            rec.n_z_single + doubles[0] <= rec.z_basis_rounds,
            "z_total_clicks",
            "clicked rounds exceed z_basis_rounds",
        )

    _require(
        rec.x_error_rate is not None or rec.x_error_count is not None,
        "x_error_rate",
        "record needs x_error_rate or x_error_count",
    )
    if rec.x_error_rate is not None:
        _require(
            0.0 <= rec.x_error_rate <= 1.0, "x_error_rate", "must lie in [0, 1]"
        )
    tested = rec.x_clicked_rounds
    if tested is not None:
        _require(
            0 <= tested <= rec.x_basis_rounds,
            "x_clicked_rounds",
            "must lie in [0, x_basis_rounds]",
        )
    else:
        tested = rec.x_basis_rounds
    if rec.x_error_count is not None:
        _require(
            0 <= rec.x_error_count <= tested,
            "x_error_count",
            "must lie in [0, tested rounds]",
        )
        if rec.x_error_rate is not None:
            drift = abs(rec.x_error_count - rec.x_error_rate * tested)
            _require(
                drift <= max(1.0, _RATE_QUANTUM * tested),
                "x_error_count",
                f"disagrees with x_error_rate beyond rounding ({drift:.1f} rounds)",
            )
    if rec.phase_error_override is not None:
        _require(
            0.0 <= rec.phase_error_override <= 1.0,
            "phase_error_override",
            "must lie in [0, 1]",
        )
    _require(
        rec.basis_incompatibility > 0,
        "basis_incompatibility",
        "must be positive",
    )
    _require(
        0.0 < rec.detection_balance <= 1.0,
        "detection_balance",
        "must lie in (0, 1]",
    )
    _require(0.0 < rec.eps_sec < 1.0, "eps_sec", "must lie in (0, 1)")
    return rec


_INT_FIELDS = ("z_basis_rounds", "x_basis_rounds")
_OPTIONAL_FIELDS = {
    "x_error_rate": float,
    "x_error_count": int,
    "x_clicked_rounds": int,
    "phase_error_override": float,
    "mean_photons": float,
    "channel_loss_db": float,
}


def record_from_dict(data: dict) -> CountsRecord:
    if not isinstance(data, dict):
        raise RecordError("record file must hold a single JSON object")
    try:
        kwargs = {
            "label": str(data.get("label", "")),
            "variant": data["variant"],
            "z_basis_rounds": int(data["z_basis_rounds"]),
            "x_basis_rounds": int(data["x_basis_rounds"]),
            "z_total_clicks": tuple(int(v) for v in data["z_total_clicks"]),
            "z_single_clicks": tuple(int(v) for v in data["z_single_clicks"]),
        }
    except KeyError as exc:
        raise RecordError(f"missing required field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise RecordError(f"malformed required field: {exc}") from exc
    for name, cast in _OPTIONAL_FIELDS.items():
        if data.get(name) is not None:
            try:
                kwargs[name] = cast(data[name])
            except (TypeError, ValueError) as exc:
                raise RecordError(f"field {name!r}: {exc}") from exc
    kwargs["basis_incompatibility"] = float(data.get("basis_incompatibility", 0) or 0)
    if kwargs["basis_incompatibility"] <= 0:
        raise RecordError("missing or non-positive field 'basis_incompatibility'")
    if data.get("detection_balance") is None:
        warnings.warn(
            "record omits detection_balance; assuming balanced detectors (1.0)",
            stacklevel=2,
        )
        kwargs["detection_balance"] = 1.0
    else:
        kwargs["detection_balance"] = float(data["detection_balance"])
    kwargs["eps_sec"] = float(data.get("eps_sec", DEFAULT_EPS_SEC))
    return _validate_record(CountsRecord(**kwargs))


def ingest_counts(path: str | Path) -> CountsRecord:
    """Load and validate a counts record file."""
    path = Path(path)
    if not path.exists():
        raise RecordError(f"record file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RecordError(f"record file {path} is not valid JSON: {exc}") from exc
    return record_from_dict(data)


def serialize_counts(record: CountsRecord) -> dict:
    """Inverse of ingestion; omits fields the record does not carry."""
    out = {
        "label": record.label,
        "variant": record.variant,
        "z_basis_rounds": record.z_basis_rounds,
        "x_basis_rounds": record.x_basis_rounds,
        "z_total_clicks": list(record.z_total_clicks),
        "z_single_clicks": list(record.z_single_clicks),
        "basis_incompatibility": record.basis_incompatibility,
        "detection_balance": record.detection_balance,
        "eps_sec": record.eps_sec,
    }
    for name in _OPTIONAL_FIELDS:
        value = getattr(record, name)
        if value is not None:
            out[name] = value
    return out


def record_to_tally(record: CountsRecord) -> TallySummary:
    """Reshape a counts record into the tally structure the analysis uses.

    The record does not break test-basis errors down by click pattern, so
    they are carried as wrong-single clicks; only their total enters the
    analysis.  Legacy records missing the clicked-round count fall back to
    treating every test window as a sample (the click breakdown was not
    published), which only affects the sampling penalty.
    """
    d = record.dimension
    n_x = record.x_basis_rounds
    legacy = record.variant == TREATMENT_LEGACY
    if legacy and d != 2:
        raise UnsupportedDimensionError("legacy records are two-detector only")

    tested = record.x_clicked_rounds if record.x_clicked_rounds is not None else n_x
    errors = (
        record.x_error_count
        if record.x_error_count is not None
        else record.resolved_error_rate() * tested
    )
    x_none = n_x - tested if legacy else 0
    x_wrong = errors if legacy else max(errors - x_none, 0)

    singles = np.asarray(record.z_single_clicks, dtype=float)
    if d == 2:
        z_multi: float = record.double_clicks
        z_none: float = record.z_basis_rounds - singles.sum() - z_multi
    else:
        z_multi = record.z_basis_rounds - singles.sum()
        z_none = 0.0

    return TallySummary(
        treatment=record.variant,
        rounds=record.rounds,
        dimension=d,
        n_x=n_x,
        n_z=record.z_basis_rounds,
        x_correct=tested - x_wrong if legacy else n_x - x_wrong,
        x_wrong_single=x_wrong,
        x_multi=0.0,
        x_none=x_none,
        z_single_by_detector=singles,
        z_multi=z_multi,
        z_none=z_none,
        z_total_by_detector=np.asarray(record.z_total_clicks, dtype=float),
    )


def tally_to_record(
    tally: TallySummary, sec: SecurityParams, label: str = ""
) -> CountsRecord:
    """Serialize a session tally as a counts record (the `analyze` input).

    Analyzing the record reproduces the session's own certification
    exactly: the error count and (for legacy) clicked-round count are
    carried verbatim.
    """
    legacy = tally.treatment == TREATMENT_LEGACY
    record = CountsRecord(
        label=label,
        variant=tally.treatment,
        z_basis_rounds=int(tally.n_z),
        x_basis_rounds=int(tally.n_x),
        z_total_clicks=tuple(int(v) for v in tally.z_total_by_detector),
        z_single_clicks=tuple(int(v) for v in tally.z_single_by_detector),
        x_error_count=int(tally.n_x_error),
        x_clicked_rounds=int(tally.n_x_tested) if legacy else None,
        basis_incompatibility=sec.incompatibility,
        detection_balance=sec.detection_balance,
        eps_sec=sec.eps_sec,
    )
    return _validate_record(record)


def security_params(record: CountsRecord) -> SecurityParams:
    return SecurityParams(
        incompatibility=record.basis_incompatibility,
        detection_balance=record.detection_balance,
        eps_sec=record.eps_sec,
    )


def analyze_record(
    record: CountsRecord,
    gamma_method: str = DEFAULT_GAMMA_METHOD,
    use_override: bool = True,
) -> AnalysisReport:
    """Certify a counts record.

    With ``use_override`` (default) a present phase-error override is used
    verbatim, reproducing the published analysis exactly; otherwise the
    full sampling-bound pipeline runs on the recorded error rate.
    """
    tally = record_to_tally(record)
    override = record.phase_error_override if use_override else None
    return key_length(
        tally,
        security_params(record),
        phi_override=override,
        gamma_method=gamma_method,
    )


def builtin_record_names() -> list[str]:
    """Names of the fixture records shipped with the package."""
    root = resources.files("siqrng") / "data" / "records"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def load_builtin_record(name: str) -> CountsRecord:
    root = resources.files("siqrng") / "data" / "records"
    candidate = root / (name if name.endswith(".json") else f"{name}.json")
    try:
        text = candidate.read_text()
    except FileNotFoundError as exc:
        raise RecordError(
            f"no builtin record {name!r}; available: {builtin_record_names()}"
        ) from exc
    return record_from_dict(json.loads(text))
