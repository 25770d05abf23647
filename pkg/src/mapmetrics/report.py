"""Evaluation report: typed container, JSON schema, and file writers.

Metric absences are explicit ``None`` values and serialize as JSON
nulls, never as missing keys. Floats round-trip exactly (shortest
round-trip decimal form).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

__all__ = [
    "EvaluationReport",
    "MetricValues",
    "REPORT_SCHEMA",
    "ReportConfig",
    "StageRuntimes",
    "read_report",
    "write_cdf_csv",
    "write_report",
    "write_voxel_csv",
]


def _number_or_null(minimum=None, maximum=None) -> dict:
    out: dict = {"type": ["number", "null"]}
    if minimum is not None:
        out["minimum"] = minimum
    if maximum is not None:
        out["maximum"] = maximum
    return out


REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["config", "metrics", "cdf", "runtimes_s"],
    "additionalProperties": False,
    "properties": {
        "config": {
            "type": "object",
            "required": ["tau_m", "voxel_size_m", "mme_radius_m",
                         "min_voxel_points", "seed"],
            "additionalProperties": False,
            "properties": {
                "tau_m": {"type": "number", "exclusiveMinimum": 0},
                "voxel_size_m": {"type": "number", "exclusiveMinimum": 0},
                "mme_radius_m": {"type": "number", "exclusiveMinimum": 0},
                "min_voxel_points": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer"},
            },
        },
        "metrics": {
            "type": "object",
            "required": ["ac_cm", "com", "cd_cm", "mme", "awd_cm", "scs",
                         "w_bound_cm"],
            "additionalProperties": False,
            "properties": {
                "ac_cm": _number_or_null(minimum=0),
                "com": _number_or_null(minimum=0, maximum=1),
                "cd_cm": _number_or_null(minimum=0),
                "mme": _number_or_null(),
                "awd_cm": _number_or_null(minimum=0),
                "scs": _number_or_null(minimum=0),
                "w_bound_cm": _number_or_null(minimum=0),
            },
        },
        "cdf": {
            "type": "array",
            "items": {
                "type": "array",
                "minItems": 2,
                "maxItems": 2,
                "items": {"type": "number"},
            },
        },
        "runtimes_s": {
            "type": "object",
            "required": ["registration", "classic_metrics", "voxelization",
                         "awd", "scs", "mme"],
            "additionalProperties": False,
            "properties": {
                "registration": _number_or_null(minimum=0),
                "classic_metrics": _number_or_null(minimum=0),
                "voxelization": _number_or_null(minimum=0),
                "awd": _number_or_null(minimum=0),
                "scs": _number_or_null(minimum=0),
                "mme": _number_or_null(minimum=0),
            },
        },
    },
}


@dataclass(frozen=True)
class ReportConfig:
    tau_m: float
    voxel_size_m: float
    mme_radius_m: float
    min_voxel_points: int
    seed: int


@dataclass(frozen=True)
class MetricValues:
    ac_cm: float | None
    com: float | None
    cd_cm: float | None
    mme: float | None
    awd_cm: float | None
    scs: float | None
    w_bound_cm: float | None


@dataclass(frozen=True)
class StageRuntimes:
    registration: float | None
    classic_metrics: float | None
    voxelization: float | None
    awd: float | None
    scs: float | None
    mme: float | None


@dataclass(frozen=True)
class EvaluationReport:
    """All metric values, CDF samples, and per-stage wall times."""

    config: ReportConfig
    metrics: MetricValues
    cdf: tuple[tuple[float, float], ...]
    runtimes_s: StageRuntimes

    def __post_init__(self) -> None:
        m = self.metrics
        cdf = tuple((float(w), float(frac)) for w, frac in self.cdf)
        object.__setattr__(self, "cdf", cdf)
        for name in ("ac_cm", "cd_cm", "awd_cm", "scs", "w_bound_cm"):
            v = getattr(m, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if m.com is not None and not 0.0 <= m.com <= 1.0:
            raise ValueError(f"com must lie in [0, 1], got {m.com}")
        if cdf:
            ws = [w for w, _ in cdf]
            fs = [frac for _, frac in cdf]
            if any(b <= a for a, b in zip(ws, ws[1:])):
                raise ValueError("cdf sample values must be strictly increasing")
            if any(b < a for a, b in zip(fs, fs[1:])):
                raise ValueError("cdf fractions must be nondecreasing")
            if fs[-1] != 1.0:
                raise ValueError(f"final cdf fraction must be 1.0, got {fs[-1]}")

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "metrics": asdict(self.metrics),
            "cdf": [[w, frac] for w, frac in self.cdf],
            "runtimes_s": asdict(self.runtimes_s),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationReport":
        return cls(
            config=ReportConfig(**data["config"]),
            metrics=MetricValues(**data["metrics"]),
            cdf=tuple((w, frac) for w, frac in data["cdf"]),
            runtimes_s=StageRuntimes(**data["runtimes_s"]),
        )


def write_report(report: EvaluationReport, out_dir, field=None) -> None:
    """Write report.json and voxel_errors.csv into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="ascii") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    write_voxel_csv(field, out / "voxel_errors.csv")


def read_report(path) -> EvaluationReport:
    with open(path, encoding="ascii") as f:
        return EvaluationReport.from_dict(json.load(f))


def write_voxel_csv(field, path) -> None:
    """One row per corresponding voxel: ix,iy,iz,w_cm,n_gt,n_est."""
    with open(path, "w", newline="", encoding="ascii") as f:
        writer = csv.writer(f)
        writer.writerow(["ix", "iy", "iz", "w_cm", "n_gt", "n_est"])
        if field is None:
            return
        for (ix, iy, iz), w, ng, ne in zip(
            field.indices, field.distances, field.gt_counts, field.est_counts
        ):
            writer.writerow([int(ix), int(iy), int(iz),
                             f"{100.0 * float(w):.17g}", int(ng), int(ne)])


def write_cdf_csv(cdf, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as f:
        writer = csv.writer(f)
        writer.writerow(["w_cm", "fraction"])
        for w, frac in cdf:
            writer.writerow([f"{float(w):.17g}", f"{float(frac):.17g}"])
