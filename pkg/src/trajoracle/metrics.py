"""Batch metrics for prediction records: MAE/RMSE in meters and the
nearest-road pixel-distance aggregates, plus deterministic report output."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .geo import GeoPoint, haversine


class EmptyBatch(ValueError):
    """Metrics need at least one usable record."""


@dataclass(frozen=True)
class PredictionRecord:
    traj_id: str
    truth: GeoPoint
    predicted: GeoPoint | None
    pixel_truth: tuple[float, float]
    pixel_pred: tuple[float, float] | None
    nearest_road_px: float | None
    canvas_px: int
    meters_per_pixel: float
    city: str | None = None

    def to_json(self) -> str:
        return json.dumps({
            "traj_id": self.traj_id,
            "truth": [self.truth.lat, self.truth.lon],
            "predicted": [self.predicted.lat, self.predicted.lon] if self.predicted else None,
            "pixel_truth": list(self.pixel_truth),
            "pixel_pred": list(self.pixel_pred) if self.pixel_pred else None,
            "nearest_road_px": self.nearest_road_px,
            "canvas_px": self.canvas_px,
            "meters_per_pixel": self.meters_per_pixel,
            "city": self.city,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PredictionRecord":
        d = json.loads(text)
        return cls(
            traj_id=d["traj_id"],
            truth=GeoPoint(*d["truth"]),
            predicted=GeoPoint(*d["predicted"]) if d.get("predicted") else None,
            pixel_truth=tuple(d["pixel_truth"]),
            pixel_pred=tuple(d["pixel_pred"]) if d.get("pixel_pred") else None,
            nearest_road_px=d.get("nearest_road_px"),
            canvas_px=d["canvas_px"],
            meters_per_pixel=d["meters_per_pixel"],
            city=d.get("city"),
        )


def _geo_errors(records, missing: str) -> list[float]:
    errors = []
    for rec in records:
        if rec.predicted is None:
            if missing == "penalize":
                half_diag_px = rec.canvas_px * math.sqrt(2) / 2
                errors.append(half_diag_px * rec.meters_per_pixel)
            continue
        errors.append(haversine(rec.predicted, rec.truth))
    if not errors:
        raise EmptyBatch("no usable records")
    return errors


def _road_values(records, missing: str) -> list[float]:
    values = []
    for rec in records:
        if rec.nearest_road_px is None:
            if missing == "penalize":
                values.append(rec.canvas_px * math.sqrt(2) / 2)
            continue
        values.append(rec.nearest_road_px)
    if not values:
        raise EmptyBatch("no usable records")
    return values


def _check_policy(missing: str) -> None:
    if missing not in ("exclude", "penalize"):
        raise ValueError(f"unknown missing policy {missing!r}")


def mae(records, missing: str = "exclude") -> float:
    """Mean Euclidean error in meters between predicted and true points."""
    _check_policy(missing)
    errors = _geo_errors(records, missing)
    return math.fsum(errors) / len(errors)


def rmse(records, missing: str = "exclude") -> float:
    """Root of the batch-mean squared Euclidean error in meters."""
    _check_policy(missing)
    errors = _geo_errors(records, missing)
    return math.sqrt(math.fsum(e * e for e in errors) / len(errors))


def road_distance_metrics(records, missing: str = "exclude") -> tuple[float, float]:
    """(MAE, RMSE) of the per-record nearest-road pixel distances."""
    _check_policy(missing)
    values = _road_values(records, missing)
    n = len(values)
    return math.fsum(values) / n, math.sqrt(math.fsum(v * v for v in values) / n)


@dataclass(frozen=True)
class CityRow:
    n: int
    mae_m: float
    rmse_m: float
    road_mae_px: float
    road_rmse_px: float


@dataclass(frozen=True)
class MetricsReport:
    n_records: int
    n_missing: int
    missing_policy: str
    mae_m: float
    rmse_m: float
    road_mae_px: float
    road_rmse_px: float
    per_city: dict[str, CityRow] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "n_missing": self.n_missing,
            "missing_policy": self.missing_policy,
            "mae_m": self.mae_m,
            "rmse_m": self.rmse_m,
            "road_mae_px": self.road_mae_px,
            "road_rmse_px": self.road_rmse_px,
            "per_city": {name: vars(row) for name, row in sorted(self.per_city.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            n_records=d["n_records"],
            n_missing=d["n_missing"],
            missing_policy=d["missing_policy"],
            mae_m=d["mae_m"],
            rmse_m=d["rmse_m"],
            road_mae_px=d["road_mae_px"],
            road_rmse_px=d["road_rmse_px"],
            per_city={name: CityRow(**row) for name, row in d.get("per_city", {}).items()},
        )


def build_report(records, missing: str = "exclude") -> MetricsReport:
    _check_policy(missing)
    records = list(records)
    if not records:
        raise EmptyBatch("no records")
    road = road_distance_metrics(records, missing)
    per_city: dict[str, CityRow] = {}
    cities = sorted({r.city for r in records if r.city})
    for city in cities:
        sub = [r for r in records if r.city == city]
        sub_road = road_distance_metrics(sub, missing)
        per_city[city] = CityRow(
            n=len(sub),
            mae_m=mae(sub, missing),
            rmse_m=rmse(sub, missing),
            road_mae_px=sub_road[0],
            road_rmse_px=sub_road[1],
        )
    return MetricsReport(
        n_records=len(records),
        n_missing=sum(1 for r in records if r.predicted is None),
        missing_policy=missing,
        mae_m=mae(records, missing),
        rmse_m=rmse(records, missing),
        road_mae_px=road[0],
        road_rmse_px=road[1],
        per_city=per_city,
    )


def write_report(report: MetricsReport, fmt: str = "table") -> bytes:
    """Serialize a report as a 3-decimal text table or round-trippable JSON."""
    if fmt == "json":
        return (json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    header = f"{'city':<16}{'n':>6}{'MAE(m)':>12}{'RMSE(m)':>12}{'RoadMAE(px)':>14}{'RoadRMSE(px)':>14}"
    lines = [header]
    rows = [("all", CityRow(report.n_records, report.mae_m, report.rmse_m,
                            report.road_mae_px, report.road_rmse_px))]
    rows += sorted(report.per_city.items())
    for name, row in rows:
        lines.append(f"{name:<16}{row.n:>6}{row.mae_m:>12.3f}{row.rmse_m:>12.3f}"
                     f"{row.road_mae_px:>14.3f}{row.road_rmse_px:>14.3f}")
    lines.append(f"missing predictions: {report.n_missing} (policy: {report.missing_policy})")
    return ("\n".join(lines) + "\n").encode("utf-8")
