"""Compare predictions with measured path loss: RMSE, median error, group averages."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .clutter import nearest_rank
from .errors import ClutterPropError, EmptyInput, ParseError, RecordError
from .geodesy import GeoPoint
from .kernel import LinkSpec, predict
from .profile import ClutterSampling, ClutterSource, extract_profile
from .raster import Raster

COLUMNS = ("dataset", "group", "tx_lat", "tx_lon", "tx_h_agl_m",
           "rx_lat", "rx_lon", "rx_h_agl_m", "freq_mhz", "path_loss_db")

DEFAULT_BIN_WIDTH_DB = 2.0


@dataclass(frozen=True)
class MeasurementRecord:
    dataset_id: str
    group_id: str
    tx: GeoPoint
    tx_height_agl_m: float
    rx: GeoPoint
    rx_height_agl_m: float
    freq_mhz: float
    measured_loss_db: float
    line: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.measured_loss_db):
            raise ValueError(f"measured loss must be finite, got {self.measured_loss_db}")
        if not (self.tx_height_agl_m > 0 and self.rx_height_agl_m > 0):
            raise ValueError("antenna heights must be positive")

    def link(self) -> LinkSpec:
        return LinkSpec(self.tx, self.rx, self.tx_height_agl_m, self.rx_height_agl_m, self.freq_mhz)


def load_measurements(source) -> list[MeasurementRecord]:
    """Read the comma-separated measurement format (see ``COLUMNS``)."""
    if isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8-sig")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8-sig") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty measurement file") from None
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise ParseError(f"line 1: missing column(s): {', '.join(missing)}")
    idx = {c: header.index(c) for c in COLUMNS}

    records = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        get = {c: row[i].strip() for c, i in idx.items()}
        try:
            rec = MeasurementRecord(
                dataset_id=get["dataset"],
                group_id=get["group"],
                tx=GeoPoint(float(get["tx_lat"]), float(get["tx_lon"])),
                tx_height_agl_m=float(get["tx_h_agl_m"]),
                rx=GeoPoint(float(get["rx_lat"]), float(get["rx_lon"])),
                rx_height_agl_m=float(get["rx_h_agl_m"]),
                freq_mhz=float(get["freq_mhz"]),
                measured_loss_db=float(get["path_loss_db"]),
                line=lineno,
            )
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if not rec.dataset_id:
            raise ParseError(f"line {lineno}: empty dataset id")
        records.append(rec)
    return records


def write_measurements(records: Iterable[MeasurementRecord]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow([r.dataset_id, r.group_id, repr(r.tx.lat_deg), repr(r.tx.lon_deg),
                    repr(r.tx_height_agl_m), repr(r.rx.lat_deg), repr(r.rx.lon_deg),
                    repr(r.rx_height_agl_m), repr(r.freq_mhz), repr(r.measured_loss_db)])
    return buf.getvalue().encode("utf-8")


def read_measurements(path) -> list[MeasurementRecord]:
    with open(path, "rb") as fh:
        return load_measurements(fh)


@dataclass(frozen=True)
class ErrorStats:
    n: int
    rmse: float
    mean_error: float
    median_error: float


def error_stats(pairs: Sequence[tuple[float, float]]) -> ErrorStats:
    """Error statistics of ``predicted - measured``; median by nearest rank."""
    if not pairs:
        raise EmptyInput("error statistics need at least one pair")
    errors = [p - m for p, m in pairs]
    n = len(errors)
    rmse = math.sqrt(math.fsum(e * e for e in errors) / n)
    return ErrorStats(n, rmse, math.fsum(errors) / n, nearest_rank(errors, 0.5))


def group_average(per_dataset_rmse: Mapping[str, float],
                  membership: Mapping[str, str]) -> dict[str, float]:
    """Unweighted mean of dataset RMSEs per group, whatever the record counts."""
    members: dict[str, list[float]] = defaultdict(list)
    for ds, rmse in per_dataset_rmse.items():
        members[membership[ds]].append(rmse)
    return {g: math.fsum(v) / len(v) for g, v in sorted(members.items())}


def error_histogram(errors: Iterable[float],
                    bin_width: float = DEFAULT_BIN_WIDTH_DB) -> list[tuple[float, int]]:
    """Counts in half-open bins ``[k*w, (k+1)*w)``, contiguous from the lowest to highest occupied bin."""
    if not bin_width > 0:
        raise ValueError(f"bin width must be positive, got {bin_width}")
    counts: dict[int, int] = defaultdict(int)
    for e in errors:
        counts[math.floor(e / bin_width)] += 1
    if not counts:
        return []
    lo, hi = min(counts), max(counts)
    return [(k * bin_width, counts.get(k, 0)) for k in range(lo, hi + 1)]


@dataclass
class EvalReport:
    strategy: str
    spacing_m: float
    per_dataset: dict[str, ErrorStats]
    per_group: dict[str, float]
    histogram: list[tuple[float, int]]
    bin_width_db: float = DEFAULT_BIN_WIDTH_DB

    def to_dict(self) -> dict:
        """JSON-ready tree; dB values rounded to 2 decimals."""
        return {
            "strategy": self.strategy,
            "spacing_m": round(self.spacing_m, 3),
            "per_dataset": {
                ds: {"n": s.n, "rmse_db": round(s.rmse, 2), "mean_error_db": round(s.mean_error, 2),
                     "median_error_db": round(s.median_error, 2)}
                for ds, s in self.per_dataset.items()
            },
            "per_group": {g: round(v, 2) for g, v in self.per_group.items()},
            "histogram": {"bin_width_db": self.bin_width_db,
                          "bins": [[round(start, 2), count] for start, count in self.histogram]},
        }


def predict_records(records: Sequence[MeasurementRecord], terrain: Raster, clutter: ClutterSource,
                    spacing_m: float, clutter_sampling=ClutterSampling.NEAREST,
                    workers: int = 1) -> list[float]:
    """Predicted loss for each record, in input order."""

    def one(item):
        index, rec = item
        try:
            profile = extract_profile(terrain, clutter, rec.tx, rec.rx, spacing_m, clutter_sampling)
            return predict(profile, rec.link()).loss_db
        except (ClutterPropError, ValueError) as exc:
            raise RecordError(index, rec.dataset_id, exc, rec.line) from exc

    items = list(enumerate(records))
    if workers <= 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items))


def run_evaluation(records: Sequence[MeasurementRecord], terrain: Raster, clutter: ClutterSource,
                   strategy: str, spacing_m: float, clutter_sampling=ClutterSampling.NEAREST,
                   bin_width: float = DEFAULT_BIN_WIDTH_DB, split_by_frequency: bool = False,
                   workers: int = 1) -> EvalReport:
    """Predict every record and aggregate errors per dataset and per group.

    With ``split_by_frequency`` each dataset is broken into ``dataset@<freq>MHz``
    sub-datasets before RMSE, which still average into the dataset's group.
    """
    if not records:
        raise EmptyInput("no measurement records")
    predicted = predict_records(records, terrain, clutter, spacing_m, clutter_sampling, workers)

    # stable sort: dataset id, then input order
    order = sorted(range(len(records)), key=lambda i: records[i].dataset_id)
    pairs: dict[str, list[tuple[float, float]]] = defaultdict(list)
    membership: dict[str, str] = {}
    errors = []
    for i in order:
        rec = records[i]
        key = f"{rec.dataset_id}@{rec.freq_mhz:g}MHz" if split_by_frequency else rec.dataset_id
        group = membership.setdefault(key, rec.group_id)
        if group != rec.group_id:
            raise ValueError(f"dataset {rec.dataset_id!r} appears in groups {group!r} and {rec.group_id!r}")
        pairs[key].append((predicted[i], rec.measured_loss_db))
        errors.append(predicted[i] - rec.measured_loss_db)

    per_dataset = {ds: error_stats(p) for ds, p in sorted(pairs.items())}
    per_group = group_average({ds: s.rmse for ds, s in per_dataset.items()}, membership)
    return EvalReport(strategy, spacing_m, per_dataset, per_group,
                      error_histogram(errors, bin_width), bin_width)


def report_json(reports: Sequence[EvalReport]) -> str:
    doc = {"runs": [r.to_dict() for r in reports]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_table(reports: Sequence[EvalReport]) -> str:
    """Aligned RMSE table: one row per group, one column per strategy/spacing run."""
    if not reports:
        return ""
    groups = sorted({g for r in reports for g in r.per_group})
    heads = [f"{r.strategy}/{r.spacing_m:g}m" for r in reports]
    first = max([len("Group")] + [len(g) for g in groups])
    widths = [max(len(h), 6) for h in heads]
    lines = ["  ".join(["Group".ljust(first)] + [h.rjust(w) for h, w in zip(heads, widths)])]
    lines.append("  ".join(["-" * first] + ["-" * w for w in widths]))
    for g in groups:
        cells = []
        for r, w in zip(reports, widths):
            v = r.per_group.get(g)
            cells.append(("-" if v is None else f"{v:.2f}").rjust(w))
        lines.append("  ".join([g.ljust(first)] + cells))
    return "\n".join(lines) + "\n"
