"""Weekly ARI series: loading, baseline, high-season extraction, synthetic data."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (GapInSeason, InsufficientHistory, NoOffsetFound, NoOnsetFound,
                     ParseError, SchemaError)
from .model import DEFAULT_TOL, ModelParams
from .observation import ObservationWindow, ThetaVector, expected_weekly_incidence

REQUIRED_COLUMNS = ("iso_year", "iso_week", "ari_count")
SENTINEL_COLUMNS = ("flu_detect", "rsv_detect")
ONSET_BAND = ((10, 1), (11, 30))
OFFSET_BAND = ((4, 1), (5, 31))


@dataclass(frozen=True)
class WeekRecord:
    iso_year: int
    iso_week: int
    count: int
    flu: int | None = None
    rsv: int | None = None

    @property
    def monday(self) -> dt.date:
        return dt.date.fromisocalendar(self.iso_year, self.iso_week, 1)


@dataclass(frozen=True)
class RawSeries:
    records: tuple
    gaps: tuple = ()

    def __len__(self):
        return len(self.records)

    @property
    def counts(self) -> np.ndarray:
        return np.array([r.count for r in self.records], dtype=np.int64)

    @property
    def years(self) -> np.ndarray:
        return np.array([r.iso_year for r in self.records])


def _int_field(value, column, line, allow_empty=False):
    value = value.strip() if value is not None else ""
    if value == "":
        if allow_empty:
            return None
        raise SchemaError(f"line {line}: empty value", column)
    try:
        out = int(value)
    except ValueError:
        try:
            f = float(value)
        except ValueError:
            raise SchemaError(f"line {line}: {value!r} is not an integer", column) from None
        if not f.is_integer():
            raise SchemaError(f"line {line}: {value!r} is not an integer", column) from None
        out = int(f)
    if out < 0:
        raise SchemaError(f"line {line}: negative value {value!r}", column)
    return out


def load_series(path) -> RawSeries:
    """Read a weekly CSV with columns ``iso_year,iso_week,ari_count`` and
    optional ``flu_detect,rsv_detect``."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: no such file")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ParseError("empty file", line=1)
    header = [h.strip() for h in rows[0]]
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise SchemaError("required column missing", col)
    unknown = [h for h in header if h not in REQUIRED_COLUMNS + SENTINEL_COLUMNS]
    if unknown:
        raise SchemaError("unexpected column", unknown[0])
    idx = {h: i for i, h in enumerate(header)}
    records = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
        year = _int_field(row[idx["iso_year"]], "iso_year", lineno)
        week = _int_field(row[idx["iso_week"]], "iso_week", lineno)
        try:
            dt.date.fromisocalendar(year, week, 1)
        except ValueError:
            raise SchemaError(f"line {lineno}: ({year}, {week}) is not an ISO week",
                              "iso_week") from None
        if (year, week) in seen:
            raise SchemaError(f"line {lineno}: duplicate week ({year}, {week})", "iso_week")
        seen.add((year, week))
        count = _int_field(row[idx["ari_count"]], "ari_count", lineno)
        sentinel = {c: (_int_field(row[idx[c]], c, lineno, allow_empty=True) if c in idx else None)
                    for c in SENTINEL_COLUMNS}
        records.append(WeekRecord(year, week, count, sentinel["flu_detect"],
                                  sentinel["rsv_detect"]))
    records.sort(key=lambda r: (r.iso_year, r.iso_week))
    gaps = []
    for prev, cur in zip(records, records[1:]):
        if (cur.monday - prev.monday).days != 7:
            gaps.append(((prev.iso_year, prev.iso_week), (cur.iso_year, cur.iso_week)))
    return RawSeries(tuple(records), tuple(gaps))


def write_series(series: RawSeries, path) -> None:
    has_sentinel = any(r.flu is not None or r.rsv is not None for r in series.records)
    header = list(REQUIRED_COLUMNS) + (list(SENTINEL_COLUMNS) if has_sentinel else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in series.records:
            row = [r.iso_year, r.iso_week, r.count]
            if has_sentinel:
                row += ["" if r.flu is None else r.flu, "" if r.rsv is None else r.rsv]
            w.writerow(row)


def historical_mean(series: RawSeries, exclude_years=()) -> float:
    """Scalar baseline: mean weekly count over all included ISO years."""
    exclude = set(exclude_years)
    kept = [r for r in series.records if r.iso_year not in exclude]
    if len({r.iso_year for r in kept}) < 2:
        raise InsufficientHistory("baseline needs at least two years of data")
    return float(np.mean([r.count for r in kept]))


def historical_weekly_mean(series: RawSeries, exclude_years=()) -> dict:
    """Per-ISO-week baseline: mean count of each week number over included years.

    Week 53 falls back to the week-52 mean when no included year has one.
    """
    exclude = set(exclude_years)
    kept = [r for r in series.records if r.iso_year not in exclude]
    if len({r.iso_year for r in kept}) < 2:
        raise InsufficientHistory("baseline needs at least two years of data")
    by_week = {}
    for r in kept:
        by_week.setdefault(r.iso_week, []).append(r.count)
    out = {w: float(np.mean(v)) for w, v in sorted(by_week.items())}
    if 53 not in out and 52 in out:
        out[53] = out[52]
    return out


def _threshold(baseline, record: WeekRecord) -> float:
    if isinstance(baseline, dict):
        try:
            return baseline[record.iso_week]
        except KeyError:
            raise InsufficientHistory(f"no baseline for ISO week {record.iso_week}") from None
    return baseline


def _in_band(day: dt.date, band, year: int) -> bool:
    (m0, d0), (m1, d1) = band
    return dt.date(year, m0, d0) <= day <= dt.date(year, m1, d1)


@dataclass(frozen=True)
class SeasonWindow:
    """A high season, its baseline and the detrended counts fed to inference.

    Week ``i`` covers days ``edges[i]`` to ``edges[i + 1]`` counted from the
    Monday of the start week.
    """

    start: tuple
    end: tuple
    baseline: float
    weeks: tuple
    raw_counts: tuple
    counts: tuple
    edges: tuple
    n_floored: int
    flu: tuple = field(default=())
    rsv: tuple = field(default=())
    # per-week thresholds when a per-week baseline was used, else empty
    week_baselines: tuple = field(default=())

    def window(self) -> ObservationWindow:
        return ObservationWindow(np.asarray(self.edges), np.asarray(self.counts))

    def to_dict(self) -> dict:
        return {
            "start": {"iso_year": self.start[0], "iso_week": self.start[1]},
            "end": {"iso_year": self.end[0], "iso_week": self.end[1]},
            "baseline": self.baseline,
            "weeks": [list(w) for w in self.weeks],
            "raw_counts": list(self.raw_counts),
            "counts": list(self.counts),
            "week_edges_days": list(self.edges),
            "n_floored": self.n_floored,
            "flu_detect": list(self.flu),
            "rsv_detect": list(self.rsv),
            "week_baselines": list(self.week_baselines),
            "units": {"baseline": "ARI consultations per week",
                      "counts": "ARI consultations per week above baseline",
                      "week_edges_days": "days since Monday of the start week"},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SeasonWindow":
        try:
            return cls(start=(int(d["start"]["iso_year"]), int(d["start"]["iso_week"])),
                       end=(int(d["end"]["iso_year"]), int(d["end"]["iso_week"])),
                       baseline=float(d["baseline"]),
                       weeks=tuple(tuple(int(v) for v in w) for w in d["weeks"]),
                       raw_counts=tuple(int(v) for v in d["raw_counts"]),
                       counts=tuple(int(v) for v in d["counts"]),
                       edges=tuple(float(v) for v in d["week_edges_days"]),
                       n_floored=int(d["n_floored"]),
                       flu=tuple(d.get("flu_detect", ())), rsv=tuple(d.get("rsv_detect", ())),
                       week_baselines=tuple(float(v) for v in d.get("week_baselines", ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed season record: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SeasonWindow":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: {exc}") from exc


def detrend(raw, baseline: float) -> tuple[list[int], int]:
    """``max(0, round(raw - baseline))`` and the number of floored weeks."""
    shifted = [int(round(c - baseline)) for c in raw]
    return [max(0, v) for v in shifted], sum(v < 0 for v in shifted)


def extract_season(series: RawSeries, baseline, season_start_year: int,
                   onset_band=ONSET_BAND, offset_band=OFFSET_BAND) -> SeasonWindow:
    """High season starting in ``season_start_year``.

    Onset is the first week whose Monday lies in the onset band with count at
    or above the baseline; offset is the first week of the following year in
    the offset band with count below it. Both weeks are included.
    ``baseline`` is a scalar or a mapping from ISO week number to threshold.
    """
    recs = series.records
    start = next((i for i, r in enumerate(recs)
                  if _in_band(r.monday, onset_band, season_start_year)
                  and r.count >= _threshold(baseline, r)), None)
    if start is None:
        raise NoOnsetFound(f"no week in the onset band of {season_start_year} reaches the baseline")
    end = next((i for i, r in enumerate(recs)
                if i > start and _in_band(r.monday, offset_band, season_start_year + 1)
                and r.count < _threshold(baseline, r)), None)
    if end is None:
        raise NoOffsetFound(f"no week in the offset band of {season_start_year + 1} "
                            "drops below the baseline")
    season = recs[start:end + 1]
    for prev, cur in zip(season, season[1:]):
        if (cur.monday - prev.monday).days != 7:
            raise GapInSeason(f"missing weeks between {prev.iso_year}-W{prev.iso_week} and "
                              f"{cur.iso_year}-W{cur.iso_week}")
    raw = [r.count for r in season]
    thresholds = [_threshold(baseline, r) for r in season]
    shifted = [int(round(c - b)) for c, b in zip(raw, thresholds)]
    counts, n_floored = [max(0, v) for v in shifted], sum(v < 0 for v in shifted)
    per_week = isinstance(baseline, dict)
    first = season[0].monday
    edges = [float((r.monday - first).days) for r in season] + [float((season[-1].monday - first).days + 7)]
    return SeasonWindow(
        start=(season[0].iso_year, season[0].iso_week), end=(season[-1].iso_year, season[-1].iso_week),
        baseline=float(np.mean(thresholds)) if per_week else float(baseline),
        weeks=tuple((r.iso_year, r.iso_week) for r in season),
        raw_counts=tuple(raw), counts=tuple(counts), edges=tuple(edges), n_floored=n_floored,
        flu=tuple(r.flu for r in season), rsv=tuple(r.rsv for r in season),
        week_baselines=tuple(thresholds) if per_week else ())


def first_monday_of_october(year: int) -> dt.date:
    day = dt.date(year, 10, 1)
    return day + dt.timedelta(days=(7 - day.weekday()) % 7)


def synthesize_dataset(theta_true: ThetaVector, fixed: ModelParams, weeks: int, seed: int,
                       start=None, tol: float = DEFAULT_TOL) -> SeasonWindow:
    """Weekly counts drawn as independent Poisson(K * I_i(theta_true)).

    Weeks are labelled consecutively from ``start`` (default: the first Monday
    of October 2002); the baseline is zero.
    """
    start = start or first_monday_of_october(2002)
    edges = 7.0 * np.arange(weeks + 1)
    means = expected_weekly_incidence(theta_true, edges, fixed, tol)
    rng = np.random.Generator(np.random.PCG64(seed))
    counts = rng.poisson(means).astype(int).tolist()
    labels = [tuple((start + dt.timedelta(days=7 * i)).isocalendar())[:2] for i in range(weeks)]
    return SeasonWindow(start=labels[0], end=labels[-1], baseline=0.0, weeks=tuple(labels),
                        raw_counts=tuple(counts), counts=tuple(counts),
                        edges=tuple(edges.tolist()), n_floored=0)


def season_to_series(season: SeasonWindow) -> RawSeries:
    flu = season.flu or (None,) * len(season.weeks)
    rsv = season.rsv or (None,) * len(season.weeks)
    return RawSeries(tuple(WeekRecord(y, w, c, f, r) for (y, w), c, f, r
                           in zip(season.weeks, season.raw_counts, flu, rsv)))


def seasonal_fixture(years=range(2002, 2006), amplitude: float = 400.0, level: float = 1000.0,
                     noise: float = 0.0, seed: int = 0) -> RawSeries:
    """Sinusoidal weekly series peaking in mid-January (for examples and tests)."""
    rng = np.random.default_rng(seed)
    recs = []
    for year in years:
        n_weeks = dt.date(year, 12, 28).isocalendar()[1]
        for week in range(1, n_weeks + 1):
            day = dt.date.fromisocalendar(year, week, 1)
            phase = 2 * math.pi * ((day - dt.date(year, 1, 15)).days / 365.25)
            value = level + amplitude * math.cos(phase) + noise * rng.standard_normal()
            recs.append(WeekRecord(year, week, max(0, int(round(value)))))
    return RawSeries(tuple(recs))
