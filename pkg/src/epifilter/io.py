"""Reading and writing the CSV/JSON files exchanged by the command-line tools.

Column orders are fixed and documented in ``docs/formats.md``. Floats are
written with 12 significant digits so outputs are byte-stable across runs.
"""
from __future__ import annotations

import csv
import datetime
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .filtering import FilterRun
from .forecast import ForecastResult
from .inference import PosteriorEnsemble
from .model import re_moments
from .observations import ObservationSeries
from .synthgen import SyntheticTruth

DATASET_HEADER = ("date", "active_cases")
TRUTH_HEADER = ("t", "S", "I", "R", "beta")
STATE_HEADER = (
    "day", "date",
    "S_mean", "S_std", "I_mean", "I_std", "R_mean", "R_std", "beta_mean", "beta_std",
    "Re_mean", "Re_std",
)
FORECAST_HEADER = ("day", "date", "I_mean", "I_std", "beta_mean", "beta_std", "Re_mean", "Re_std")
SECONDS_PER_DAY = 86400.0


def fmt(x: float) -> str:
    """12 significant digits, the precision used in every output CSV."""
    return f"{float(x):.12g}"


def _parse_stamp(text: str) -> datetime.datetime:
    text = text.strip()
    if "T" in text or " " in text:
        return datetime.datetime.fromisoformat(text)
    return datetime.datetime.combine(datetime.date.fromisoformat(text), datetime.time())


def _format_stamp(start: datetime.date, day: float) -> str:
    if float(day).is_integer():
        return (start + datetime.timedelta(days=int(day))).isoformat()
    moment = datetime.datetime.combine(start, datetime.time()) + datetime.timedelta(days=float(day))
    return moment.isoformat()


def ingest(path, population: float) -> ObservationSeries:
    """Read a ``date,active_cases`` file and normalize counts by ``population``.

    Day 0 is the first row's date. Missing days are simply absent from the
    series. Dates may carry a time of day (ISO-8601) for sub-daily records.
    """
    if not population > 0:
        raise ConfigError(f"population must be positive, got {population}")
    path = Path(path)
    stamps, counts = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} is empty", line=1)
        if tuple(h.strip() for h in header) != DATASET_HEADER:
            raise DataError(f"expected header 'date,active_cases', got {','.join(header)!r}", line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise DataError(f"expected 2 fields, got {len(row)}", line=line)
            try:
                stamp = _parse_stamp(row[0])
            except ValueError:
                raise DataError(f"bad date {row[0]!r}", line=line) from None
            try:
                count = float(row[1])
            except ValueError:
                raise DataError(f"bad count {row[1]!r}", line=line) from None
            if not math.isfinite(count):
                raise DataError(f"non-finite count {row[1]!r}", line=line)
            if count < 0:
                raise DataError(f"negative count {count:g}", line=line)
            if stamps and stamp <= stamps[-1]:
                what = "duplicate" if stamp == stamps[-1] else "out-of-order"
                raise DataError(f"{what} date {row[0].strip()}", line=line)
            stamps.append(stamp)
            counts.append(count)
    if not stamps:
        raise DataError(f"{path} has no data rows")
    start = stamps[0]
    times = [(s - start).total_seconds() / SECONDS_PER_DAY for s in stamps]
    return ObservationSeries(np.array(times), np.array(counts) / population, start.date())


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def read_table(path) -> dict[str, np.ndarray | list[str]]:
    """Read one of our output CSVs into columns; numeric columns become arrays."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = col
    return out


def write_dataset(path, series: ObservationSeries, population: float) -> Path:
    start = series.start_date or datetime.date(2020, 1, 1)
    rows = ((_format_stamp(start, t), v * population) for t, v in zip(series.times, series.values))
    return write_csv(path, DATASET_HEADER, rows)


def write_truth(path, truth: SyntheticTruth) -> Path:
    rows = ((t, *x) for t, x in zip(truth.times, truth.states))
    return write_csv(path, TRUTH_HEADER, rows)


def write_posterior_samples(path, ens: PosteriorEnsemble) -> Path:
    rows = ((*theta, ll) for theta, ll in zip(ens.samples, ens.logliks))
    return write_csv(path, (*ens.names, "loglik"), rows)


def read_posterior_samples(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    table = read_table(path)
    names = [n for n in table if n != "loglik"]
    samples = np.column_stack([table[n] for n in names]) if names else np.empty((0, 0))
    return names, samples, np.asarray(table["loglik"])


def write_states(path, run: FilterRun, gamma: float, start_date: datetime.date | None) -> Path:
    days, means, covs = run.daily()
    stds = np.sqrt(np.clip(np.diagonal(covs, axis1=1, axis2=2), 0.0, None))
    re_mean, re_var = re_moments(means, covs, gamma)
    re_std = np.sqrt(np.clip(re_var, 0.0, None))
    start = start_date or datetime.date(2020, 1, 1)
    rows = []
    for k, day in enumerate(days):
        row = [fmt(day), _format_stamp(start, day)]
        for c in range(4):
            row += [means[k, c], stds[k, c]]
        row += [re_mean[k], re_std[k]]
        rows.append(row)
    return write_csv(path, STATE_HEADER, rows)


def write_forecast(path, result: ForecastResult, start_date: datetime.date | None) -> Path:
    stds = result.stds
    re_std = np.sqrt(np.clip(result.re_var, 0.0, None))
    start = start_date or datetime.date(2020, 1, 1)
    rows = [
        [fmt(t), _format_stamp(start, t), result.means[k, 1], stds[k, 1],
         result.means[k, 3], stds[k, 3], result.re_mean[k], re_std[k]]
        for k, t in enumerate(result.times)
    ]
    return write_csv(path, FORECAST_HEADER, rows)
