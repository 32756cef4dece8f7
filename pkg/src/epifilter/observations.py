from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ObservationSeries:
    """Scalar observations of the detected active-case fraction.

    ``times`` are in days from the start of the record (day 0). ``dates`` is
    optional calendar metadata carried through from ingestion.
    """

    times: np.ndarray
    values: np.ndarray
    start_date: dt.date | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if times.shape != values.shape:
            raise DataError(f"times and values differ in length ({times.size} vs {values.size})")
        if times.size and np.any(np.diff(times) <= 0):
            raise DataError("observation times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def truncate(self, until: float) -> "ObservationSeries":
        """Observations with ``time <= until``."""
        keep = self.times <= until
        return ObservationSeries(self.times[keep], self.values[keep], self.start_date)

    def dates(self) -> list[dt.date]:
        start = self.start_date or dt.date(2020, 1, 1)
        return [start + dt.timedelta(days=float(t)) for t in self.times]
