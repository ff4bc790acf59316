"""Driving-cycle traces: CSV ingest, uniform resampling, repetition, stats."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

BUNDLED = ("udds_like", "wltp_like")
M_PER_MILE = 1609.344


class CycleParseError(ValueError):
    pass


class CycleValidationError(ValueError):
    pass


@dataclass(frozen=True)
class DrivingCycle:
    """Uniformly sampled target speed (m/s) and road grade (rad)."""

    name: str
    dt: float
    speed: np.ndarray = field(repr=False)
    grade: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        speed = np.ascontiguousarray(self.speed, dtype=float)
        grade = (np.zeros_like(speed) if self.grade is None
                 else np.ascontiguousarray(self.grade, dtype=float))
        speed.setflags(write=False)
        grade.setflags(write=False)
        object.__setattr__(self, "speed", speed)
        object.__setattr__(self, "grade", grade)
        if self.dt <= 0:
            raise CycleValidationError("dt must be positive")
        if speed.ndim != 1:
            raise CycleValidationError("speed must be one-dimensional")
        if grade.shape != speed.shape:
            raise CycleValidationError("speed and grade lengths differ")
        if np.any(speed < 0):
            raise CycleValidationError("speed must be non-negative")
        if speed.size and speed[0] != 0.0:
            log.warning("cycle %r does not start at rest (v0=%.3f m/s)", self.name, speed[0])

    def __len__(self):
        return self.speed.size

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.speed.size) * self.dt


def resample(time, speed, grade=None, dt: float = 1.0):
    """Linear resampling onto ``0, dt, 2dt, ...`` from the first timestamp."""
    time = np.asarray(time, dtype=float)
    n = int(np.floor((time[-1] - time[0]) / dt + 1e-9)) + 1
    t_new = time[0] + np.arange(n) * dt
    sp = np.interp(t_new, time, speed)
    gr = None if grade is None else np.interp(t_new, time, grade)
    return sp, gr


def load_cycle(path, dt: float = 1.0, name: str | None = None) -> DrivingCycle:
    """Read ``time_s,speed_mps[,grade_rad]`` rows; header optional."""
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) not in (2, 3):
                raise CycleParseError(f"{path}: line {lineno}: expected 2 or 3 columns, got {len(rec)}")
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise CycleParseError(f"{path}: line {lineno}: non-numeric value in {rec!r}") from None
    if not rows:
        raise CycleParseError(f"{path}: no data rows")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise CycleParseError(f"{path}: inconsistent column count")
    arr = np.array(rows)
    t, v = arr[:, 0], arr[:, 1]
    if np.any(np.diff(t) <= 0):
        bad = int(np.argmax(np.diff(t) <= 0)) + 2
        raise CycleValidationError(f"{path}: time not strictly increasing near data row {bad}")
    if np.any(v < 0):
        raise CycleValidationError(f"{path}: negative speed")
    g = arr[:, 2] if arr.shape[1] == 3 else None
    sp, gr = resample(t, v, g, dt)
    return DrivingCycle(name or path.stem, dt, sp, gr)


def bundled_cycle(name: str = "udds_like", dt: float = 1.0) -> DrivingCycle:
    """One of the synthetic fixture cycles shipped with the package."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled cycle {name!r}; choose from {BUNDLED}")
    ref = resources.files("hesslab").joinpath("data", f"{name}.csv")
    with resources.as_file(ref) as p:
        return load_cycle(p, dt=dt, name=name)


def get_cycle(spec: str, dt: float = 1.0) -> DrivingCycle:
    """Bundled name or CSV path."""
    if spec in BUNDLED:
        return bundled_cycle(spec, dt)
    return load_cycle(spec, dt)


def repeat_cycle(cycle: DrivingCycle, n: int) -> DrivingCycle:
    if n < 1:
        raise ValueError("n must be >= 1")
    return DrivingCycle(cycle.name if n == 1 else f"{cycle.name}x{n}", cycle.dt,
                        np.tile(cycle.speed, n), np.tile(cycle.grade, n))


@dataclass(frozen=True)
class CycleStats:
    duration: float
    distance: float
    max_speed: float
    max_accel: float

    @property
    def distance_miles(self) -> float:
        return self.distance / M_PER_MILE


def cycle_stats(cycle: DrivingCycle) -> CycleStats:
    v = cycle.speed
    if v.size == 0:
        raise ValueError("empty cycle")
    dist = float(np.sum(0.5 * (v[1:] + v[:-1])) * cycle.dt)
    acc = np.diff(v) / cycle.dt
    return CycleStats(duration=(v.size - 1) * cycle.dt, distance=dist,
                      max_speed=float(v.max()),
                      max_accel=float(np.abs(acc).max()) if acc.size else 0.0)
