"""Equivalent-circuit battery and ultracapacitor packs.

Currents are positive on discharge.  Battery SOC comes from Coulomb
counting against the nominal pack capacity; ultracapacitor state of voltage
(SOV) integrates current against ``C * U_max``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K

log = logging.getLogger(__name__)

# LFP-like open-circuit voltage per cell: flat plateau between the knees
_CELL_OCV_SOC = np.array([0.0, 0.05, 0.10, 0.20, 0.30, 0.50, 0.70, 0.80, 0.90, 0.95, 1.0])
_CELL_OCV_V = np.array([3.00, 3.15, 3.20, 3.25, 3.28, 3.30, 3.32, 3.33, 3.35, 3.38, 3.40])


class PowerInfeasibleError(ValueError):
    """Requested power exceeds what the source can deliver (U_oc^2 / 4R)."""

    def __init__(self, power, max_power):
        super().__init__(f"power {power:.6g} W exceeds deliverable maximum {max_power:.6g} W")
        self.power = power
        self.max_power = max_power


def solve_current(power: float, u_oc: float, resistance: float) -> float:
    """Current drawn for terminal power ``power`` from U_oc behind R.

    Returns the smaller-magnitude (physical) root of R I^2 - U_oc I + P = 0.
    """
    if power == 0.0:
        return 0.0
    i = K.solve_current(power, u_oc, resistance)
    if np.isnan(i):
        raise PowerInfeasibleError(power, u_oc * u_oc / (4.0 * resistance))
    return i


@dataclass(frozen=True)
class BatteryPack:
    series: int = 98
    parallel: int = 60
    cell_capacity_ah: float = 2.4
    cell_resistance: float = 1e-3
    soc_min: float = 0.001
    soc_max: float = 1.0
    temperature_c: float = 25.0
    # per-cell tables; pack scaling applied by the properties below
    ocv_soc: np.ndarray = field(default=None, repr=False)
    ocv_cell: np.ndarray = field(default=None, repr=False)
    r_soc: np.ndarray = field(default=None, repr=False)
    r_cell: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.ocv_soc is None:
            object.__setattr__(self, "ocv_soc", _CELL_OCV_SOC.copy())
            object.__setattr__(self, "ocv_cell", _CELL_OCV_V.copy())
        if self.r_soc is None:
            object.__setattr__(self, "r_soc", np.array([0.0, 1.0]))
            object.__setattr__(self, "r_cell", np.full(2, self.cell_resistance))
        for name in ("ocv_soc", "ocv_cell", "r_soc", "r_cell"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        if np.any(self.ocv_cell <= 0) or np.any(np.diff(self.ocv_cell) < 0):
            raise ValueError("OCV table must be positive and nondecreasing in SOC")
        if np.any(np.diff(self.ocv_soc) <= 0) or np.any(np.diff(self.r_soc) <= 0):
            raise ValueError("SOC breakpoints must be strictly increasing")
        if np.any(self.r_cell <= 0):
            raise ValueError("resistance must be positive")
        if self.series < 1 or self.parallel < 1 or self.cell_capacity_ah <= 0:
            raise ValueError("pack topology and capacity must be positive")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise ValueError("need 0 <= soc_min < soc_max <= 1")

    @property
    def q_nom(self) -> float:
        """Nominal pack capacity in Ah."""
        return self.parallel * self.cell_capacity_ah

    @property
    def ocv_pack(self) -> np.ndarray:
        return self.ocv_cell * self.series

    @property
    def r_pack(self) -> np.ndarray:
        return self.r_cell * self.series / self.parallel

    def ocv(self, soc: float) -> float:
        return K.interp1(self.ocv_soc, self.ocv_pack, soc)

    def resistance(self, soc: float) -> float:
        return K.interp1(self.r_soc, self.r_pack, soc)

    @classmethod
    def with_tables(cls, ocv_csv=None, r_csv=None, **kwargs) -> "BatteryPack":
        """Pack with per-cell OCV/resistance tables from two-column CSVs."""
        if ocv_csv is not None:
            s, v = read_table_csv(ocv_csv)
            kwargs.update(ocv_soc=s, ocv_cell=v)
        if r_csv is not None:
            s, v = read_table_csv(r_csv)
            kwargs.update(r_soc=s, r_cell=v)
        return cls(**kwargs)


def read_table_csv(path):
    """Two-column CSV (soc_fraction, value); a header line is optional."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise ValueError(f"{path}: malformed row at line {lineno}: {line!r}") from None
    arr = np.array(rows, dtype=float)
    return arr[:, 0], arr[:, 1]


@dataclass
class BatteryState:
    soc: float = 1.0
    ah_throughput: float = 0.0
    capacity_loss: float = 0.0
    current: float = 0.0
    voltage: float = 0.0
    depleted: bool = False
    saturated: bool = False

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise ValueError("soc must lie in [0, 1]")


@dataclass(frozen=True)
class UltracapPack:
    unit_capacitance: float = 1200.0
    series: int = 1
    parallel: int = 50
    u_max_unit: float = 2.7
    unit_resistance: float = 0.5e-3
    sov_min: float = 0.5
    sov_max: float = 1.0

    def __post_init__(self):
        if self.capacitance <= 0 or self.u_max <= 0:
            raise ValueError("capacitance and maximum voltage must be positive")
        if not 0.0 <= self.sov_min < self.sov_max <= 1.0:
            raise ValueError("need 0 <= sov_min < sov_max <= 1")

    @property
    def capacitance(self) -> float:
        return self.unit_capacitance * self.parallel / self.series

    @property
    def u_max(self) -> float:
        return self.u_max_unit * self.series

    @property
    def resistance(self) -> float:
        return self.unit_resistance * self.series / self.parallel

    def energy(self, sov: float) -> float:
        """Stored energy in J at a given SOV."""
        return 0.5 * self.capacitance * (sov * self.u_max) ** 2


@dataclass
class UltracapState:
    sov: float = 0.95
    current: float = 0.0
    voltage: float = 0.0
    clamped: bool = False

    def __post_init__(self):
        if not 0.0 <= self.sov <= 1.0:
            raise ValueError("sov must lie in [0, 1]")


def battery_step(state: BatteryState, power: float, dt: float, pack: BatteryPack) -> BatteryState:
    """Apply terminal power ``power`` for ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u_oc = pack.ocv(state.soc)
    r = pack.resistance(state.soc)
    i = solve_current(power, u_oc, r)
    soc = state.soc - i * dt / (3600.0 * pack.q_nom)
    out = replace(
        state,
        soc=min(max(soc, 0.0), 1.0),
        ah_throughput=state.ah_throughput + abs(i) * dt / 3600.0,
        current=i,
        voltage=u_oc - i * r,
        depleted=soc < pack.soc_min,
        saturated=soc > pack.soc_max,
    )
    if out.depleted or out.saturated:
        log.info("battery SOC %.6f outside [%g, %g]", soc, pack.soc_min, pack.soc_max)
    return out


def ultracap_step(state: UltracapState, power: float, dt: float, pack: UltracapPack) -> UltracapState:
    """Apply terminal power for ``dt``; clamps to keep SOV inside [0, 1]."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u_oc = state.sov * pack.u_max
    r = pack.resistance
    q = pack.capacitance * pack.u_max
    clamped = False
    if power > 0:
        p_lim = K.discharge_limit(u_oc, r, state.sov, 0.0, q, dt)
        if power > p_lim:
            power, clamped = p_lim, True
    elif power < 0:
        p_lim = K.charge_limit(u_oc, r, state.sov, 1.0, q, dt)
        if power < p_lim:
            power, clamped = p_lim, True
    if clamped:
        log.info("ultracapacitor power clamped to %.3f W at SOV %.4f", power, state.sov)
    i = solve_current(power, u_oc, r) if power != 0.0 else 0.0
    sov = state.sov - i * dt / q
    return UltracapState(sov=min(max(sov, 0.0), 1.0), current=i, voltage=u_oc - i * r,
                         clamped=clamped)


def power_limits(state, pack, dt: float = 1.0, rating: float = np.inf) -> tuple[float, float]:
    """(max discharge W, max charge W) at the terminals; charge as a positive magnitude.

    Discharge is bounded by U_oc^2/4R and by the energy left above the
    floor within ``dt``; charge by the room below the ceiling.
    """
    if isinstance(pack, BatteryPack):
        frac, lo, hi = state.soc, pack.soc_min, pack.soc_max
        u_oc, r = pack.ocv(frac), pack.resistance(frac)
        q = pack.q_nom * 3600.0
        lo = 0.0  # range runs stop at the floor; only the ceiling is hard
    else:
        frac, lo, hi = state.sov, 0.0, 1.0
        u_oc, r, q = frac * pack.u_max, pack.resistance, pack.capacitance * pack.u_max
    dis = min(K.discharge_limit(u_oc, r, frac, lo, q, dt), u_oc * u_oc / (4.0 * r), rating)
    chg = min(-K.charge_limit(u_oc, r, frac, hi, q, dt), rating)
    return max(dis, 0.0), max(chg, 0.0)
