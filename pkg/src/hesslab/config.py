"""Run configuration: one TOML file with a section per subsystem.

Every key is optional; omitted keys keep the defaults of the matching
dataclass.  Unknown sections or keys are rejected so typos do not pass
silently.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .aging import AgingParams
from .ems import HeuristicParams1, HeuristicParams2
from .plant import ConverterParams, EmParams, VehicleParams, read_grid_csv
from .storage import BatteryPack, UltracapPack, read_table_csv


@dataclass(frozen=True)
class RewardConfig:
    w_e: float = 0.5
    bias: float = 1.0
    # None -> calibrated from a baseline pass over the training cycle
    e_bat_norm: float | None = None
    e_cap_norm: float | None = None
    sigma_norm: float | None = None


@dataclass(frozen=True)
class QConfig:
    n_power: int = 5
    n_sov: int = 5
    p_lo: float = -30e3
    p_hi: float = 50e3
    n_dischg: int = 100
    n_chg: int = 100
    mu: float = 0.1
    gamma: float = 0.95
    epsilon: float = 0.1
    episodes: int = 3000


@dataclass(frozen=True)
class PsoSettings:
    population: int = 20
    generations: int = 20
    inertia: float = 0.7
    a1: float = 1.5
    a2: float = 1.5


@dataclass(frozen=True)
class GaSettings:
    population: int = 200
    generations: int = 500
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_scale: float = 0.1
    tournament: int = 3


@dataclass(frozen=True)
class SimSettings:
    dt: float = 1.0
    substeps: int = 1
    initial_soc: float = 1.0
    initial_sov: float = 0.95
    max_cycles: int = 2000
    train_cycle: str = "udds_like"


@dataclass(frozen=True)
class Config:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    em: EmParams = field(default_factory=EmParams)
    converter: ConverterParams = field(default_factory=ConverterParams)
    battery: BatteryPack = field(default_factory=BatteryPack)
    ultracap: UltracapPack = field(default_factory=UltracapPack)
    aging: AgingParams = field(default_factory=AgingParams)
    reward: RewardConfig = field(default_factory=RewardConfig)
    qlearning: QConfig = field(default_factory=QConfig)
    heuristic1: HeuristicParams1 = field(default_factory=HeuristicParams1)
    heuristic2: HeuristicParams2 = field(default_factory=HeuristicParams2)
    pso: PsoSettings = field(default_factory=PsoSettings)
    ga: GaSettings = field(default_factory=GaSettings)
    sim: SimSettings = field(default_factory=SimSettings)

    def replace(self, **sections) -> "Config":
        return dataclasses.replace(self, **sections)

    def to_dict(self) -> dict:
        """JSON-friendly dump of every scalar setting (arrays summarised)."""
        out = {}
        for f in dataclasses.fields(self):
            sec = getattr(self, f.name)
            d = {}
            for sf in dataclasses.fields(sec):
                val = getattr(sec, sf.name)
                if isinstance(val, np.ndarray):
                    val = val.tolist()
                elif isinstance(val, tuple):
                    val = list(val)
                d[sf.name] = val
            out[f.name] = d
        return out


_FILE_KEYS = {
    "em": {"efficiency_csv"},
    "battery": {"ocv_csv", "resistance_csv"},
    "converter": {"dcdc_map_csv"},
}


def _section(cls, values: dict, name: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - allowed
    if unknown:
        raise ValueError(f"[{name}] unknown keys: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    return cls(**kw)


def load_config(path=None) -> Config:
    """Read a TOML configuration; ``None`` gives the defaults."""
    if path is None:
        return Config()
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    base = path.parent
    kinds = {f.name: f.type for f in dataclasses.fields(Config)}
    default = Config()
    sections = {}
    for name, values in raw.items():
        if name not in kinds:
            raise ValueError(f"unknown config section [{name}]")
        values = dict(values)
        files = {k: values.pop(k) for k in list(values) if k in _FILE_KEYS.get(name, ())}
        cls = type(getattr(default, name))
        if name == "em" and "efficiency_csv" in files:
            w, t, tab = read_grid_csv(base / files["efficiency_csv"])
            values.update(speed_breakpoints=w, torque_breakpoints=t, efficiency=tab)
        if name == "battery":
            if "ocv_csv" in files:
                s, v = read_table_csv(base / files["ocv_csv"])
                values.update(ocv_soc=s, ocv_cell=v)
            if "resistance_csv" in files:
                s, v = read_table_csv(base / files["resistance_csv"])
                values.update(r_soc=s, r_cell=v)
        if name == "converter" and "dcdc_map_csv" in files:
            p, i, tab = read_grid_csv(base / files["dcdc_map_csv"])
            values.update(dcdc_power_breakpoints=p, dcdc_current_breakpoints=i, dcdc_map=tab)
        sections[name] = _section(cls, values, name)
    return dataclasses.replace(default, **sections)
