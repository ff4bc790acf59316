"""Power-split strategies and the reward shared by Q-learning and PSO tuning.

All functions take the EM-side (bus) power demand in W and return the
ultracapacitor share; the battery takes the remainder, so
``P_bat + P_cap == P_EM`` holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K

DISCHG_BOUNDS = (0.0, 40e3)
CHG_BOUNDS = (-20e3, 0.0)


@dataclass(frozen=True)
class EmsAction:
    """Ultracapacitor engage thresholds (W)."""

    dischg: float
    chg: float

    def __post_init__(self):
        lo, hi = DISCHG_BOUNDS
        if not lo <= self.dischg <= hi:
            raise ValueError(f"discharge threshold {self.dischg} outside {DISCHG_BOUNDS}")
        lo, hi = CHG_BOUNDS
        if not lo <= self.chg <= hi:
            raise ValueError(f"charge threshold {self.chg} outside {CHG_BOUNDS}")


def split_threshold(p_em: float, action: EmsAction) -> tuple[float, float]:
    """(P_bat, P_cap): the battery is capped at the discharge threshold and
    floored at the charge threshold; inside the dead band it takes all."""
    p_bat, p_cap = K.split_threshold(p_em, action.dischg, action.chg)
    return p_bat, p_cap


def baseline_power(p_em: float) -> tuple[float, float]:
    return p_em, 0.0


@dataclass(frozen=True)
class HeuristicParams1:
    """Coefficients (a11..a14) for P_dmd >= 0 and (a21..a24) for P_dmd < 0.

    Inside the bracket P_dmd enters normalised by ``power_scale`` (W).
    """

    a1: tuple = (-3.89, -4.99, 2.12, -0.63)
    a2: tuple = (0.29, -3.87, -4.01, -4.62)
    power_scale: float = 50e3

    def __post_init__(self):
        if len(self.a1) != 4 or len(self.a2) != 4:
            raise ValueError("method 1 needs four coefficients per branch")
        if not np.all(np.isfinite(self.vector())):
            raise ValueError("coefficients must be finite")

    def vector(self) -> np.ndarray:
        return np.array([*self.a1, *self.a2], dtype=float)

    @classmethod
    def from_vector(cls, x, power_scale=50e3):
        x = [float(v) for v in x]
        return cls(tuple(x[:4]), tuple(x[4:]), power_scale)


@dataclass(frozen=True)
class HeuristicParams2:
    a_dischg: float = 34301.00
    a_chg: float = -10210.17
    a1_ratio: float = 0.83
    a2_ratio: float = 0.70

    def __post_init__(self):
        if not (0.0 <= self.a1_ratio <= 1.0 and 0.0 <= self.a2_ratio <= 1.0):
            raise ValueError("ratios must lie in [0, 1]")
        if self.a_dischg < 0.0 or self.a_chg > 0.0:
            raise ValueError("need a_dischg >= 0 >= a_chg")

    def vector(self) -> np.ndarray:
        return np.array([self.a_dischg, self.a_chg, self.a1_ratio, self.a2_ratio])

    @classmethod
    def from_vector(cls, x):
        return cls(*(float(v) for v in x))


def heuristic1_power(p_dmd, sov, params: HeuristicParams1 = HeuristicParams1(),
                     bounds=(0.5, 1.0)) -> float:
    return K.heuristic1(p_dmd, sov, params.vector(), bounds[0], bounds[1], params.power_scale)


def heuristic2_power(p_dmd, sov, params: HeuristicParams2 = HeuristicParams2(),
                     bounds=(0.5, 1.0)) -> float:
    return K.heuristic2(p_dmd, sov, params.vector(), bounds[0], bounds[1])


@dataclass(frozen=True)
class RewardSpec:
    w_e: float = 0.5
    bias: float = 1.0
    e_bat_norm: float = 1.0
    e_cap_norm: float = 1.0
    sigma_norm: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.w_e <= 1.0:
            raise ValueError("w_e must lie in [0, 1]")
        if min(self.e_bat_norm, self.e_cap_norm, self.sigma_norm) <= 0.0:
            raise ValueError("normalizers must be positive")


def reward(p_bat, p_cap, sigma, dt, spec: RewardSpec) -> float:
    """Per-step reward: weighted energy and severity penalties plus bias."""
    return K.reward_value(p_bat * dt, p_cap * dt, sigma, spec.w_e, spec.e_bat_norm,
                          spec.e_cap_norm, spec.sigma_norm, spec.bias)


def pso_cost(p_bat, p_cap, sigma, dt, spec: RewardSpec) -> float:
    """Per-step minimisation cost: the reward without bias, sign reversed."""
    return spec.bias - reward(p_bat, p_cap, sigma, dt, spec)
