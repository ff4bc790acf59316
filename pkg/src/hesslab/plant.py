"""Forward-looking vehicle plant: driver, electric machine, converters and
longitudinal dynamics.

Power sign convention everywhere: positive means the storage side is
discharging (propulsion), negative means regeneration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VehicleParams:
    """Vehicle body, road load and driver gains.

    ``extra_inertia`` (kg m^2) is rotating inertia added to the curb mass in
    the plant as ``extra_inertia / r_whl**2``.  ``inertia`` (J_v) is the
    wheel-referred inertia the driver feedforward uses; with the default
    radius it already represents the translating mass, so it is not added
    to the plant a second time by default.
    """

    mass: float = 1722.0
    wheel_radius: float = 0.3
    gear_ratio: float = 9.59
    c0: float = 105.95
    c1: float = 0.01
    c2: float = 0.434
    inertia: float = 150.0
    extra_inertia: float = 0.0
    h_cg_mm: float = 500.0
    wheelbase_mm: float = 2550.0
    brake_distribution: float = 0.0
    gravity: float = 9.81
    kp: float = 0.25
    ki: float = 0.03
    feedforward_at_motor: bool = True

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.wheel_radius <= 0:
            raise ValueError("wheel_radius must be positive")
        if self.gear_ratio <= 0:
            raise ValueError("gear_ratio must be positive")
        if self.c2 < 0:
            raise ValueError("c2 must be non-negative")

    @property
    def effective_mass(self) -> float:
        return self.mass + self.extra_inertia / self.wheel_radius**2


def analytic_efficiency_map(
    speed_max: float = 1256.6,
    torque_max: float = 400.0,
    eta_max: float = 0.95,
    k_cu: float = 0.08,
    k_fe: float = 0.05,
    n_speed: int = 25,
    n_torque: int = 21,
):
    """Default EM efficiency surface sampled on a grid.

    eta = eta_max - k_cu (T/T_max)^2 - k_fe (w/w_max)^2, clamped to [0.6, 0.95].
    Returns (speed breakpoints rad/s, torque breakpoints Nm, table).
    """
    w = np.linspace(0.0, speed_max, n_speed)
    t = np.linspace(0.0, torque_max, n_torque)
    tab = eta_max - k_cu * (t[None, :] / torque_max) ** 2 - k_fe * (w[:, None] / speed_max) ** 2
    return w, t, np.clip(tab, 0.6, 0.95)


@dataclass(frozen=True)
class EmParams:
    max_torque: float = 400.0
    max_power: float = 143e3
    min_torque: float = -400.0
    speed_breakpoints: np.ndarray = field(default=None, repr=False)
    torque_breakpoints: np.ndarray = field(default=None, repr=False)
    efficiency: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.efficiency is None:
            w, t, tab = analytic_efficiency_map(torque_max=self.max_torque)
            object.__setattr__(self, "speed_breakpoints", w)
            object.__setattr__(self, "torque_breakpoints", t)
            object.__setattr__(self, "efficiency", tab)
        for name in ("speed_breakpoints", "torque_breakpoints", "efficiency"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        tab = self.efficiency
        if tab.shape != (self.speed_breakpoints.size, self.torque_breakpoints.size):
            raise ValueError("efficiency map shape does not match its breakpoints")
        if np.any(tab <= 0.05) or np.any(tab > 1.0):
            raise ValueError("efficiency values must lie in (0.05, 1]")
        if self.max_torque <= 0 or self.max_power <= 0 or self.min_torque >= 0:
            raise ValueError("torque/power envelope must satisfy min < 0 < max")

    def torque_envelope(self, w: float) -> tuple[float, float]:
        """(min, max) admissible torque at speed ``w`` rad/s."""
        return (K.torque_min(w, self.min_torque, self.max_power),
                K.torque_max(w, self.max_torque, self.max_power))

    def eta(self, w: float, t: float) -> float:
        return K.em_eta(w, t, self.speed_breakpoints, self.torque_breakpoints, self.efficiency)

    @classmethod
    def from_csv(cls, path, **kwargs) -> "EmParams":
        w, t, tab = read_grid_csv(path)
        return cls(speed_breakpoints=w, torque_breakpoints=t, efficiency=tab, **kwargs)


@dataclass(frozen=True)
class ConverterParams:
    dcdc_rated_power: float = 30e3
    dcdc_efficiency: float = 0.95
    acdc_efficiency: float = 0.92
    # optional map over (bus power W, battery current A)
    dcdc_power_breakpoints: np.ndarray = field(default=None, repr=False)
    dcdc_current_breakpoints: np.ndarray = field(default=None, repr=False)
    dcdc_map: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not (0 < self.dcdc_efficiency <= 1 and 0 < self.acdc_efficiency <= 1):
            raise ValueError("converter efficiencies must lie in (0, 1]")
        if self.dcdc_map is not None:
            tab = np.asarray(self.dcdc_map, dtype=float)
            if np.any(tab <= 0) or np.any(tab > 1):
                raise ValueError("DC/DC map values must lie in (0, 1]")

    @property
    def has_map(self) -> bool:
        return self.dcdc_map is not None

    def map_arrays(self):
        if self.dcdc_map is None:
            z = np.zeros(2)
            return z, z.copy(), np.ones((2, 2))
        return (np.ascontiguousarray(self.dcdc_power_breakpoints, dtype=float),
                np.ascontiguousarray(self.dcdc_current_breakpoints, dtype=float),
                np.ascontiguousarray(self.dcdc_map, dtype=float))


def read_grid_csv(path):
    """Read a 2-D map: first row torque (or second-axis) breakpoints after a
    corner cell, first column first-axis breakpoints."""
    raw = np.loadtxt(path, delimiter=",", dtype=float)
    return raw[1:, 0].copy(), raw[0, 1:].copy(), raw[1:, 1:].copy()


@dataclass
class PlantState:
    speed: float = 0.0
    integrator: float = 0.0
    em_speed: float = 0.0
    em_torque: float = 0.0
    pedal_acc: float = 0.0
    pedal_brake: float = 0.0
    em_power: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be non-negative")


def _vector(vehicle: VehicleParams, em: EmParams) -> np.ndarray:
    prm = np.zeros(K.N_PARAMS)
    prm[K.P_MASS] = vehicle.mass
    prm[K.P_MEFF] = vehicle.effective_mass
    prm[K.P_RWHL] = vehicle.wheel_radius
    prm[K.P_GEAR] = vehicle.gear_ratio
    prm[K.P_C0] = vehicle.c0
    prm[K.P_C1] = vehicle.c1
    prm[K.P_C2] = vehicle.c2
    prm[K.P_JV] = vehicle.inertia
    prm[K.P_HCG] = vehicle.h_cg_mm / 1000.0
    prm[K.P_BW] = vehicle.wheelbase_mm / 1000.0
    prm[K.P_BRAKE_DIST] = vehicle.brake_distribution
    prm[K.P_G] = vehicle.gravity
    prm[K.P_TMAX] = em.max_torque
    prm[K.P_TMIN] = em.min_torque
    prm[K.P_PMAX] = em.max_power
    prm[K.P_KP] = vehicle.kp
    prm[K.P_KI] = vehicle.ki
    prm[K.P_FF_GEAR] = vehicle.gear_ratio if vehicle.feedforward_at_motor else 1.0
    prm[K.P_NSUB] = 1
    return prm


def driver_feedforward(accel, speed, grade, vehicle: VehicleParams, em: EmParams,
                       torque_ratio: float = 1.0) -> float:
    """Feedforward pedal command u_ff.

    The road-load/inertia torque T1 is normalised by the maximum EM torque
    (propulsion) or by the regenerative limit weighted by the rear-axle
    braking share (braking).  ``torque_ratio`` divides T1 first; pass the
    gear ratio to refer the wheel torque to the motor shaft, which is what
    the closed-loop driver does.
    """
    if speed < 0:
        raise ValueError("speed must be non-negative")
    prm = _vector(vehicle, em)
    t1 = K.feedforward_torque(accel, speed, grade, prm) / torque_ratio
    return K.feedforward(t1, em.max_torque, em.min_torque, prm)


def feedforward_torque(accel, speed, grade, vehicle: VehicleParams, em: EmParams) -> float:
    return K.feedforward_torque(accel, speed, grade, _vector(vehicle, em))


def pedal_positions(u_driver: float) -> tuple[float, float]:
    """(accelerator %, brake %) from the summed driver command."""
    a, b = K.pedals(u_driver)
    return a * 100.0, b * 100.0


def driver_step(target_speed, speed, dt, state: PlantState, vehicle: VehicleParams,
                em: EmParams, target_accel: float = 0.0, grade: float = 0.0):
    """One driver update; advances the PI integrator in ``state``.

    Returns (accelerator %, brake %).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    prm = _vector(vehicle, em)
    w = speed / vehicle.wheel_radius * vehicle.gear_ratio
    t_lo, t_hi = em.torque_envelope(w)
    t1 = K.feedforward_torque(target_accel, speed, grade, prm) / prm[K.P_FF_GEAR]
    u_ff = K.feedforward(t1, t_hi, t_lo, prm)
    err = target_speed - speed
    state.integrator += err * dt
    u = u_ff + vehicle.kp * err + vehicle.ki * state.integrator
    acc, brk = pedal_positions(u)
    state.pedal_acc, state.pedal_brake = acc, brk
    return acc, brk


def em_electrical_power(w: float, torque: float, em: EmParams) -> float:
    """Electrical power at the EM terminals for shaft speed/torque."""
    t_lo, t_hi = em.torque_envelope(w)
    if torque > t_hi or torque < t_lo:
        log.warning("EM torque %.1f Nm outside envelope [%.1f, %.1f] at %.1f rad/s; clamped",
                    torque, t_lo, t_hi, w)
        torque = min(max(torque, t_lo), t_hi)
    if torque == 0.0:
        return 0.0
    return K.em_power(w, torque, em.eta(w, torque))


def converter_chain(power: float, conv: ConverterParams, battery_path: bool = True) -> float:
    """Storage-side power for a given EM-side (bus) power.

    Discharge divides by the chain efficiency, charge multiplies.  The DC/DC
    stage only sits on the battery path.
    """
    if not math.isfinite(power):
        raise ValueError("power must be finite")
    eff = conv.acdc_efficiency * (conv.dcdc_efficiency if battery_path else 1.0)
    if battery_path and abs(power) > conv.dcdc_rated_power:
        log.info("battery-path power %.0f W exceeds DC/DC rating %.0f W",
                 power, conv.dcdc_rated_power)
    return K.bus_to_terminal(power, eff)


def vehicle_step(state: PlantState, pedal_acc: float, pedal_brake: float, dt: float,
                 vehicle: VehicleParams, em: EmParams, grade: float = 0.0,
                 substeps: int = 1) -> PlantState:
    """Advance the longitudinal dynamics; pedals in percent."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    prm = _vector(vehicle, em)
    v, t_em, w_em, e_elec, *_ = K.vehicle_advance(
        state.speed, pedal_acc / 100.0, pedal_brake / 100.0, grade, dt, substeps, prm,
        em.speed_breakpoints, em.torque_breakpoints, em.efficiency)
    return replace(state, speed=v, em_speed=w_em, em_torque=t_em,
                   pedal_acc=pedal_acc, pedal_brake=pedal_brake, em_power=e_elec / dt)


def vehicle_step_energies(state: PlantState, pedal_acc, pedal_brake, dt,
                          vehicle: VehicleParams, em: EmParams, grade=0.0, substeps=1):
    """Energy terms of one step: mechanical, resistance, friction, dKE (J)."""
    prm = _vector(vehicle, em)
    out = K.vehicle_advance(state.speed, pedal_acc / 100.0, pedal_brake / 100.0, grade, dt,
                            substeps, prm, em.speed_breakpoints, em.torque_breakpoints,
                            em.efficiency)
    return {"mech": out[4], "resist": out[5], "friction": out[6], "dke": out[7]}
