import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hesslab.plant import (ConverterParams, EmParams, PlantState, VehicleParams, driver_feedforward,
                           driver_step, em_electrical_power, feedforward_torque, pedal_positions,
                           vehicle_step, vehicle_step_energies)

VEH = VehicleParams()
EM = EmParams()


def flat_em(eta=0.9):
    return EmParams(speed_breakpoints=[0.0, 2000.0], torque_breakpoints=[0.0, 500.0],
                    efficiency=np.full((2, 2), eta))


def test_feedforward_cruise():
    t1 = feedforward_torque(0.0, 10.0, 0.0, VEH, EM)
    assert t1 == pytest.approx(0.3 * (105.95 + 0.1 + 43.4))
    assert t1 == pytest.approx(44.84, abs=0.01)
    assert driver_feedforward(0.0, 10.0, 0.0, VEH, EM) == pytest.approx(0.112, abs=5e-4)


def test_feedforward_zero_road_load():
    veh = VehicleParams(c0=0.0, c1=0.0, c2=0.0)
    assert feedforward_torque(0.0, 0.0, 0.0, veh, EM) == 0.0
    assert driver_feedforward(0.0, 0.0, 0.0, veh, EM) == 0.0


def test_feedforward_includes_grade():
    veh = VehicleParams(c0=0.0, c1=0.0, c2=0.0)
    t1 = feedforward_torque(0.0, 0.0, math.pi / 2, veh, EM)
    assert t1 == pytest.approx(0.3 * veh.mass * veh.gravity)


def test_feedforward_braking_branch_weighting():
    veh = VehicleParams(c0=0.0, c1=0.0, c2=0.0, brake_distribution=0.2)
    t1 = feedforward_torque(-1.0, 5.0, 0.0, veh, EM)
    assert t1 < 0
    w = 0.8 - 0.5 / (veh.mass * veh.gravity * 0.3 * 2.55)
    assert driver_feedforward(-1.0, 5.0, 0.0, veh, EM) == pytest.approx(w * t1 / 400.0)


def test_feedforward_rejects_negative_speed():
    with pytest.raises(ValueError):
        driver_feedforward(0.0, -1.0, 0.0, VEH, EM)


@pytest.mark.parametrize("u, acc, brk", [(0.5, 50.0, 0.0), (-1.7, 0.0, 100.0), (0.0, 0.0, 0.0),
                                         (2.0, 100.0, 0.0), (-0.25, 0.0, 25.0)])
def test_pedal_mapping(u, acc, brk):
    assert pedal_positions(u) == pytest.approx((acc, brk))


def test_driver_step_identity():
    veh = VehicleParams(c0=0.0, c1=0.0, c2=0.0)
    st_ = PlantState()
    assert driver_step(0.0, 0.0, 1.0, st_, veh, EM) == (0.0, 0.0)
    assert st_.integrator == 0.0


def test_driver_step_pi():
    veh = VehicleParams(c0=0.0, c1=0.0, c2=0.0)
    st_ = PlantState(speed=0.0)
    acc, brk = driver_step(1.0, 0.0, 1.0, st_, veh, EM)
    assert st_.integrator == 1.0
    assert acc == pytest.approx(100 * (0.25 + 0.03)) and brk == 0.0
    with pytest.raises(ValueError):
        driver_step(1.0, 0.0, 0.0, st_, veh, EM)


def test_em_power_branches():
    em = flat_em(0.9)
    assert em_electrical_power(100.0, 100.0, em) == pytest.approx(11111.111, rel=1e-6)
    assert em_electrical_power(100.0, -100.0, em) == pytest.approx(-9000.0)
    assert em_electrical_power(300.0, 0.0, em) == 0.0


def test_em_power_clamps_out_of_envelope(caplog):
    em = flat_em(1.0)
    with caplog.at_level(logging.WARNING):
        p = em_electrical_power(100.0, 1000.0, em)
    assert p == pytest.approx(100.0 * 400.0)
    assert "outside envelope" in caplog.text


def test_converter_chain():
    from hesslab.plant import converter_chain
    conv = ConverterParams()
    assert converter_chain(1000.0, conv) == pytest.approx(1000 / (0.92 * 0.95))
    assert converter_chain(1000.0, conv) == pytest.approx(1144.16, abs=0.01)
    assert converter_chain(0.0, conv) == 0.0
    assert converter_chain(-1000.0, conv) == pytest.approx(-874.0)
    # the DC/DC stage is only on the battery path
    assert converter_chain(1000.0, conv, battery_path=False) == pytest.approx(1000 / 0.92)
    with pytest.raises(ValueError):
        converter_chain(float("nan"), conv)


def test_vehicle_rest_equilibrium():
    s = vehicle_step(PlantState(), 0.0, 0.0, 1.0, VEH, EM)
    assert s.speed == 0.0 and s.em_power == 0.0


def test_vehicle_force_balance():
    v = 10.0
    f_res = 105.95 + 0.01 * v + 0.434 * v * v
    pedal = f_res * 0.3 / (9.59 * 400.0) * 100.0
    s = vehicle_step(PlantState(speed=v), pedal, 0.0, 1.0, VEH, EM)
    assert s.speed == pytest.approx(v, abs=1e-12)


def test_vehicle_full_throttle_hand_step():
    v = 10.0
    w = v / 0.3 * 9.59
    torque = 400.0 if w * 400.0 <= 143e3 else 143e3 / w
    f_trac = torque * 9.59 / 0.3
    f_res = 105.95 + 0.01 * v + 0.434 * v * v
    expected = v + (f_trac - f_res) / 1722.0 * 1.0
    s = vehicle_step(PlantState(speed=v), 100.0, 0.0, 1.0, VEH, EM)
    assert s.speed == pytest.approx(expected, rel=1e-12)
    assert s.em_torque == pytest.approx(torque)
    assert s.em_power > 0


def test_vehicle_speed_floor():
    s = vehicle_step(PlantState(speed=0.5), 0.0, 100.0, 1.0, VEH, EM)
    assert s.speed == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 40.0), st.floats(-1.0, 1.0), st.integers(1, 4))
def test_work_energy_balance(v, u, nsub):
    acc, brk = pedal_positions(u)
    e = vehicle_step_energies(PlantState(speed=v), acc, brk, 1.0, VEH, EM, substeps=nsub)
    scale = max(abs(e["mech"]), abs(e["resist"]), abs(e["dke"]), 1.0)
    assert abs(e["mech"] - e["resist"] - e["friction"] - e["dke"]) <= 1e-6 * scale


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 40.0), st.floats(-1.0, 1.0))
def test_sign_convention_and_pedals(v, u):
    acc, brk = pedal_positions(u)
    assert acc == 0.0 or brk == 0.0
    s = vehicle_step(PlantState(speed=v), acc, brk, 1.0, VEH, EM)
    assert s.speed >= 0.0
    if s.em_power > 0:
        assert s.em_torque > 0
    if s.em_power < 0:
        assert s.em_torque < 0


def test_parameter_validation():
    with pytest.raises(ValueError):
        VehicleParams(mass=0.0)
    with pytest.raises(ValueError):
        EmParams(min_torque=10.0)
    with pytest.raises(ValueError):
        ConverterParams(dcdc_efficiency=1.5)
    with pytest.raises(ValueError):
        PlantState(speed=-1.0)
