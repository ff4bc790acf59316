"""Experiment orchestration: single-cycle traces, range-until-empty,
repeated-cycle aging with depot recharge, and strategy comparison.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .config import Config
from .cycles import M_PER_MILE, DrivingCycle, get_cycle
from .ems import HeuristicParams1, HeuristicParams2, RewardSpec
from .plant import _vector
from .qlearning import ActionGrid, Episode, QTable, StateGrid, train

log = logging.getLogger(__name__)

STRATEGIES = {
    "baseline": K.S_BASELINE,
    "threshold": K.S_THRESHOLD,
    "heuristic1": K.S_HEURISTIC1,
    "heuristic2": K.S_HEURISTIC2,
    "qlearning": K.S_QLEARNING,
}
MODES = ("single", "until-empty", "n-cycles")

# exported trace columns, in output order
TRACE_COLUMNS = {
    "time_s": K.C_T,
    "speed_target_mps": K.C_VTGT,
    "speed_mps": K.C_V,
    "pedal_acc_pct": K.C_PEDAL_ACC,
    "pedal_brake_pct": K.C_PEDAL_BRK,
    "torque_em_nm": K.C_TEM,
    "speed_em_radps": K.C_WEM,
    "p_em_demand_w": K.C_PEM_PLANT,
    "p_em_w": K.C_PEM,
    "p_bat_w": K.C_PBAT,
    "p_cap_w": K.C_PCAP,
    "p_bat_terminal_w": K.C_PBAT_T,
    "p_cap_terminal_w": K.C_PCAP_T,
    "i_bat_a": K.C_IBAT,
    "u_bat_v": K.C_UBAT,
    "i_cap_a": K.C_ICAP,
    "u_cap_v": K.C_UCAP,
    "soc": K.C_SOC,
    "sov": K.C_SOV,
    "sigma": K.C_SIGMA,
    "reward": K.C_REWARD,
    "ah_throughput": K.C_AH,
    "capacity_loss_pct": K.C_QLOSS,
    "state": K.C_STATE,
    "action": K.C_ACTION,
    "dischg_threshold_w": K.C_DISCHG,
    "chg_threshold_w": K.C_CHG,
    "e_bat_drawn_j": K.C_EBAT,
    "e_cap_drawn_j": K.C_ECAP,
    "e_mech_j": K.C_EMECH,
    "e_resist_j": K.C_ERES,
    "e_friction_j": K.C_EFRIC,
    "d_kinetic_j": K.C_DKE,
    "e_refused_j": K.C_EREFUSED,
    "distance_m": K.C_DIST,
    "events": K.C_EVENTS,
}

EVENT_NAMES = {
    K.EV_CAP_CLAMP: "cap_clamp",
    K.EV_DCDC_REROUTE: "dcdc_reroute",
    K.EV_DCDC_LIMIT: "dcdc_limit",
    K.EV_REGEN_REFUSED: "regen_refused",
    K.EV_BAT_DEPLETED: "battery_depleted",
    K.EV_BAT_INFEASIBLE: "battery_infeasible",
    K.EV_CAP_INFEASIBLE: "cap_infeasible",
    K.EV_FRICTION: "friction",
}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    strategy: str = "baseline"
    cycle: str = "udds_like"
    mode: str = "single"
    n_cycles: int = 1
    initial_soc: float = 1.0
    initial_sov: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {sorted(STRATEGIES)}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if not (0.0 <= self.initial_soc <= 1.0 and 0.0 <= self.initial_sov <= 1.0):
            raise ValueError("initial SOC and SOV must lie in [0, 1]")
        if self.n_cycles < 0:
            raise ValueError("n_cycles must be non-negative")


@dataclass
class Policy:
    """Strategy code plus whatever it needs: coefficients or a Q-table."""

    strategy: str
    coef: np.ndarray = field(default_factory=lambda: np.zeros(8))
    qtable: QTable | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.coef = np.ascontiguousarray(self.coef, dtype=float)
        if self.strategy == "qlearning" and self.qtable is None:
            raise ValueError("the qlearning strategy needs a Q-table")

    @property
    def code(self) -> int:
        return STRATEGIES[self.strategy]

    @classmethod
    def from_config(cls, strategy: str, config: Config, qtable: QTable | None = None,
                    thresholds=None) -> "Policy":
        if strategy == "heuristic1":
            return cls(strategy, config.heuristic1.vector())
        if strategy == "heuristic2":
            return cls(strategy, config.heuristic2.vector())
        if strategy == "threshold":
            if thresholds is None:
                raise ValueError("the threshold strategy needs (dischg, chg)")
            return cls(strategy, np.asarray(thresholds, dtype=float))
        return cls(strategy, qtable=qtable)


def parameter_vector(config: Config, reward: RewardSpec) -> np.ndarray:
    prm = _vector(config.vehicle, config.em)
    conv, bat, cap, ag = config.converter, config.battery, config.ultracap, config.aging
    prm[K.P_ETA_ACDC] = conv.acdc_efficiency
    prm[K.P_ETA_DCDC] = conv.dcdc_efficiency
    prm[K.P_DCDC_RATED] = conv.dcdc_rated_power
    prm[K.P_DCDC_MAP] = 1.0 if conv.has_map else 0.0
    prm[K.P_BAT_QNOM] = bat.q_nom
    prm[K.P_BAT_SOC_MIN] = bat.soc_min
    prm[K.P_BAT_SOC_MAX] = bat.soc_max
    prm[K.P_BAT_TEMP] = bat.temperature_c
    prm[K.P_CAP_C] = cap.capacitance
    prm[K.P_CAP_UMAX] = cap.u_max
    prm[K.P_CAP_R] = cap.resistance
    prm[K.P_CAP_SOV_MIN] = cap.sov_min
    prm[K.P_CAP_SOV_MAX] = cap.sov_max
    prm[K.P_AG_ALPHA] = ag.alpha
    prm[K.P_AG_BETA] = ag.beta
    prm[K.P_AG_DELTA] = ag.delta
    prm[K.P_AG_Z] = ag.z
    prm[K.P_AG_EA] = ag.e_a
    prm[K.P_AG_RG] = ag.r_g
    prm[K.P_AG_SOC_SCALE] = ag.soc_scale
    prm[K.P_W_E] = reward.w_e
    prm[K.P_BIAS] = reward.bias
    prm[K.P_EBAT_NORM] = reward.e_bat_norm
    prm[K.P_ECAP_NORM] = reward.e_cap_norm
    prm[K.P_SIGMA_NORM] = reward.sigma_norm
    prm[K.P_DT] = config.sim.dt
    prm[K.P_NSUB] = config.sim.substeps
    prm[K.P_HAS_CAP] = 1.0
    prm[K.P_H1_POWER_SCALE] = config.heuristic1.power_scale
    return prm


class Simulator:
    """Compiled-kernel front end bound to one configuration and one cycle.

    Holds the flat parameter vector, the table arrays and a reusable trace
    buffer; each :meth:`run` call advances a caller-owned state vector.
    """

    def __init__(self, config: Config, cycle: DrivingCycle, reward: RewardSpec | None = None):
        if abs(cycle.dt - config.sim.dt) > 1e-12:
            raise ValueError(f"cycle dt {cycle.dt} differs from configured dt {config.sim.dt}")
        self.config = config
        self.cycle = cycle
        self.reward = reward if reward is not None else RewardSpec(config.reward.w_e, config.reward.bias)
        self.prm = parameter_vector(config, self.reward)
        em, bat, q = config.em, config.battery, config.qlearning
        self._tables = (em.speed_breakpoints, em.torque_breakpoints, em.efficiency,
                        bat.ocv_soc, bat.ocv_pack, bat.r_soc, bat.r_pack,
                        *config.converter.map_arrays())
        self.grid = StateGrid(q.p_lo, q.p_hi, q.n_power, 0.0, 1.0, q.n_sov)
        self.actions = ActionGrid(q.n_dischg, q.n_chg)
        self._grid = self.grid.as_array()
        self._dis = self.actions.dischg_values
        self._chg = self.actions.chg_values
        n = max(len(cycle) - 1, 0)
        self.n_steps = n
        self.trace = np.zeros((max(n, 1), K.N_COLS))
        self._no_explore_u = np.ones(max(n, 1))
        self._no_explore_a = np.zeros(max(n, 1), dtype=np.int64)
        self._empty_q = np.zeros((self.grid.n_states, self.actions.n_actions))

    def initial_state(self, soc: float = 1.0, sov: float = 0.95) -> np.ndarray:
        x = np.zeros(K.N_STATE)
        x[K.X_V] = self.cycle.speed[0] if len(self.cycle) else 0.0
        x[K.X_SOC] = soc
        x[K.X_SOV] = sov
        return x

    def new_table(self) -> QTable:
        q = self.config.qlearning
        return QTable(self.grid, self.actions, q.mu, q.gamma, q.epsilon)

    def run(self, policy: Policy, state: np.ndarray, start: int = 0, stop_soc: float = -1.0,
            eps: float = 0.0, explore_u=None, explore_a=None) -> tuple[int, int]:
        """Run steps ``start..`` of the cycle; rows land in ``self.trace[:done]``."""
        v = self.cycle.speed[start:]
        g = self.cycle.grade[start:]
        if v.size < 2:
            return 0, K.RUN_OK
        qtab = self._empty_q
        if policy.qtable is not None:
            if policy.qtable.values.shape != qtab.shape:
                raise ValueError("Q-table shape does not match the configured grids")
            qtab = policy.qtable.values
        if explore_u is None:
            explore_u, explore_a = self._no_explore_u[start:], self._no_explore_a[start:]
        return K.run_cycle(v, g, self.prm, *self._tables, policy.code, policy.coef, qtab,
                           self._grid, self._dis, self._chg, float(eps), explore_u, explore_a,
                           state, self.trace, float(stop_soc))


def calibrate_reward(config: Config, cycle: DrivingCycle | None = None) -> RewardSpec:
    """Reward normalisers from a baseline pass over the training cycle.

    Energy normalisers are the largest per-step battery draw; the severity
    normaliser is the largest per-step severity.  Explicit values in the
    configuration take precedence.
    """
    rc = config.reward
    if None not in (rc.e_bat_norm, rc.e_cap_norm, rc.sigma_norm):
        return RewardSpec(rc.w_e, rc.bias, rc.e_bat_norm, rc.e_cap_norm, rc.sigma_norm)
    cycle = cycle if cycle is not None else get_cycle(config.sim.train_cycle, config.sim.dt)
    sim = Simulator(config, cycle)
    x = sim.initial_state(config.sim.initial_soc, config.sim.initial_sov)
    done, _ = sim.run(Policy("baseline"), x)
    tr = sim.trace[:done]
    e_max = float(np.max(np.abs(tr[:, K.C_EBAT]))) if done else 0.0
    s_max = float(np.max(tr[:, K.C_SIGMA])) if done else 0.0
    e_norm = e_max if e_max > 0 else 1.0
    s_norm = s_max if s_max > 0 else 1.0
    return RewardSpec(rc.w_e, rc.bias,
                      rc.e_bat_norm if rc.e_bat_norm is not None else e_norm,
                      rc.e_cap_norm if rc.e_cap_norm is not None else e_norm,
                      rc.sigma_norm if rc.sigma_norm is not None else s_norm)


def event_counts(codes: np.ndarray) -> dict:
    codes = codes.astype(np.int64)
    return {name: int(np.count_nonzero(codes & bit)) for bit, name in EVENT_NAMES.items()}


def trace_totals(trace: np.ndarray, dt: float) -> dict:
    """Totals obtained by integrating a trace block."""
    wh = dt / 3600.0
    if trace.shape[0] == 0:
        zero = ("energy_em_wh", "energy_bat_bus_wh", "energy_cap_bus_wh", "energy_bat_terminal_wh",
                "energy_cap_terminal_wh", "energy_bat_drawn_wh", "energy_cap_drawn_wh",
                "ah_throughput", "total_reward", "rms_speed_error", "max_speed_error")
        return {k: 0.0 for k in zero}
    err = trace[:, K.C_V] - trace[:, K.C_VTGT]
    return {
        "energy_em_wh": float(np.sum(trace[:, K.C_PEM]) * wh),
        "energy_bat_bus_wh": float(np.sum(trace[:, K.C_PBAT]) * wh),
        "energy_cap_bus_wh": float(np.sum(trace[:, K.C_PCAP]) * wh),
        "energy_bat_terminal_wh": float(np.sum(trace[:, K.C_PBAT_T]) * wh),
        "energy_cap_terminal_wh": float(np.sum(trace[:, K.C_PCAP_T]) * wh),
        "energy_bat_drawn_wh": float(np.sum(trace[:, K.C_EBAT]) / 3600.0),
        "energy_cap_drawn_wh": float(np.sum(trace[:, K.C_ECAP]) / 3600.0),
        "ah_throughput": float(np.sum(np.abs(trace[:, K.C_IBAT])) * wh),
        "total_reward": float(np.sum(trace[:, K.C_REWARD])),
        "rms_speed_error": float(np.sqrt(np.mean(err**2))),
        "max_speed_error": float(np.max(np.abs(err))),
    }


@dataclass
class SimResult:
    spec: ExperimentSpec
    trace: np.ndarray = field(repr=False)
    totals: dict
    events: dict
    complete: bool

    def column(self, name: str) -> np.ndarray:
        return self.trace[:, TRACE_COLUMNS[name]]

    @property
    def n_steps(self) -> int:
        return self.trace.shape[0]


def _resolve_policy(spec: ExperimentSpec, config: Config, policy, qtable, reward, cycle):
    if policy is not None:
        if policy.strategy != spec.strategy:
            raise ValueError("policy and spec disagree on the strategy")
        return policy
    if spec.strategy == "qlearning" and qtable is None:
        log.info("no Q-table supplied; training in-line for %d episodes",
                 config.qlearning.episodes)
        train_cycle = get_cycle(config.sim.train_cycle, config.sim.dt)
        qtable = train_qlearning(config, train_cycle, reward=reward, seed=spec.seed).best_table
    return Policy.from_config(spec.strategy, config, qtable)


def simulate(spec: ExperimentSpec, config: Config = Config(), policy: Policy | None = None,
             qtable: QTable | None = None, reward: RewardSpec | None = None,
             cycle: DrivingCycle | None = None) -> SimResult:
    """One pass over the cycle with full traces.

    Stops early, flagged incomplete, if the battery reaches its floor.
    """
    cycle = cycle if cycle is not None else get_cycle(spec.cycle, config.sim.dt)
    reward = reward if reward is not None else calibrate_reward(config)
    policy = _resolve_policy(spec, config, policy, qtable, reward, cycle)
    sim = Simulator(config, cycle, reward)
    x = sim.initial_state(spec.initial_soc, spec.initial_sov)
    x0 = x.copy()
    done, status = sim.run(policy, x, stop_soc=config.battery.soc_min)
    trace = sim.trace[:done].copy()
    complete = status == K.RUN_OK
    if not complete:
        log.warning("battery depleted after %d of %d steps; result truncated", done, sim.n_steps)
    totals = trace_totals(trace, config.sim.dt)
    totals.update(
        ah_throughput_state=float(x[K.X_AH] - x0[K.X_AH]),
        capacity_loss_pct=float(x[K.X_QLOSS]),
        distance_m=float(x[K.X_DIST]),
        distance_km=float(x[K.X_DIST] / 1000.0),
        distance_mi=float(x[K.X_DIST] / M_PER_MILE),
        final_soc=float(x[K.X_SOC]),
        final_sov=float(x[K.X_SOV]),
        steps=int(done),
        complete=bool(complete),
    )
    return SimResult(spec, trace, totals, event_counts(trace[:, K.C_EVENTS]), complete)


# ---------------------------------------------------------------------------
# Q-learning episodes
# ---------------------------------------------------------------------------
class QEnv:
    """Episode source for :func:`hesslab.qlearning.train`: one full cycle."""

    def __init__(self, sim: Simulator, initial_soc: float = 1.0, initial_sov: float = 0.95):
        self.sim = sim
        self.initial_soc = initial_soc
        self.initial_sov = initial_sov

    def __call__(self, q: QTable, eps: float, rng: np.random.Generator) -> Episode:
        sim = self.sim
        n = sim.n_steps
        if eps > 0.0:
            u = rng.random(n)
            a = rng.integers(q.actions.n_actions, size=n)
        else:
            u, a = None, None
        x = sim.initial_state(self.initial_soc, self.initial_sov)
        done, _ = sim.run(Policy("qlearning", qtable=q), x, eps=eps, explore_u=u, explore_a=a)
        if done < n:
            raise SimulationError(f"episode ended after {done} of {n} steps")
        tr = sim.trace[:done]
        states = tr[:, K.C_STATE].astype(np.int64)
        nxt = np.empty_like(states)
        nxt[:-1] = states[1:]
        # terminal transition: zero demand at the final SOV
        nxt[-1] = (K.bin_index(0.0, q.grid.p_lo, q.grid.p_hi, q.grid.n_p) * q.grid.n_sov
                   + K.bin_index(x[K.X_SOV], q.grid.sov_lo, q.grid.sov_hi, q.grid.n_sov))
        return Episode(states, tr[:, K.C_ACTION].astype(np.int64),
                       tr[:, K.C_REWARD].copy(), nxt)


def train_qlearning(config: Config, cycle: DrivingCycle | None = None, episodes: int | None = None,
                    reward: RewardSpec | None = None, seed: int = 0, progress=None):
    cycle = cycle if cycle is not None else get_cycle(config.sim.train_cycle, config.sim.dt)
    reward = reward if reward is not None else calibrate_reward(config, cycle)
    sim = Simulator(config, cycle, reward)
    env = QEnv(sim, config.sim.initial_soc, config.sim.initial_sov)
    episodes = episodes if episodes is not None else config.qlearning.episodes
    return train(env, episodes, sim.new_table(), seed=seed, progress=progress)


# ---------------------------------------------------------------------------
# repeated-cycle experiments
# ---------------------------------------------------------------------------
@dataclass
class RangeResult:
    strategy: str
    range_m: float
    cycles_completed: int
    steps: int
    capped: bool
    failed: bool
    message: str
    ah_throughput: float
    capacity_loss_pct: float
    per_cycle: list = field(repr=False, default_factory=list)

    @property
    def range_mi(self) -> float:
        return self.range_m / M_PER_MILE

    @property
    def range_km(self) -> float:
        return self.range_m / 1000.0


def range_test(spec: ExperimentSpec, config: Config = Config(), policy: Policy | None = None,
               qtable: QTable | None = None, reward: RewardSpec | None = None,
               cycle: DrivingCycle | None = None, max_cycles: int | None = None) -> RangeResult:
    """Repeat the cycle until SOC first reaches the floor."""
    cycle = cycle if cycle is not None else get_cycle(spec.cycle, config.sim.dt)
    reward = reward if reward is not None else calibrate_reward(config)
    policy = _resolve_policy(spec, config, policy, qtable, reward, cycle)
    max_cycles = max_cycles if max_cycles is not None else config.sim.max_cycles
    sim = Simulator(config, cycle, reward)
    x = sim.initial_state(spec.initial_soc, spec.initial_sov)
    floor = config.battery.soc_min
    rows = []
    steps = 0
    completed = 0
    stopped = False
    for c in range(max_cycles):
        done, status = sim.run(policy, x, stop_soc=floor)
        steps += done
        rows.append({"cycle": c + 1, "steps": done, "distance_m": x[K.X_DIST],
                     "soc": x[K.X_SOC], "sov": x[K.X_SOV], "ah": x[K.X_AH],
                     "capacity_loss_pct": x[K.X_QLOSS]})
        if status == K.RUN_STOPPED:
            stopped = True
            break
        completed += 1
    capped = not stopped
    failed = stopped and completed == 0
    msg = ""
    if failed:
        msg = f"{spec.strategy}: battery reached the floor before completing one cycle"
    elif capped:
        msg = f"{spec.strategy}: stopped by the {max_cycles}-cycle cap before depletion"
        log.warning(msg)
    return RangeResult(spec.strategy, float(x[K.X_DIST]), completed, steps, capped, failed, msg,
                       float(x[K.X_AH]), float(x[K.X_QLOSS]), rows)


@dataclass
class AgingResult:
    strategy: str
    cycles: int
    capacity_loss_pct: float
    ah_throughput: float
    recharges: int
    distance_m: float
    per_cycle: list = field(repr=False, default_factory=list)


def aging_test(spec: ExperimentSpec, config: Config = Config(), policy: Policy | None = None,
               qtable: QTable | None = None, reward: RewardSpec | None = None,
               cycle: DrivingCycle | None = None) -> AgingResult:
    """``spec.n_cycles`` repetitions with instantaneous, aging-free recharge
    to full whenever SOC reaches the floor."""
    cycle = cycle if cycle is not None else get_cycle(spec.cycle, config.sim.dt)
    reward = reward if reward is not None else calibrate_reward(config)
    policy = _resolve_policy(spec, config, policy, qtable, reward, cycle)
    sim = Simulator(config, cycle, reward)
    x = sim.initial_state(spec.initial_soc, spec.initial_sov)
    floor = config.battery.soc_min
    recharges = 0
    rows = []
    for c in range(spec.n_cycles):
        start = 0
        while True:
            done, status = sim.run(policy, x, start=start, stop_soc=floor)
            start += done
            if status != K.RUN_STOPPED:
                break
            recharges += 1
            x[K.X_SOC] = config.battery.soc_max
            if start >= sim.n_steps:
                break
        rows.append({"cycle": c + 1, "soc": x[K.X_SOC], "sov": x[K.X_SOV], "ah": x[K.X_AH],
                     "capacity_loss_pct": x[K.X_QLOSS], "recharges": recharges})
    return AgingResult(spec.strategy, spec.n_cycles, float(x[K.X_QLOSS]), float(x[K.X_AH]),
                       recharges, float(x[K.X_DIST]), rows)


def percent_delta(value: float, reference: float) -> float:
    if reference == 0.0:
        return 0.0 if value == 0.0 else math.copysign(math.inf, value)
    return 100.0 * (value - reference) / reference


@dataclass
class Comparison:
    rows: list  # one dict per strategy
    deltas: list  # one dict per ordered pair


def compare(policies: dict, cycle: str | DrivingCycle, config: Config = Config(),
            n_cycles: int = 500, reward: RewardSpec | None = None, initial_sov: float | None = None,
            max_cycles: int | None = None) -> Comparison:
    """Range, capacity loss and Ah-throughput per strategy, with pairwise
    percentage deltas.  ``policies`` maps a label to a :class:`Policy`."""
    if len(policies) < 2:
        raise ValueError("compare needs at least two strategies")
    cyc = cycle if isinstance(cycle, DrivingCycle) else get_cycle(cycle, config.sim.dt)
    reward = reward if reward is not None else calibrate_reward(config)
    sov0 = config.sim.initial_sov if initial_sov is None else initial_sov
    rows = []
    for label, pol in policies.items():
        spec = ExperimentSpec(pol.strategy, cyc.name, "n-cycles", n_cycles,
                              config.sim.initial_soc, sov0)
        rng_res = range_test(spec, config, pol, reward=reward, cycle=cyc, max_cycles=max_cycles)
        age = aging_test(spec, config, pol, reward=reward, cycle=cyc)
        rows.append({"label": label, "strategy": pol.strategy, "cycle": cyc.name,
                     "range_mi": rng_res.range_mi, "range_km": rng_res.range_km,
                     "range_capped": rng_res.capped, "capacity_loss_pct": age.capacity_loss_pct,
                     "ah_throughput": age.ah_throughput, "recharges": age.recharges,
                     "cycles": n_cycles})
    deltas = []
    for a in rows:
        for b in rows:
            if a is b:
                continue
            deltas.append({"label": a["label"], "reference": b["label"],
                           "range_pct": percent_delta(a["range_mi"], b["range_mi"]),
                           "capacity_loss_pct": percent_delta(a["capacity_loss_pct"],
                                                              b["capacity_loss_pct"]),
                           "ah_pct": percent_delta(a["ah_throughput"], b["ah_throughput"])})
    return Comparison(rows, deltas)


def heuristic_policy(method: int, vector) -> Policy:
    if method == 1:
        return Policy("heuristic1", HeuristicParams1.from_vector(vector).vector())
    if method == 2:
        return Policy("heuristic2", HeuristicParams2.from_vector(vector).vector())
    raise ValueError("method must be 1 or 2")
