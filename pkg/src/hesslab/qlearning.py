"""Tabular Q-learning over (power demand, ultracapacitor SOV) states and
(discharge threshold, charge threshold) joint actions.

Training follows an episode-gated scheme: an epsilon-greedy exploration
episode is replayed into the table only when its total reward beats the
current criterion, after which a greedy episode resets the criterion.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels as K
from .ems import CHG_BOUNDS, DISCHG_BOUNDS, EmsAction

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StateGrid:
    p_lo: float = -30e3
    p_hi: float = 50e3
    n_p: int = 5
    sov_lo: float = 0.0
    sov_hi: float = 1.0
    n_sov: int = 5

    def __post_init__(self):
        if not (self.p_lo < self.p_hi and self.sov_lo < self.sov_hi):
            raise ValueError("state bounds must be increasing")
        if self.n_p < 1 or self.n_sov < 1:
            raise ValueError("need at least one bin per axis")

    @property
    def n_states(self) -> int:
        return self.n_p * self.n_sov

    def as_array(self) -> np.ndarray:
        return np.array([self.p_lo, self.p_hi, self.n_p, self.sov_lo, self.sov_hi, self.n_sov],
                        dtype=float)

    def power_edges(self) -> np.ndarray:
        return np.linspace(self.p_lo, self.p_hi, self.n_p + 1)

    def sov_edges(self) -> np.ndarray:
        return np.linspace(self.sov_lo, self.sov_hi, self.n_sov + 1)


@dataclass(frozen=True)
class ActionGrid:
    n_dischg: int = 100
    n_chg: int = 100
    dischg_bounds: tuple = DISCHG_BOUNDS
    chg_bounds: tuple = CHG_BOUNDS

    @property
    def n_actions(self) -> int:
        return self.n_dischg * self.n_chg

    @property
    def dischg_values(self) -> np.ndarray:
        return np.linspace(*self.dischg_bounds, self.n_dischg)

    @property
    def chg_values(self) -> np.ndarray:
        return np.linspace(*self.chg_bounds, self.n_chg)

    def unravel(self, a: int) -> tuple[int, int]:
        return divmod(int(a), self.n_chg)

    def action(self, a: int) -> EmsAction:
        i, j = self.unravel(a)
        return EmsAction(float(self.dischg_values[i]), float(self.chg_values[j]))


def discretize(p_em: float, sov: float, grid: StateGrid = StateGrid()) -> tuple[int, int]:
    """Equal-width bins, clamped to the edge bins outside the bounds."""
    return (K.bin_index(p_em, grid.p_lo, grid.p_hi, grid.n_p),
            K.bin_index(sov, grid.sov_lo, grid.sov_hi, grid.n_sov))


@dataclass
class QTable:
    grid: StateGrid = field(default_factory=StateGrid)
    actions: ActionGrid = field(default_factory=ActionGrid)
    mu: float = 0.1
    gamma: float = 0.95
    epsilon: float = 0.1
    values: np.ndarray = None

    def __post_init__(self):
        if not 0.0 < self.mu <= 1.0:
            raise ValueError("learning rate must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        shape = (self.grid.n_states, self.actions.n_actions)
        if self.values is None:
            self.values = np.zeros(shape)
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != shape:
            raise ValueError(f"table shape {self.values.shape} != {shape}")

    def state_index(self, s) -> int:
        """Flat index from an (i_power, i_sov) pair or a flat int."""
        if isinstance(s, tuple):
            return s[0] * self.grid.n_sov + s[1]
        return int(s)

    def copy(self) -> "QTable":
        return QTable(self.grid, self.actions, self.mu, self.gamma, self.epsilon,
                      self.values.copy())

    # -- persistence: JSON header line + one CSV row per state ---------------
    def save(self, path) -> None:
        header = {
            "grid": self.grid.__dict__,
            "actions": {"n_dischg": self.actions.n_dischg, "n_chg": self.actions.n_chg,
                        "dischg_bounds": list(self.actions.dischg_bounds),
                        "chg_bounds": list(self.actions.chg_bounds)},
            "power_edges": self.grid.power_edges().tolist(),
            "sov_edges": self.grid.sov_edges().tolist(),
            "mu": self.mu, "gamma": self.gamma, "epsilon": self.epsilon,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            np.savetxt(fh, self.values, delimiter=",", fmt="%.17g")

    @classmethod
    def load(cls, path) -> "QTable":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline()[1:])
            values = np.loadtxt(fh, delimiter=",", ndmin=2)
        a = header["actions"]
        return cls(StateGrid(**header["grid"]),
                   ActionGrid(a["n_dischg"], a["n_chg"], tuple(a["dischg_bounds"]),
                              tuple(a["chg_bounds"])),
                   header["mu"], header["gamma"], header["epsilon"], values)


def select_action(q: QTable, state, eps: float, rng: np.random.Generator) -> tuple[int, int]:
    """Epsilon-greedy; greedy ties go to the lowest flat action index."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    row = q.values[q.state_index(state)]
    u = rng.random()
    r = int(rng.integers(row.size))
    return q.actions.unravel(K.select_index(row, eps, u, r))


def q_update(q: QTable, s, a, r: float, s_next) -> QTable:
    """Single-entry update toward r + gamma * max_a' Q(s', a'); in place."""
    if isinstance(a, tuple):
        a = a[0] * q.actions.n_chg + a[1]
    K.q_update(q.values, q.state_index(s), int(a), float(r), q.state_index(s_next),
               q.mu, q.gamma)
    return q


class Episode(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.rewards))


@dataclass
class TrainingResult:
    table: QTable  # table at the end of training
    best_table: QTable  # snapshot that produced the best greedy total
    best_totals: np.ndarray  # running best greedy total, one per episode
    criterion: np.ndarray  # the gate value after each episode
    episode_rewards: np.ndarray  # exploration totals
    updates: np.ndarray  # bool per episode
    failures: int = 0

    def curve_rows(self):
        for i in range(self.best_totals.size):
            yield i + 1, self.best_totals[i], self.episode_rewards[i]


def train(env: Callable[[QTable, float, np.random.Generator], Episode], episodes: int,
          q: QTable | None = None, seed: int = 0, progress: Callable | None = None) -> TrainingResult:
    """Episode-gated Q-learning.

    ``env(q, eps, rng)`` runs one full cycle with epsilon-greedy actions from
    ``q`` and returns the transition record.  An exception from ``env``
    discards that episode.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    q = q if q is not None else QTable()
    rng = np.random.default_rng(seed)
    r_tot = 0.0
    best = -np.inf
    best_q = q.copy()
    best_totals = np.empty(episodes)
    criterion = np.empty(episodes)
    explore = np.full(episodes, np.nan)
    updates = np.zeros(episodes, dtype=bool)
    failures = 0
    for i in range(episodes):
        try:
            ep = env(q, q.epsilon, rng)
            explore[i] = ep.total
            if ep.total > r_tot:
                K.replay(q.values, ep.states, ep.actions, ep.rewards, ep.next_states,
                         ep.states.size, q.mu, q.gamma)
                greedy = env(q, 0.0, rng)
                r_tot = greedy.total
                updates[i] = True
                if r_tot > best:
                    best = r_tot
                    best_q = q.copy()
        except Exception as exc:  # noqa: BLE001 - discard and continue
            failures += 1
            log.warning("episode %d discarded: %s", i + 1, exc)
        # running best of the gate value, which starts at zero
        best_totals[i] = max(best_totals[i - 1] if i else 0.0, r_tot)
        criterion[i] = r_tot
        if progress is not None:
            progress(i + 1, best_totals[i])
    return TrainingResult(q, best_q, best_totals, criterion, explore, updates, failures)


def export_policy(q: QTable):
    """Greedy (discharge W, charge W) per state bin, as a list of dict rows."""
    a_idx = np.argmax(q.values, axis=1)
    p_edges = q.grid.power_edges()
    s_edges = q.grid.sov_edges()
    rows = []
    for s in range(q.grid.n_states):
        ip, isv = divmod(s, q.grid.n_sov)
        act = q.actions.action(int(a_idx[s]))
        rows.append({
            "power_bin": ip, "sov_bin": isv,
            "power_lo": p_edges[ip], "power_hi": p_edges[ip + 1],
            "sov_lo": s_edges[isv], "sov_hi": s_edges[isv + 1],
            "action": int(a_idx[s]), "dischg_w": act.dischg, "chg_w": act.chg,
        })
    return rows


def write_policy_csv(q: QTable, path) -> None:
    rows = export_policy(q)
    cols = list(rows[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(r[c])) if isinstance(r[c], float) else str(r[c])
                              for c in cols) + "\n")
