"""Particle swarm and genetic-algorithm minimisers, plus the two pipelines
built on them: heuristic-EMS tuning and aging-model identification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .aging import AgingDataset, AgingParams, r_squared
from .config import Config
from .cycles import DrivingCycle
from .ems import HeuristicParams1, HeuristicParams2, RewardSpec

log = logging.getLogger(__name__)

PENALTY = 1e12


class OptimizationError(RuntimeError):
    pass


def _bounds(bounds):
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError("bounds must be a sequence of (lower, upper) pairs")
    if not np.all(np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
        raise ValueError("bounds must be finite with lower < upper")
    return b[:, 0].copy(), b[:, 1].copy()


def _finite(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return np.where(np.isfinite(v), v, np.inf)


# ---------------------------------------------------------------------------
# particle swarm
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PsoConfig:
    bounds: tuple
    population: int = 20
    generations: int = 20
    inertia: float = 0.7
    a1: float = 1.5
    a2: float = 1.5
    seed: int = 0

    def __post_init__(self):
        _bounds(self.bounds)
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")


@dataclass
class OptResult:
    x: np.ndarray
    cost: float
    history: np.ndarray  # best cost after each generation, starting at generation 0
    evaluations: int


def pso_minimize(cost, config: PsoConfig, init=None, init_velocity=None) -> OptResult:
    """Global-best PSO.

    Velocity and position follow

        v <- I v + a1 c1 (P_i - x) + a2 c2 (S - x),   x <- x + v

    with c1, c2 drawn uniformly per particle and dimension every
    generation; positions are clamped to the box.  Generation 0 evaluates
    the initial swarm and each of the ``generations`` updates evaluates it
    again, so ``history`` has ``generations + 1`` entries.  ``init``
    overrides the random start (its row count sets the swarm size).
    """
    lo, hi = _bounds(config.bounds)
    rng = np.random.default_rng(config.seed)
    dim = lo.size
    x = (np.array(init, dtype=float, ndmin=2) if init is not None
         else lo + rng.random((config.population, dim)) * (hi - lo))
    if x.shape[1] != dim:
        raise ValueError("initial positions do not match the bounds dimension")
    x = np.clip(x, lo, hi)
    v = np.zeros_like(x) if init_velocity is None else np.array(init_velocity, dtype=float).reshape(x.shape)
    f = _finite([cost(p) for p in x])
    if not np.any(np.isfinite(f)):
        raise OptimizationError("cost is non-finite for every initial particle")
    p_best, p_cost = x.copy(), f.copy()
    g = int(np.argmin(p_cost))
    s_best, s_cost = p_best[g].copy(), float(p_cost[g])
    history = [s_cost]
    evals = x.shape[0]
    for _ in range(config.generations):
        c1 = rng.random(x.shape)
        c2 = rng.random(x.shape)
        v = config.inertia * v + config.a1 * c1 * (p_best - x) + config.a2 * c2 * (s_best - x)
        x = np.clip(x + v, lo, hi)
        f = _finite([cost(p) for p in x])
        evals += x.shape[0]
        better = f < p_cost
        p_best[better] = x[better]
        p_cost[better] = f[better]
        g = int(np.argmin(p_cost))
        if p_cost[g] < s_cost:
            s_best, s_cost = p_best[g].copy(), float(p_cost[g])
        history.append(s_cost)
    return OptResult(s_best, s_cost, np.array(history), evals)


# ---------------------------------------------------------------------------
# genetic algorithm
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GaConfig:
    bounds: tuple
    population: int = 200
    generations: int = 500
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_scale: float = 0.1  # fraction of each bound width
    mutation_decay: float = 0.98  # per-generation shrink of the step size
    mutation_floor: float = 1e-7
    tournament: int = 3
    blend: float = 0.25  # crossover extrapolation beyond the parents
    seed: int = 0

    def __post_init__(self):
        _bounds(self.bounds)
        if self.blend < 0:
            raise ValueError("blend must be non-negative")
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and >= 4")
        if self.generations < 1 or self.tournament < 1:
            raise ValueError("generations and tournament size must be >= 1")
        if not (0 <= self.crossover_rate <= 1 and 0 <= self.mutation_rate <= 1):
            raise ValueError("rates must lie in [0, 1]")


def ga_fit(residual, config: GaConfig, vectorized: bool = False) -> OptResult:
    """Least-squares fit by a real-coded GA.

    Minimises ``sum(residual(x)**2)`` with tournament selection, blend
    crossover, Gaussian mutation (step size shrinking geometrically each
    generation down to a floor) and an elite of one.  With
    ``vectorized=True`` the residual maps a (pop, dim) array to
    (pop, n_residuals).
    """
    lo, hi = _bounds(config.bounds)
    width = hi - lo
    rng = np.random.default_rng(config.seed)
    n, dim = config.population, lo.size

    def evaluate(pop):
        if vectorized:
            r = np.asarray(residual(pop), dtype=float)
            return _finite(np.sum(r * r, axis=1))
        return _finite([np.sum(np.asarray(residual(p), dtype=float) ** 2) for p in pop])

    pop = lo + rng.random((n, dim)) * width
    fit = evaluate(pop)
    if not np.any(np.isfinite(fit)):
        raise OptimizationError("residual is non-finite for every initial individual")
    history = []
    evals = n
    scale = config.mutation_scale
    for _ in range(config.generations):
        elite = int(np.argmin(fit))
        history.append(float(fit[elite]))
        if config.generations == len(history):
            break
        # tournament selection: index of the fittest among k random picks
        picks = rng.integers(n, size=(n, config.tournament))
        parents = pop[picks[np.arange(n), np.argmin(fit[picks], axis=1)]]
        mates = parents[rng.permutation(n)]
        # blend crossover: children on the extended line through both parents
        cross = rng.random(n) < config.crossover_rate
        lam = rng.uniform(-config.blend, 1.0 + config.blend, size=(n, 1))
        child = np.where(cross[:, None], parents + lam * (mates - parents), parents)
        mut = rng.random((n, dim)) < config.mutation_rate
        child = child + mut * rng.standard_normal((n, dim)) * (scale * width)
        child = np.clip(child, lo, hi)
        child[0] = pop[elite]
        child_fit = evaluate(child[1:])
        fit = np.concatenate(([fit[elite]], child_fit))
        pop = child
        evals += n - 1
        scale = max(scale * config.mutation_decay, config.mutation_floor)
    elite = int(np.argmin(fit))
    return OptResult(pop[elite].copy(), float(fit[elite]), np.array(history), evals)


# ---------------------------------------------------------------------------
# aging-model identification
# ---------------------------------------------------------------------------
LOG_SIGMA_BOUNDS = (-6.0, 1.0)
Z_BOUNDS = (0.1, 1.0)
ABD_BOUNDS = ((-200.0, 200.0), (1.0, 2e4), (0.0, 500.0))


@dataclass
class AgingFit:
    params: AgingParams
    stage1: list  # (sigma_i, z_i) per dataset
    z_mean: float
    stage2_sigma: np.ndarray
    model_sigma: np.ndarray  # sigma reproduced by the fitted (alpha, beta, delta)
    r2_stage2: np.ndarray
    r2: np.ndarray  # full-model R^2 per dataset

    def report(self) -> list[dict]:
        rows = []
        for i, (s1, z1) in enumerate(self.stage1):
            rows.append({"dataset": i + 1, "stage1_sigma": s1, "stage1_z": z1,
                         "z_mean": self.z_mean, "stage2_sigma": float(self.stage2_sigma[i]),
                         "model_sigma": float(self.model_sigma[i]),
                         "r2_stage2": float(self.r2_stage2[i]), "r2_model": float(self.r2[i])})
        return rows


def identify_aging(datasets, ga: GaConfig | None = None, e_a: float = AgingParams.e_a,
                   r_g: float = AgingParams.r_g, seed: int = 0) -> AgingFit:
    """Three-stage identification of (alpha, beta, delta, z).

    1. fit (sigma_i, z_i) per dataset, searching log10(sigma);
    2. fix z at the mean of the z_i and re-fit each sigma_i;
    3. fit (alpha, beta, delta) to the three (condition, sigma_i) points
       with the residual taken on log(sigma).

    Each stage uses one seed for all datasets, so identical data gives
    identical per-dataset results.
    """
    datasets = list(datasets)
    if len(datasets) != 3:
        raise ValueError(f"identification needs exactly three datasets, got {len(datasets)}")
    for d in datasets:
        if not isinstance(d, AgingDataset):
            raise TypeError("datasets must be AgingDataset instances")
    base = ga if ga is not None else GaConfig(bounds=((0, 1),))

    def cfg(bounds, k):
        return GaConfig(bounds, base.population, base.generations, base.crossover_rate,
                        base.mutation_rate, base.mutation_scale, base.mutation_decay,
                        base.mutation_floor, base.tournament, base.blend, seed + k)

    stage1 = []
    for i, d in enumerate(datasets):
        # search the loss at a mid-range throughput instead of sigma itself:
        # that decouples the two genes along the sigma-z valley
        ah_ref = float(np.exp(np.mean(np.log(d.ah))))
        rel = d.ah / ah_ref

        def res(X, rel=rel, y=d.loss):
            return y[None, :] - 10.0 ** X[:, :1] * rel[None, :] ** X[:, 1:2]

        bounds = ((LOG_SIGMA_BOUNDS[0], LOG_SIGMA_BOUNDS[1] + np.log10(ah_ref)), Z_BOUNDS)
        out = ga_fit(res, cfg(bounds, 0), vectorized=True)
        z_i = float(out.x[1])
        stage1.append((float(10.0 ** out.x[0] / ah_ref**z_i), z_i))
    z_mean = float(np.mean([z for _, z in stage1]))

    sig2 = np.empty(3)
    for i, d in enumerate(datasets):
        powd = d.ah ** z_mean

        def res(X, powd=powd, y=d.loss):
            return y[None, :] - 10.0 ** X[:, :1] * powd[None, :]

        out = ga_fit(res, cfg((LOG_SIGMA_BOUNDS,), 10), vectorized=True)
        sig2[i] = 10.0 ** out.x[0]

    soc = np.array([d.soc for d in datasets])
    ic = np.array([d.c_rate for d in datasets])
    temp = np.array([d.temperature_c for d in datasets])
    log_target = np.log(sig2)

    def res3(X):
        a, b, dl = X[:, :1], X[:, 1:2], X[:, 2:3]
        pre = a * soc[None, :] + b
        safe = np.where(pre > 0, pre, np.nan)
        return log_target[None, :] - (np.log(safe) + (-e_a + dl * ic[None, :])
                                      / (r_g * (273.15 + temp[None, :])))

    out = ga_fit(res3, cfg(ABD_BOUNDS, 20), vectorized=True)
    alpha, beta, delta = (float(v) for v in out.x)
    params = AgingParams(alpha=alpha, beta=beta, delta=delta, z=z_mean, e_a=e_a, r_g=r_g)
    model_sigma = np.array([K.severity(s, c, t, alpha, beta, delta, e_a, r_g)
                            for s, c, t in zip(soc, ic, temp)])
    r2_s2 = np.array([r_squared(d.loss, s * d.ah ** z_mean) for d, s in zip(datasets, sig2)])
    r2 = np.array([r_squared(d.loss, s * d.ah ** z_mean) for d, s in zip(datasets, model_sigma)])
    return AgingFit(params, stage1, z_mean, sig2, model_sigma, r2_s2, r2)


# ---------------------------------------------------------------------------
# heuristic-EMS tuning
# ---------------------------------------------------------------------------
H1_BOUNDS = ((-10.0, 10.0),) * 8
H2_BOUNDS = ((0.0, 40e3), (-20e3, 0.0), (0.0, 1.0), (0.0, 1.0))


@dataclass
class TuneResult:
    method: int
    x: np.ndarray
    cost: float
    history: np.ndarray
    baseline_cost: float
    converged_generation: int
    failures: int = 0
    extra: dict = field(default_factory=dict)


def convergence_generation(history, tol: float = 0.01) -> int:
    """First generation (0 = initial swarm) within ``tol`` of the total improvement."""
    h = np.asarray(history, dtype=float)
    span = h[0] - h[-1]
    if span <= 0:
        return 0
    return int(np.argmax(h - h[-1] <= tol * span))


def episode_cost(trace_reward: np.ndarray, bias: float) -> float:
    """Minimisation cost of one cycle: sum over steps of (bias - reward)."""
    return float(np.sum(bias - trace_reward))


def tune_heuristic(method: int, cycle: DrivingCycle, config: Config = Config(),
                   reward: RewardSpec | None = None, pso: PsoConfig | None = None,
                   seed: int = 0, cost_fn=None) -> TuneResult:
    """PSO over the heuristic coefficients with the one-cycle cost as objective.

    A failed or truncated simulation scores ``PENALTY`` and is logged.
    ``cost_fn`` replaces the simulation-based cost (for diagnostics).
    """
    from .harness import Policy, Simulator, calibrate_reward, heuristic_policy

    if method not in (1, 2):
        raise ValueError("method must be 1 or 2")
    reward = reward if reward is not None else calibrate_reward(config)
    bounds = H1_BOUNDS if method == 1 else H2_BOUNDS
    ps = config.pso
    pso = pso if pso is not None else PsoConfig(bounds, ps.population, ps.generations,
                                                ps.inertia, ps.a1, ps.a2, seed)
    sim = Simulator(config, cycle, reward)
    failures = 0

    def run_policy(policy: Policy) -> float:
        x = sim.initial_state(config.sim.initial_soc, config.sim.initial_sov)
        done, status = sim.run(policy, x, stop_soc=config.battery.soc_min)
        if status != K.RUN_OK or done < sim.n_steps:
            raise RuntimeError(f"simulation stopped after {done} of {sim.n_steps} steps")
        return episode_cost(sim.trace[:done, K.C_REWARD], reward.bias)

    def cost(vec):
        nonlocal failures
        if cost_fn is not None:
            return cost_fn(vec)
        try:
            return run_policy(heuristic_policy(method, vec))
        except Exception as exc:  # noqa: BLE001 - penalised, search continues
            failures += 1
            log.warning("heuristic %d candidate %s failed: %s", method, np.round(vec, 4), exc)
            return PENALTY

    base_cost = run_policy(Policy("baseline"))
    out = pso_minimize(cost, pso)
    gen = convergence_generation(out.history)
    log.info("heuristic %d: cost %.6g (baseline %.6g), converged at generation %d",
             method, out.cost, base_cost, gen)
    return TuneResult(method, out.x, out.cost, out.history, base_cost, gen, failures)


def default_heuristic_vector(method: int) -> np.ndarray:
    return (HeuristicParams1() if method == 1 else HeuristicParams2()).vector()
