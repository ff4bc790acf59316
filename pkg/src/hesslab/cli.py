"""Command-line entry point: ``hesslab <command> [options]``.

Every command writes its outputs plus ``manifest.json`` under ``--out``.
Failures exit nonzero and print a JSON error record on stderr (also saved
as ``error.json`` when the output directory is writable).
"""

from __future__ import annotations

import dataclasses
import functools
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .aging import fixture_datasets, load_dataset, save_dataset, save_params
from .config import load_config
from .cycles import get_cycle
from .harness import (TRACE_COLUMNS, ExperimentSpec, Policy, aging_test, calibrate_reward, compare,
                      heuristic_policy, range_test, simulate, train_qlearning)
from .optimize import GaConfig, identify_aging, tune_heuristic
from .qlearning import QTable, write_policy_csv
from .reports import (aligned_table, write_key_values, write_manifest, write_matrix, write_rows,
                      write_text)

log = logging.getLogger("hesslab")

STRATEGY_CHOICES = ["baseline", "heuristic1", "heuristic2", "qlearning"]
H1_NAMES = ["a11", "a12", "a13", "a14", "a21", "a22", "a23", "a24"]
H2_NAMES = ["a_dischg", "a_chg", "a1_ratio", "a2_ratio"]
# trace series exported in long format for plotting
FIGURE_SERIES = ["speed_target_mps", "speed_mps", "pedal_acc_pct", "pedal_brake_pct", "p_em_w",
                 "p_bat_w", "p_cap_w", "soc", "sov", "sigma", "reward"]


class Run:
    """Per-invocation context: resolved config, output dir, files written."""

    def __init__(self, command, config_path, cycle, seed, out, strategy, extra):
        self.command = command
        self.config = load_config(config_path)
        self.config_path = config_path
        self.cycle_name = cycle or self.config.sim.train_cycle
        self.seed = seed
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.strategy = strategy
        self.files = []
        self.options = {"config": config_path, "cycle": self.cycle_name, "seed": seed,
                        "strategy": strategy, **extra}

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def cycle(self, name=None):
        return get_cycle(name or self.cycle_name, self.config.sim.dt)

    def finish(self):
        write_manifest(self.out, self.command, self.files, self.config.to_dict(), self.options)


def command(fn):
    """Attach the shared flags and the error/manifest handling."""

    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                  default=None, help="TOML configuration file.")
    @click.option("--cycle", default=None,
                  help="Bundled cycle name (udds_like, wltp_like) or CSV path.")
    @click.option("--seed", type=int, default=0, show_default=True)
    @click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
    @click.option("--strategy", type=click.Choice(STRATEGY_CHOICES), default="baseline",
                  show_default=True)
    @functools.wraps(fn)
    def wrapper(config_path, cycle, seed, out, strategy, **kwargs):
        name = fn.__name__.replace("_cmd", "").replace("_", "-")
        try:
            extra = {k: (str(v) if isinstance(v, Path) else v) for k, v in kwargs.items()}
            run = Run(name, config_path, cycle, seed, out, strategy, extra)
            fn(run, **kwargs)
            run.finish()
        except Exception as exc:  # noqa: BLE001 - converted to an error record
            record = {"status": "error", "command": name, "error": type(exc).__name__,
                      "message": str(exc)}
            text = json.dumps(record, sort_keys=True)
            click.echo(text, err=True)
            try:
                Path(out).mkdir(parents=True, exist_ok=True)
                (Path(out) / "error.json").write_text(text + "\n", encoding="utf-8")
            except OSError:
                pass
            log.debug("command failed", exc_info=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
def main(verbose):
    """Battery/ultracapacitor EV simulation and energy-management experiments."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------
def read_heuristic_params(path, method: int) -> np.ndarray:
    names = H1_NAMES if method == 1 else H2_NAMES
    vals = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith(("#", "name")):
                continue
            key, _, val = line.partition(",")
            vals[key.strip()] = float(val)
    missing = [n for n in names if n not in vals]
    if missing:
        raise ValueError(f"{path}: missing heuristic parameters {missing}")
    return np.array([vals[n] for n in names])


def write_heuristic_params(path, method: int, vector) -> None:
    names = H1_NAMES if method == 1 else H2_NAMES
    write_rows(path, [{"name": n, "value": float(v)} for n, v in zip(names, vector)],
               ["name", "value"])


def build_policy(run: Run, strategy: str, qtable=None, h1=None, h2=None, reward=None) -> Policy:
    if strategy == "qlearning":
        if qtable is None:
            log.warning("no --qtable given; training in-line")
            res = train_qlearning(run.config, run.cycle(run.config.sim.train_cycle),
                                  reward=reward, seed=run.seed)
            return Policy("qlearning", qtable=res.best_table)
        return Policy("qlearning", qtable=QTable.load(qtable))
    if strategy == "heuristic1" and h1 is not None:
        return heuristic_policy(1, read_heuristic_params(h1, 1))
    if strategy == "heuristic2" and h2 is not None:
        return heuristic_policy(2, read_heuristic_params(h2, 2))
    return Policy.from_config(strategy, run.config)


policy_options = [
    click.option("--qtable", type=click.Path(exists=True, dir_okay=False), default=None,
                 help="Trained Q-table CSV (qlearning strategy)."),
    click.option("--h1-params", type=click.Path(exists=True, dir_okay=False), default=None,
                 help="Heuristic 1 coefficient CSV (name,value)."),
    click.option("--h2-params", type=click.Path(exists=True, dir_okay=False), default=None,
                 help="Heuristic 2 parameter CSV (name,value)."),
]


def with_policy_options(fn):
    for opt in reversed(policy_options):
        fn = opt(fn)
    return fn


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
@main.command("simulate")
@command
@with_policy_options
@click.option("--initial-soc", type=float, default=None)
@click.option("--initial-sov", type=float, default=None)
def simulate_cmd(run: Run, qtable, h1_params, h2_params, initial_soc, initial_sov):
    """One cycle with full per-step traces."""
    cfg = run.config
    reward = calibrate_reward(cfg)
    policy = build_policy(run, run.strategy, qtable, h1_params, h2_params, reward)
    cyc = run.cycle()
    spec = ExperimentSpec(run.strategy, cyc.name, "single", 1,
                          cfg.sim.initial_soc if initial_soc is None else initial_soc,
                          cfg.sim.initial_sov if initial_sov is None else initial_sov, run.seed)
    res = simulate(spec, cfg, policy, reward=reward, cycle=cyc)
    names = list(TRACE_COLUMNS)
    write_matrix(run.path("trace.csv"), names, res.trace[:, [TRACE_COLUMNS[n] for n in names]])
    long_rows = [{"series": s, "time_s": t, "value": v}
                 for s in FIGURE_SERIES
                 for t, v in zip(res.column("time_s"), res.column(s))]
    write_rows(run.path("trace_long.csv"), long_rows, ["series", "time_s", "value"])
    write_key_values(run.path("totals.csv"), res.totals)
    write_key_values(run.path("events.csv"), res.events)
    write_text(run.path("summary.txt"),
               aligned_table([{"quantity": k, "value": v} for k, v in res.totals.items()]))
    if not res.complete:
        click.echo("warning: battery depleted; result truncated", err=True)
    click.echo(f"{run.strategy}: distance {res.totals['distance_km']:.3f} km, "
               f"Ah {res.totals['ah_throughput']:.4f}, loss {res.totals['capacity_loss_pct']:.6f} %")


@main.command("train")
@command
@click.option("--episodes", type=int, default=None, help="Defaults to the configured count.")
def train_cmd(run: Run, episodes):
    """Episode-gated Q-learning on the training cycle."""
    cfg = run.config
    cyc = run.cycle()
    reward = calibrate_reward(cfg, cyc)
    res = train_qlearning(cfg, cyc, episodes=episodes, reward=reward, seed=run.seed)
    res.best_table.save(run.path("qtable.csv"))
    res.table.save(run.path("qtable_final.csv"))
    write_policy_csv(res.best_table, run.path("policy.csv"))
    write_rows(run.path("training_curve.csv"),
               [{"episode": e, "best_R_tot": b, "episode_reward": r} for e, b, r in res.curve_rows()],
               ["episode", "best_R_tot", "episode_reward"])
    write_key_values(run.path("reward_normalizers.csv"), dataclasses.asdict(reward))
    click.echo(f"best R_tot {res.best_totals[-1]:.6f} after {len(res.best_totals)} episodes "
               f"({int(res.updates.sum())} gated updates, {res.failures} discarded)")


@main.command("tune-heuristic")
@command
@click.option("--method", type=click.IntRange(1, 2), required=True)
def tune_heuristic_cmd(run: Run, method):
    """PSO tuning of heuristic 1 or 2 on one cycle."""
    cfg = run.config
    cyc = run.cycle()
    reward = calibrate_reward(cfg)
    res = tune_heuristic(method, cyc, cfg, reward, seed=run.seed)
    write_heuristic_params(run.path(f"heuristic{method}_params.csv"), method, res.x)
    write_rows(run.path("pso_history.csv"),
               [{"generation": g, "best_cost": c} for g, c in enumerate(res.history)],
               ["generation", "best_cost"])
    write_key_values(run.path("tuning_summary.csv"), {
        "method": method, "cost": res.cost, "baseline_cost": res.baseline_cost,
        "converged_generation": res.converged_generation, "failures": res.failures})
    click.echo(f"heuristic {method}: cost {res.cost:.6f} vs baseline {res.baseline_cost:.6f}; "
               f"converged by generation {res.converged_generation}")


@main.command("identify-aging")
@command
@click.option("--dataset", "datasets", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Aging dataset CSV; give exactly three.")
@click.option("--synthetic-noise", type=float, default=None,
              help="Use the synthetic fixture datasets with this multiplicative noise.")
def identify_aging_cmd(run: Run, datasets, synthetic_noise):
    """Three-stage GA identification of the capacity-fade model."""
    if datasets and synthetic_noise is not None:
        raise click.UsageError("give either --dataset files or --synthetic-noise")
    if datasets:
        data = [load_dataset(p) for p in datasets]
    else:
        data = fixture_datasets(noise=synthetic_noise or 0.0, seed=run.seed,
                                params=run.config.aging)
        for i, d in enumerate(data):
            save_dataset(d, run.path(f"dataset{i + 1}.csv"))
    g = run.config.ga
    ga = GaConfig(((0.0, 1.0),), g.population, g.generations, g.crossover_rate, g.mutation_rate,
                  g.mutation_scale, tournament=g.tournament)
    fit = identify_aging(data, ga, e_a=run.config.aging.e_a, r_g=run.config.aging.r_g,
                         seed=run.seed)
    save_params(fit.params, run.path("aging_params.txt"))
    rows = fit.report()
    write_rows(run.path("identification.csv"), rows)
    write_text(run.path("identification.txt"), aligned_table(rows))
    click.echo(aligned_table(rows), nl=False)


@main.command("range")
@command
@with_policy_options
@click.option("--max-cycles", type=int, default=None)
def range_cmd(run: Run, qtable, h1_params, h2_params, max_cycles):
    """Repeat the cycle from full charge until SOC reaches the floor."""
    cfg = run.config
    reward = calibrate_reward(cfg)
    policy = build_policy(run, run.strategy, qtable, h1_params, h2_params, reward)
    cyc = run.cycle()
    spec = ExperimentSpec(run.strategy, cyc.name, "until-empty", 1, cfg.sim.initial_soc,
                          cfg.sim.initial_sov, run.seed)
    res = range_test(spec, cfg, policy, reward=reward, cycle=cyc, max_cycles=max_cycles)
    write_rows(run.path("range_cycles.csv"), res.per_cycle)
    summary = {"strategy": res.strategy, "range_mi": res.range_mi, "range_km": res.range_km,
               "cycles_completed": res.cycles_completed, "steps": res.steps,
               "capped": res.capped, "failed": res.failed, "message": res.message}
    write_key_values(run.path("range.csv"), summary)
    if res.failed:
        raise RuntimeError(res.message)
    click.echo(f"{res.strategy}: range {res.range_mi:.3f} mi ({res.range_km:.3f} km), "
               f"{res.cycles_completed} full cycles" + (" [capped]" if res.capped else ""))


@main.command("aging")
@command
@with_policy_options
@click.option("--n-cycles", type=int, default=500, show_default=True)
def aging_cmd(run: Run, qtable, h1_params, h2_params, n_cycles):
    """Repeated cycles with depot recharge; capacity loss and Ah-throughput."""
    cfg = run.config
    reward = calibrate_reward(cfg)
    policy = build_policy(run, run.strategy, qtable, h1_params, h2_params, reward)
    cyc = run.cycle()
    spec = ExperimentSpec(run.strategy, cyc.name, "n-cycles", n_cycles, cfg.sim.initial_soc,
                          cfg.sim.initial_sov, run.seed)
    res = aging_test(spec, cfg, policy, reward=reward, cycle=cyc)
    write_rows(run.path("aging_cycles.csv"), res.per_cycle,
               ["cycle", "soc", "sov", "ah", "capacity_loss_pct", "recharges"])
    write_key_values(run.path("aging.csv"), {
        "strategy": res.strategy, "cycles": res.cycles,
        "capacity_loss_pct": res.capacity_loss_pct, "ah_throughput": res.ah_throughput,
        "recharges": res.recharges, "distance_km": res.distance_m / 1000.0})
    click.echo(f"{res.strategy}: loss {res.capacity_loss_pct:.6f} %, Ah {res.ah_throughput:.3f}, "
               f"{res.recharges} recharges over {res.cycles} cycles")


@main.command("compare")
@command
@with_policy_options
@click.option("--strategies", default="baseline,heuristic1,heuristic2,qlearning",
              show_default=True, help="Comma-separated list (at least two).")
@click.option("--n-cycles", type=int, default=500, show_default=True)
@click.option("--max-cycles", type=int, default=None)
def compare_cmd(run: Run, qtable, h1_params, h2_params, strategies, n_cycles, max_cycles):
    """Range, capacity loss and Ah-throughput across strategies."""
    cfg = run.config
    reward = calibrate_reward(cfg)
    names = [s.strip() for s in strategies.split(",") if s.strip()]
    bad = [s for s in names if s not in STRATEGY_CHOICES]
    if bad:
        raise click.BadParameter(f"unknown strategies {bad}", param_hint="--strategies")
    pols = {s: build_policy(run, s, qtable, h1_params, h2_params, reward) for s in names}
    res = compare(pols, run.cycle(), cfg, n_cycles=n_cycles, reward=reward,
                  max_cycles=max_cycles)
    write_rows(run.path("comparison.csv"), res.rows)
    write_rows(run.path("deltas.csv"), res.deltas)
    long_rows = [{"strategy": r["label"], "metric": m, "value": r[m]}
                 for r in res.rows for m in ("range_mi", "capacity_loss_pct", "ah_throughput")]
    write_rows(run.path("comparison_long.csv"), long_rows, ["strategy", "metric", "value"])
    text = aligned_table(res.rows, ["label", "range_mi", "range_km", "capacity_loss_pct",
                                    "ah_throughput", "recharges"])
    text += "\n" + aligned_table(res.deltas)
    write_text(run.path("comparison.txt"), text)
    click.echo(text, nl=False)


@main.command("export-policy")
@command
@click.option("--qtable", type=click.Path(exists=True, dir_okay=False), required=True)
def export_policy_cmd(run: Run, qtable):
    """Greedy thresholds per state bin from a saved Q-table."""
    q = QTable.load(qtable)
    write_policy_csv(q, run.path("policy.csv"))
    click.echo(f"policy for {q.grid.n_states} states written to {run.out / 'policy.csv'}")


if __name__ == "__main__":  # pragma: no cover
    main()
