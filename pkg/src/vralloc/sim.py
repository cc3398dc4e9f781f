"""Experiment harness: replications, sweeps over SBS count, convergence runs, NE check."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .config import ExperimentConfig, LEARNERS, as_seed_sequence
from .correlation import (effective_dl_load, effective_ul_load, max_correlations,
                          redraw_content, synthesize_overlap)
from .game import (GameSpec, PeriodContext, brute_force_ne, enumerate_actions, is_epsilon_ne)
from .learners import make_agent, self_play
from .network import generate_topology, sample_channel
from .output import write_csv, write_manifest

# stream identifiers; every random draw in a replication hangs off one of these
_TOPOLOGY, _CHANNEL, _CONTENT, _OVERLAP, _ACTIONS, _AGENT = range(6)

SLOT_HEADER = ("replication", "period", "slot", "sbs", "utility", "avgDelayDl_s",
               "avgDelayUl_s", "users", "infeasibleUsers", "infeasible")
SWEEP_HEADER = ("numSbs", "learner", "meanDelay_s", "stdDelay_s", "replications")
CURVE_HEADER = ("learner", "iteration", "utility")
CONVERGE_HEADER = ("learner", "replication", "iterationsToConverge")

CONVERGENCE_TOL = 0.05
CONVERGENCE_FINAL_WINDOW = 100
CONVERGENCE_SMOOTHING = 50


def _stream(seed, *key: int) -> np.random.SeedSequence:
    base = as_seed_sequence(seed)
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + key)


@dataclass
class MetricsRecord:
    """Per-slot, per-SBS metrics of one replication plus run summaries.

    Slot arrays have shape (periods * T, players).  Delays are averages over
    the SBS's users that hold at least one RB in each direction (``users``);
    users left without one have no finite delay, are counted in
    ``infeasible`` and left out of the averages.
    """

    replication: int
    learner: str
    players: np.ndarray
    period: np.ndarray  # (rows,)
    slot: np.ndarray  # (rows,)
    utility: np.ndarray
    avg_dl: np.ndarray
    avg_ul: np.ndarray
    users: np.ndarray
    infeasible: np.ndarray
    covered: int
    uncovered: int
    change_periods: tuple[int, ...] = ()
    summary: dict = field(default_factory=dict)

    @property
    def network_utility(self) -> np.ndarray:
        """Sum of SBS utilities per slot divided by the number of covered users."""
        if self.covered == 0:
            return np.zeros(len(self.slot))
        return self.utility.sum(axis=1) / self.covered

    def period_trace(self, period: int) -> np.ndarray:
        return self.network_utility[self.period == period]

    def avg_user_delay(self) -> float:
        """Feasible-user-weighted mean delay; NaN when nobody was served."""
        weights = self.users.sum()
        if weights == 0:
            return float("nan")
        return float(((self.avg_dl + self.avg_ul) * self.users).sum() / weights)

    def slot_rows(self):
        for r in range(len(self.slot)):
            for p, sbs in enumerate(self.players):
                n_bad = int(self.infeasible[r, p])
                yield (self.replication, int(self.period[r]), int(self.slot[r]), int(sbs),
                       float(self.utility[r, p]), float(self.avg_dl[r, p]),
                       float(self.avg_ul[r, p]), int(self.users[r, p]), n_bad, int(n_bad > 0))


def iterations_to_converge(curve: Sequence[float], tol: float = CONVERGENCE_TOL,
                           final_window: int = CONVERGENCE_FINAL_WINDOW,
                           smoothing: int = CONVERGENCE_SMOOTHING) -> int:
    """First iteration after which the smoothed curve stays within ``tol`` of the final level.

    The final level is the mean of the last ``final_window`` samples; the
    curve is smoothed with a trailing moving average of ``smoothing`` samples.
    Returns ``len(curve)`` if it never settles.
    """
    x = np.asarray(curve, dtype=float)
    if len(x) == 0:
        return 0
    final = x[-final_window:].mean()
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - smoothing, 0)
    smooth = (csum[idx] - csum[lo]) / (idx - lo)
    outside = np.abs(smooth - final) > tol * abs(final)
    if not outside.any():
        return 0
    return int(np.flatnonzero(outside)[-1] + 1)


def _replication_seed(config: ExperimentConfig, replication: int) -> tuple[int, int]:
    return (config.seed, replication)


def run_replication(config: ExperimentConfig, seed=None, replication: int = 0,
                    learner: Optional[str] = None) -> MetricsRecord:
    """Simulate one replication of the repeated game.

    All randomness is keyed by ``seed`` and a fixed stream id, so learners and
    SBS counts compared under the same seed see the same users, channels and
    content draws.
    """
    config.validate()
    learner = learner or config.learner
    if learner not in LEARNERS:
        raise ValueError(f"unknown learner {learner!r}")
    if seed is None:
        seed = _replication_seed(config, replication)
    net, cp = config.network, config.content
    T = config.slots_per_period

    topology = generate_topology(net, _stream(seed, _TOPOLOGY), num_contents=cp.num_contents,
                                 tracking_std=cp.tracking_std)
    action_sets = {int(j): enumerate_actions(topology.users_of(j), net, config.action_cap,
                                             seed=_stream(seed, _ACTIONS, int(j)))
                   for j in topology.active_sbs}
    players = np.array(sorted(action_sets), dtype=int)
    agents = [make_agent(learner, len(action_sets[j]), len(players), config.learning,
                         _stream(seed, _AGENT, int(j))) for j in players]
    content = synthesize_overlap(topology.content_id, cp, net, _stream(seed, _OVERLAP, 0))
    exploit_correlation = learner != "q-nocorr"

    rows = config.periods * T
    shape = (rows, len(players))
    utility = np.zeros(shape)
    avg_dl = np.zeros(shape)
    avg_ul = np.zeros(shape)
    n_users = np.zeros(shape, dtype=int)
    infeasible = np.zeros(shape, dtype=int)
    period_col = np.repeat(np.arange(1, config.periods + 1), T)
    slot_col = np.tile(np.arange(1, T + 1), config.periods)

    channel = None
    changes = []
    for period in range(1, config.periods + 1):
        changed = period in config.change_schedule
        if changed:
            topology = redraw_content(topology, cp, _stream(seed, _CONTENT, period))
            content = synthesize_overlap(topology.content_id, cp, net,
                                         _stream(seed, _OVERLAP, period))
            changes.append(period)
        if channel is None or config.redraw_channel:
            channel = sample_channel(topology, net, _stream(seed, _CHANNEL, period))
        if exploit_correlation:
            corr = max_correlations(topology, content, net)
            dl_bits = effective_dl_load(content.base_dl_bits, corr.phi_max)
            ul_bits = effective_ul_load(content.base_ul_bits, corr.rho_max)
        else:
            dl_bits, ul_bits = content.base_dl_bits, content.base_ul_bits
        ctx = PeriodContext(net, topology, channel, dl_bits, ul_bits, action_sets)
        if changed and period > 1:
            for agent in agents:
                agent.on_change()

        base = (period - 1) * T
        for slot in range(T):
            indices = [agent.propose() for agent in agents]
            joint = [agent.act(indices) for agent in agents]
            out = ctx.evaluate(joint)
            for agent, u in zip(agents, out.sbs_utility):
                agent.learn(float(u))
            r = base + slot
            utility[r] = out.sbs_utility
            for p, users in enumerate(ctx.users):
                d_dl, d_ul = out.dl_delay[users], out.ul_delay[users]
                ok = np.isfinite(d_dl) & np.isfinite(d_ul)
                n_ok = int(ok.sum())
                n_users[r, p] = n_ok
                infeasible[r, p] = len(users) - n_ok
                if n_ok:
                    avg_dl[r, p] = d_dl[ok].mean()
                    avg_ul[r, p] = d_ul[ok].mean()

    record = MetricsRecord(
        replication=replication, learner=learner, players=players, period=period_col,
        slot=slot_col, utility=utility, avg_dl=avg_dl, avg_ul=avg_ul, users=n_users,
        infeasible=infeasible, covered=len(topology.covered), uncovered=len(topology.uncovered),
        change_periods=tuple(changes))
    tail = record.network_utility[-min(CONVERGENCE_FINAL_WINDOW, rows):]
    watch = changes[-1] if changes else 1
    record.summary = {
        "avgUserDelay_s": record.avg_user_delay(),
        "finalUtility": float(tail.mean()) if len(tail) else 0.0,
        "iterationsToConverge": iterations_to_converge(record.period_trace(watch)),
    }
    return record


# ---------------------------------------------------------------------------
# parallel execution with deterministic ordering

def _run_task(args):
    config, seed, replication, learner, reducer = args
    record = run_replication(config, seed=seed, replication=replication, learner=learner)
    return reducer(record) if reducer is not None else record


def run_many(tasks: Sequence[tuple], jobs: int = 1) -> list:
    """Run ``(config, seed, replication, learner, reducer)`` tasks, results in task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks, chunksize=1))


def _delay_of(record: MetricsRecord) -> float:
    return record.summary["avgUserDelay_s"]


def _sample_std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def _cell(x: float) -> Optional[float]:
    return float(x) if np.isfinite(x) else None


@dataclass
class SweepResult:
    rows: list[tuple]  # SWEEP_HEADER rows
    delays: dict  # (numSbs, learner) -> per-replication delays

    def served(self, num_sbs: int, learner: str) -> np.ndarray:
        """Delays of the replications that served at least one user."""
        x = np.asarray(self.delays[(num_sbs, learner)])
        return x[np.isfinite(x)]

    def mean(self, num_sbs: int, learner: str) -> float:
        x = self.served(num_sbs, learner)
        return float(x.mean()) if len(x) else float("nan")

    def std(self, num_sbs: int, learner: str) -> float:
        return _sample_std(self.served(num_sbs, learner))


def sweep_sbs_count(template: ExperimentConfig, sbs_values: Sequence[int],
                    learners: Sequence[str], replications: Optional[int] = None,
                    jobs: int = 1, out_dir: Optional[str | Path] = None) -> SweepResult:
    """Mean and sample std of the per-run average user delay for each (B, learner).

    Replications in which no user was served carry no delay sample; they are
    left out of the statistics and the ``replications`` column counts the rest.
    """
    reps = replications or template.replications
    configs = {b: template.replace(**{"network.num_sbs": int(b)}) for b in sbs_values}
    for cfg in configs.values():
        cfg.validate()
    tasks = [(configs[b], _replication_seed(template, r), r, lrn, _delay_of)
             for b in sbs_values for lrn in learners for r in range(reps)]
    results = iter(run_many(tasks, jobs))
    result = SweepResult([], {})
    for b in sbs_values:
        for lrn in learners:
            result.delays[(int(b), lrn)] = np.array([next(results) for _ in range(reps)])
            n = len(result.served(int(b), lrn))
            result.rows.append((int(b), lrn, _cell(result.mean(int(b), lrn)),
                                result.std(int(b), lrn) if n else None, n))
    delays, rows = result.delays, result.rows
    if out_dir is not None:
        out = Path(out_dir)
        files = [write_csv(out / "sweep.csv", SWEEP_HEADER, rows)]
        files.append(write_csv(
            out / "sweep_runs.csv", ("numSbs", "learner", "replication", "avgUserDelay_s"),
            ((b, lrn, r, _cell(delays[(b, lrn)][r])) for (b, lrn) in delays for r in range(reps))))
        write_manifest(out / "manifest.txt", template, "sweep", files)
    return result


def convergence_config(config: ExperimentConfig) -> ExperimentConfig:
    """One learning period, then a content change on a frozen topology and channel."""
    return config.replace(periods=2, change_schedule=(2,), redraw_channel=False)


def _post_change_trace(record: MetricsRecord) -> np.ndarray:
    return record.period_trace(record.change_periods[-1] if record.change_periods else 1)


@dataclass
class ConvergenceResult:
    curves: dict  # learner -> (replications, T) post-change utility traces
    iterations: dict  # learner -> (replications,) iterations to converge

    def mean_curve(self, learner: str) -> np.ndarray:
        return self.curves[learner].mean(axis=0)


def convergence_experiment(config: ExperimentConfig, learners: Sequence[str],
                           replications: Optional[int] = None, jobs: int = 1,
                           out_dir: Optional[str | Path] = None,
                           prepare: Callable[[ExperimentConfig], ExperimentConfig] = convergence_config
                           ) -> ConvergenceResult:
    """Post-change utility curves and iterations-to-converge per learner and replication."""
    reps = replications or config.replications
    cfg = prepare(config) if prepare is not None else config
    cfg.validate()
    tasks = [(cfg, _replication_seed(config, r), r, lrn, _post_change_trace)
             for lrn in learners for r in range(reps)]
    results = iter(run_many(tasks, jobs))
    curves, iters = {}, {}
    for lrn in learners:
        traces = np.stack([next(results) for _ in range(reps)])
        curves[lrn] = traces
        iters[lrn] = np.array([iterations_to_converge(t) for t in traces])
    result = ConvergenceResult(curves, iters)
    if out_dir is not None:
        out = Path(out_dir)
        curve_rows = ((lrn, it + 1, float(v)) for lrn in learners
                      for it, v in enumerate(result.mean_curve(lrn)))
        files = [write_csv(out / "convergence_curves.csv", CURVE_HEADER, curve_rows),
                 write_csv(out / "convergence_summary.csv", CONVERGE_HEADER,
                           ((lrn, r, int(iters[lrn][r])) for lrn in learners for r in range(reps)))]
        write_manifest(out / "manifest.txt", config, "converge", files)
    return result


# ---------------------------------------------------------------------------
# equilibrium check on a small two-SBS game

NE_TOY_ACTIONS = 4
NE_TOY_STEPS = 3000
NE_TOY_WINDOW = 1000


@dataclass
class NeReport:
    spec: GameSpec
    equilibrium: list[np.ndarray]
    equilibrium_gain: float
    empirical: list[np.ndarray]
    empirical_gain: float
    is_ne: bool
    seed_offset: int

    def lines(self) -> list[str]:
        fmt = lambda v: "[" + ", ".join(f"{x:.4f}" for x in v) + "]"
        out = [f"toy game: 2 SBSs, actions {self.spec.action_counts}, topology draw {self.seed_offset}"]
        for p, (eq, emp) in enumerate(zip(self.equilibrium, self.empirical)):
            out.append(f"sbs {p}: equilibrium {fmt(eq)} learned {fmt(emp)}")
        out.append(f"equilibrium max deviation gain: {self.equilibrium_gain:.3e}")
        out.append(f"learned max deviation gain: {self.empirical_gain:.6f}")
        return out


def toy_game(config: ExperimentConfig, max_tries: int = 1000) -> tuple[GameSpec, int]:
    """First seeded topology where both of two SBSs serve users; payoffs tabulated."""
    net = dataclasses.replace(config.network, num_sbs=2)
    cp = config.content
    for k in range(max_tries):
        seed = (config.seed, 1_000_000 + k)
        topology = generate_topology(net, _stream(seed, _TOPOLOGY), num_contents=cp.num_contents,
                                     tracking_std=cp.tracking_std)
        if len(topology.active_sbs) < 2:
            continue
        action_sets = {int(j): enumerate_actions(topology.users_of(j), net, NE_TOY_ACTIONS,
                                                 seed=_stream(seed, _ACTIONS, int(j)))
                       for j in topology.active_sbs}
        content = synthesize_overlap(topology.content_id, cp, net, _stream(seed, _OVERLAP, 0))
        corr = max_correlations(topology, content, net)
        channel = sample_channel(topology, net, _stream(seed, _CHANNEL, 1))
        ctx = PeriodContext(net, topology, channel,
                            effective_dl_load(content.base_dl_bits, corr.phi_max),
                            effective_ul_load(content.base_ul_bits, corr.rho_max), action_sets)
        return GameSpec.from_tensor(ctx.game_spec().payoff_tensor()), k
    raise RuntimeError("no topology with two active SBSs found")


def ne_check(config: ExperimentConfig, learner: Optional[str] = None,
             steps: int = NE_TOY_STEPS, window: int = NE_TOY_WINDOW) -> NeReport:
    spec, k = toy_game(config)
    eq = brute_force_ne(spec)
    _, eq_gain = is_epsilon_ne(eq, spec, 0.0)
    empirical, _ = self_play(spec, learner or config.learner, config.learning, steps,
                             seed=_stream((config.seed,), _AGENT), window=window)
    ok, gain = is_epsilon_ne(empirical, spec, 0.05)
    return NeReport(spec, eq, float(eq_gain), empirical, float(gain), ok, k)


def export_metrics(records: Sequence[MetricsRecord], out_dir: str | Path,
                   config: ExperimentConfig, name: str = "slots.csv") -> list[Path]:
    """Per-slot CSV for a set of replications plus a manifest."""
    out = Path(out_dir)

    def rows():
        for rec in records:
            yield from rec.slot_rows()

    files = [write_csv(out / name, SLOT_HEADER, rows())]
    files.append(write_csv(out / "runs.csv",
                           ("replication", "learner", "covered", "uncovered", "avgUserDelay_s",
                            "finalUtility", "iterationsToConverge"),
                           ((r.replication, r.learner, r.covered, r.uncovered,
                             _cell(r.summary["avgUserDelay_s"]), r.summary["finalUtility"],
                             r.summary["iterationsToConverge"]) for r in records)))
    write_manifest(out / "manifest.txt", config, "run", files)
    return files
