"""Sequential decision loops: soft MCBO, hard-intervention MCBO and a naive UCB baseline."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from . import gp as G
from .acquisition import AcqConfig, SearchSpace, optimize_acq, optimize_ucb
from .scm import (
    GridBudgetExceeded,
    Hard,
    Intervention,
    Observational,
    Sample,
    Scm,
    Soft,
    check_intervention,
    mean_reward,
    oracle_best,
    oracle_random,
    random_actions,
    simulate,
)
from .tasks import make_task

ALGOS = ("mcbo", "mcbo_hard", "ucb_baseline")
NOISELESS_VAR = 1e-6
# seed of the oracle's noise bank; per-round expected rewards reuse it
ORACLE_SEED = 0


class ConfigError(ValueError):
    pass


@dataclass
class InitProtocol:
    """Initial data.  ``None`` fields take the task-dependent defaults."""

    n_observational: int | None = None
    per_target: int | None = None
    n_random: int | None = None


@dataclass
class RunConfig:
    task: str = "dropwave"
    noisy: bool = False
    algo: str = "mcbo"
    beta: float = 0.5
    rounds: int = 20
    seed: int = 0
    task_seed: int = 0
    task_options: dict = field(default_factory=dict)
    acq: dict = field(default_factory=dict)
    init: InitProtocol = field(default_factory=InitProtocol)
    oracle_grid: int = 25
    oracle_n_mc: int = 2000
    oracle_random_points: int = 20000
    kernel: str = "rbf"

    def __post_init__(self):
        if isinstance(self.init, dict):
            self.init = InitProtocol(**self.init)
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.beta < 0:
            raise ConfigError("beta must be nonnegative")
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; choose from {', '.join(ALGOS)}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class RoundRecord:
    t: int
    intervention: Intervention
    sample: Sample
    expected_reward: float
    acq_value: float
    wall_ms: int
    # posterior variance at the visited inputs, before the update; None for bypassed nodes
    node_var: tuple = ()


@dataclass
class RunResult:
    config: RunConfig
    scm: Scm
    records: list[RoundRecord]
    optimum: float
    noise_var: tuple[float, ...]
    init: list[tuple[Intervention, Sample]]
    data_sizes: tuple[int, ...]

    @property
    def init_count(self) -> int:
        return len(self.init)

    def info_gain_curve(self) -> np.ndarray:
        """Running realized information gain summed over node models."""
        inc = []
        for r in self.records:
            s = 0.0
            for v, rho2 in zip(r.node_var, self.noise_var):
                if v is not None:
                    s += 0.5 * float(np.sum(np.log1p(np.asarray(v) / rho2)))
            inc.append(s)
        return np.cumsum(inc)


def build_task(cfg: RunConfig) -> Scm:
    return make_task(cfg.task, noisy=cfg.noisy, seed=cfg.task_seed, **dict(cfg.task_options))


def acq_config(cfg: RunConfig, scm: Scm) -> AcqConfig:
    base = {}
    if scm.name == "dropwave" and not scm.noiseless:
        base["n_mc"] = 128
    base.update(cfg.acq)
    return AcqConfig(**base)


def _eval_bank(scm: Scm, n_mc: int) -> np.ndarray:
    S = 1 if scm.noiseless else n_mc
    return np.random.default_rng(ORACLE_SEED).standard_normal((S, scm.total_obs_dim))


_OPTIMA: dict[tuple, float] = {}


def task_optimum(scm: Scm, grid: int = 25, n_mc: int = 2000, n_random: int = 20000) -> float:
    """Best expected reward: declared value for noiseless tasks, else grid (or random) search.

    Cached per task content and oracle settings.
    """
    key = (scm.content_hash(), grid, n_mc, n_random)
    if key not in _OPTIMA:
        _OPTIMA[key] = _optimum(scm, grid, n_mc, n_random)
    return _OPTIMA[key]


def _optimum(scm: Scm, grid: int, n_mc: int, n_random: int) -> float:
    if scm.known_optimum is not None and scm.noiseless:
        return float(scm.known_optimum)
    try:
        return oracle_best(scm, grid, n_mc, np.random.default_rng(ORACLE_SEED))[1]
    except GridBudgetExceeded:
        extra = (scm.known_argmax,) if isinstance(scm.known_argmax, Soft) else ()
        return oracle_random(scm, n_random, n_mc, np.random.default_rng(ORACLE_SEED), extra)[1]


# -- data -------------------------------------------------------------------------------------


def initial_interventions(scm: Scm, rng: np.random.Generator, proto: InitProtocol | None = None) -> list[Intervention]:
    """Observational plus random hard interventions for hard tasks, random actions otherwise."""
    proto = proto or InitProtocol()
    if scm.interventions == "hard":
        n_obs = 10 if proto.n_observational is None else proto.n_observational
        per = 2 if proto.per_target is None else proto.per_target
        out: list[Intervention] = [Observational() for _ in range(n_obs)]
        for targets in sorted(scm.candidate_targets, key=lambda t: (len(t), sorted(t))):
            if not targets:
                continue
            tl = sorted(targets)
            for _ in range(per):
                vals = {t: rng.uniform(scm.target_box[t][0], scm.target_box[t][1]) for t in tl}
                out.append(Hard.of(vals))
        return out
    n = 2 * scm.dag.total_action_dim + 1 if proto.n_random is None else proto.n_random
    return [Soft(a) for a in random_actions(scm, n, rng)]


def _actions_of(scm: Scm, iv: Intervention) -> np.ndarray:
    return iv.actions if isinstance(iv, Soft) else np.zeros(scm.dag.total_action_dim)


def _node_input(scm: Scm, i: int, obs, actions: np.ndarray) -> np.ndarray:
    dag = scm.dag
    parts = [np.ravel(obs[p]) for p in dag.parents[i]]
    parts.append(actions[list(dag.node_action_index[i])])
    return np.concatenate(parts)


class NodeData:
    """Growing per-node datasets; clamped nodes skip their row."""

    def __init__(self, scm: Scm):
        self.scm = scm
        dag = scm.dag
        self.noise_var = tuple(
            float(np.mean(s**2)) if np.any(s) else NOISELESS_VAR for s in scm.noise_std
        )
        self.data = [G.GpDataset.empty(dag.input_dim(i), dag.obs_dims[i], self.noise_var[i]) for i in range(dag.num_nodes)]

    def add(self, iv: Intervention, sample: Sample) -> None:
        clamped = iv.target_set if isinstance(iv, Hard) else frozenset()
        acts = _actions_of(self.scm, iv)
        for i in range(self.scm.dag.num_nodes):
            if i in clamped:
                continue
            x = _node_input(self.scm, i, sample.obs, acts)
            self.data[i] = self.data[i].append(x[None], np.ravel(sample.obs[i])[None])

    def fit(self, kernel_kind: str = "rbf") -> list[G.GpPosterior]:
        return [
            G.fit(G.Kernel(kernel_kind, lengthscale=self.scm.lengthscales[i]), self.data[i])
            for i in range(self.scm.dag.num_nodes)
        ]

    def sizes(self) -> list[int]:
        return [len(d) for d in self.data]


def _streams(seed: int):
    init, acq, env = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    return init, acq, env


# -- loops --------------------------------------------------------------------------------------------


def _model_loop(cfg: RunConfig, scm: Scm) -> RunResult:
    init_rng, acq_rng, env_rng = _streams(cfg.seed)
    acfg = acq_config(cfg, scm)
    space = SearchSpace.from_scm(scm)
    bank = _eval_bank(scm, cfg.oracle_n_mc)
    data = NodeData(scm)
    init = [(iv, simulate(scm, iv, env_rng)) for iv in initial_interventions(scm, init_rng, cfg.init)]
    for iv, s in init:
        data.add(iv, s)
    records = []
    for t in range(1, cfg.rounds + 1):
        t0 = time.perf_counter()
        posts = data.fit(cfg.kernel)
        iv, _, val = optimize_acq(posts, cfg.beta, space, acfg, acq_rng, scm.noise_std)
        check_intervention(scm, iv)
        sample = simulate(scm, iv, env_rng)
        node_var = _visited_variance(scm, posts, iv, sample)
        data.add(iv, sample)
        wall = int(round((time.perf_counter() - t0) * 1000))
        records.append(RoundRecord(t, iv, sample, mean_reward(scm, iv, bank), val, wall, node_var))
    optimum = task_optimum(scm, cfg.oracle_grid, cfg.oracle_n_mc, cfg.oracle_random_points)
    return RunResult(cfg, scm, records, optimum, data.noise_var, init, tuple(data.sizes()))


def _visited_variance(scm: Scm, posts, iv: Intervention, sample: Sample) -> tuple:
    clamped = iv.target_set if isinstance(iv, Hard) else frozenset()
    acts = _actions_of(scm, iv)
    out = []
    for i, gp in enumerate(posts):
        if i in clamped:
            out.append(None)
        else:
            out.append(gp.predict(_node_input(scm, i, sample.obs, acts)[None])[1][0])
    return tuple(out)


def mcbo_run(cfg: RunConfig, scm: Scm | None = None) -> RunResult:
    """Soft-intervention loop: refit node GPs, maximize the optimistic acquisition, act.

    ``scm`` overrides the task named in ``cfg``.
    """
    scm = scm or build_task(cfg)
    if scm.interventions != "soft":
        raise ConfigError(f"task {scm.name!r} uses hard interventions; use mcbo_hard")
    return _model_loop(cfg, scm)


def mcbo_hard_run(cfg: RunConfig, scm: Scm | None = None) -> RunResult:
    """Hard-intervention loop over minimal target sets; clamped nodes keep their datasets."""
    scm = scm or build_task(cfg)
    if scm.interventions != "hard":
        raise ConfigError(f"task {scm.name!r} uses soft interventions; use mcbo")
    return _model_loop(cfg, scm)


def ucb_baseline_run(cfg: RunConfig, scm: Scm | None = None) -> RunResult:
    """One GP from the full action vector to the reward, ignoring intermediate nodes."""
    scm = scm or build_task(cfg)
    if scm.interventions != "soft":
        raise ConfigError("the UCB baseline acts on soft action vectors only")
    init_rng, acq_rng, env_rng = _streams(cfg.seed)
    acfg = acq_config(cfg, scm)
    space = SearchSpace.from_scm(scm)
    bank = _eval_bank(scm, cfg.oracle_n_mc)
    std_y = scm.noise_std[-1]
    rho2 = float(np.mean(std_y**2)) if np.any(std_y) else NOISELESS_VAR
    A = scm.dag.total_action_dim
    kernel = G.Kernel(cfg.kernel, lengthscale=scm.ucb_lengthscale)
    data = G.GpDataset.empty(A, 1, rho2)
    init = [(iv, simulate(scm, iv, env_rng)) for iv in initial_interventions(scm, init_rng, cfg.init)]
    for iv, s in init:
        data = data.append(iv.actions[None], np.array([[s.reward]]))
    records = []
    for t in range(1, cfg.rounds + 1):
        t0 = time.perf_counter()
        post = G.fit(kernel, data)
        iv, val = optimize_ucb(post, cfg.beta, space, acfg, acq_rng)
        check_intervention(scm, iv)
        sample = simulate(scm, iv, env_rng)
        var = post.predict(iv.actions[None])[1][0]
        data = data.append(iv.actions[None], np.array([[sample.reward]]))
        wall = int(round((time.perf_counter() - t0) * 1000))
        records.append(RoundRecord(t, iv, sample, mean_reward(scm, iv, bank), val, wall, (var,)))
    optimum = task_optimum(scm, cfg.oracle_grid, cfg.oracle_n_mc, cfg.oracle_random_points)
    return RunResult(cfg, scm, records, optimum, (rho2,), init, (len(data),))


def execute(cfg: RunConfig, scm: Scm | None = None) -> RunResult:
    """Dispatch on ``cfg.algo``; ``mcbo`` on a hard task routes to the hard loop."""
    if cfg.algo == "ucb_baseline":
        return ucb_baseline_run(cfg, scm)
    if cfg.algo == "mcbo_hard":
        return mcbo_hard_run(cfg, scm)
    return _model_loop(cfg, scm or build_task(cfg))
