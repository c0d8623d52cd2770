"""Ground-truth structural causal models and the reward oracles used for regret."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .graph import Dag, minimal_intervention_sets, validate_dag


class InterventionError(ValueError):
    pass


class ActionOutOfBox(InterventionError):
    pass


class CardinalityViolated(InterventionError):
    pass


class HardTargetIncludesReward(InterventionError):
    pass


class GridBudgetExceeded(RuntimeError):
    pass


_BOX_TOL = 1e-9


# -- interventions -------------------------------------------------------------


@dataclass(frozen=True)
class Observational:
    def to_json(self) -> dict:
        return {"type": "observational"}


@dataclass(frozen=True, eq=False)
class Soft:
    """Flat action vector; node ``i`` reads ``actions[dag.node_action_index[i]]``."""

    actions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "actions", np.asarray(self.actions, dtype=float).ravel())

    def __eq__(self, other):
        return isinstance(other, Soft) and np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash(self.actions.tobytes())

    def to_json(self) -> dict:
        return {"type": "soft", "actions": [float(v) for v in self.actions]}


@dataclass(frozen=True, eq=False)
class Hard:
    """``do(X_I = values)``; ``values[k]`` is the clamp vector for ``targets[k]``."""

    targets: tuple[int, ...]
    values: tuple[np.ndarray, ...]

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        values = tuple(np.atleast_1d(np.asarray(v, dtype=float)) for v in self.values)
        if len(targets) != len(values):
            raise InterventionError("one clamp value per target is required")
        order = np.argsort(targets, kind="stable")
        object.__setattr__(self, "targets", tuple(targets[k] for k in order))
        object.__setattr__(self, "values", tuple(values[k] for k in order))

    @classmethod
    def of(cls, assignment: dict[int, float | Sequence[float]]) -> "Hard":
        return cls(tuple(assignment), tuple(assignment.values()))

    def __eq__(self, other):
        return (
            isinstance(other, Hard)
            and self.targets == other.targets
            and all(np.array_equal(a, b) for a, b in zip(self.values, other.values))
        )

    def __hash__(self):
        return hash((self.targets, tuple(v.tobytes() for v in self.values)))

    @property
    def target_set(self) -> frozenset[int]:
        return frozenset(self.targets)

    def to_json(self) -> dict:
        return {
            "type": "hard",
            "targets": list(self.targets),
            "values": [[float(x) for x in v] for v in self.values],
        }


Intervention = Observational | Soft | Hard


def intervention_from_json(obj: dict) -> Intervention:
    kind = obj["type"]
    if kind == "observational":
        return Observational()
    if kind == "soft":
        return Soft(np.asarray(obj["actions"], dtype=float))
    if kind == "hard":
        return Hard(tuple(obj["targets"]), tuple(np.asarray(v) for v in obj["values"]))
    raise ValueError(f"unknown intervention type {kind!r}")


def dumps_intervention(iv: Intervention) -> str:
    return json.dumps(iv.to_json(), separators=(",", ":"))


# -- model -------------------------------------------------------------------------


@dataclass(frozen=True)
class Mechanism:
    """Deterministic vectorized map ``(z (n, p), a (n, q)) -> x (n, d)``."""

    node: int
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    formula: str = ""

    def __call__(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        out = np.asarray(self.func(z, a), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        return out


@dataclass(frozen=True)
class NoiseSpec:
    node: int
    kind: str = "none"
    std: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "std", tuple(float(s) for s in np.atleast_1d(self.std)))
        if self.kind not in ("none", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if any(s < 0 for s in self.std):
            raise ValueError("noise std must be nonnegative")
        if (self.kind == "none") != all(s == 0.0 for s in self.std):
            raise ValueError("kind 'none' is equivalent to std 0")

    @classmethod
    def gaussian(cls, node: int, std: float, d: int = 1) -> "NoiseSpec":
        if std == 0:
            return cls(node, "none", (0.0,) * d)
        return cls(node, "gaussian", (std,) * d)


@dataclass(frozen=True)
class Sample:
    obs: tuple[np.ndarray, ...]

    @property
    def reward(self) -> float:
        return float(self.obs[-1][0])


@dataclass(frozen=True, eq=False)
class Scm:
    """A task: DAG, true mechanisms, noise and the feasible intervention space.

    ``interventions == "soft"`` tasks act through the flat action vector inside
    ``[action_lo, action_hi]``; ``"hard"`` tasks clamp nodes of one of the
    ``candidate_targets`` sets to values inside ``target_box``.
    """

    name: str
    dag: Dag
    mechanisms: tuple[Mechanism, ...]
    noise: tuple[NoiseSpec, ...]
    action_lo: np.ndarray = field(default_factory=lambda: np.zeros(0))
    action_hi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cardinality: int | None = None
    mode: str = "cbo"
    interventions: str = "soft"
    candidate_targets: tuple[frozenset[int], ...] = ()
    target_box: dict = field(default_factory=dict)
    lengthscales: tuple[float, ...] | None = None
    ucb_lengthscale: float = 1.0
    known_optimum: float | None = None
    known_argmax: Intervention | None = None

    def __post_init__(self):
        validate_dag(self.dag)
        n = self.dag.num_nodes
        if len(self.mechanisms) != n or sorted(m.node for m in self.mechanisms) != list(range(n)):
            raise ValueError("exactly one mechanism per node is required")
        if len(self.noise) != n:
            raise ValueError("exactly one noise spec per node is required")
        object.__setattr__(self, "action_lo", np.asarray(self.action_lo, dtype=float).ravel())
        object.__setattr__(self, "action_hi", np.asarray(self.action_hi, dtype=float).ravel())
        if self.action_lo.size != self.dag.total_action_dim or self.action_hi.size != self.dag.total_action_dim:
            raise ValueError("action box must cover the flat action vector")
        if np.any(self.action_lo > self.action_hi):
            raise ValueError("action box has lo > hi")
        if self.mode not in ("cbo", "function_network"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.interventions not in ("soft", "hard"):
            raise ValueError(f"unknown intervention model {self.interventions!r}")
        if self.mode == "cbo" and self.dag.node_actions[self.dag.reward_node]:
            raise ValueError("cbo mode fixes a_m = 0; the reward node cannot have actions")
        if self.cardinality is not None and self.cardinality < 1:
            raise ValueError("cardinality limit must be >= 1")
        box = {}
        for node, (lo, hi) in self.target_box.items():
            box[int(node)] = (np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float)))
        object.__setattr__(self, "target_box", box)
        object.__setattr__(
            self, "candidate_targets", tuple(frozenset(int(i) for i in t) for t in self.candidate_targets)
        )
        for t in self.candidate_targets:
            if self.dag.reward_node in t:
                raise HardTargetIncludesReward("candidate target sets cannot contain the reward node")
            missing = [i for i in t if i not in box]
            if missing:
                raise ValueError(f"no target box for nodes {missing}")
        if self.lengthscales is None:
            object.__setattr__(self, "lengthscales", (1.0,) * n)

    @property
    def noise_std(self) -> list[np.ndarray]:
        return [np.asarray(ns.std if len(ns.std) == d else ns.std * d, float)
                for ns, d in zip(self.noise, self.dag.obs_dims)]

    @property
    def noiseless(self) -> bool:
        return all(ns.kind == "none" for ns in self.noise)

    @property
    def total_obs_dim(self) -> int:
        return sum(self.dag.obs_dims)

    def minimal_targets(self) -> list[frozenset[int]]:
        return minimal_intervention_sets(self.dag, self.candidate_targets)

    def describe(self) -> dict:
        """Canonical, JSON-able description used for content hashing and TASKS docs."""
        return {
            "name": self.name,
            "dag": self.dag.to_json(),
            "mechanisms": [m.formula for m in sorted(self.mechanisms, key=lambda m: m.node)],
            "noise_std": [list(map(float, s)) for s in self.noise_std],
            "action_lo": [float(v) for v in self.action_lo],
            "action_hi": [float(v) for v in self.action_hi],
            "cardinality": self.cardinality,
            "mode": self.mode,
            "interventions": self.interventions,
            "candidate_targets": [sorted(t) for t in self.candidate_targets],
            "target_box": {
                str(k): [v[0].tolist(), v[1].tolist()] for k, v in sorted(self.target_box.items())
            },
            "lengthscales": list(self.lengthscales),
        }

    def content_hash(self) -> str:
        """Git-style blob hash of the canonical task description."""
        body = json.dumps(self.describe(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


# -- validation ---------------------------------------------------------------------


def check_intervention(scm: Scm, iv: Intervention) -> None:
    dag = scm.dag
    if isinstance(iv, Soft):
        if iv.actions.size != dag.total_action_dim:
            raise InterventionError(
                f"expected {dag.total_action_dim} action entries, got {iv.actions.size}"
            )
        out = (iv.actions < scm.action_lo - _BOX_TOL) | (iv.actions > scm.action_hi + _BOX_TOL)
        if scm.cardinality is not None:
            # an all-zero block means "not intervened" and is feasible even if 0 is off-box
            for s in dag.action_slices:
                if not np.any(iv.actions[s]):
                    out[s] = False
        if np.any(out):
            raise ActionOutOfBox("soft action outside the action box")
        if scm.cardinality is not None:
            active = sum(bool(np.any(iv.actions[s] != 0.0)) for s in dag.action_slices)
            if active > scm.cardinality:
                raise CardinalityViolated(f"{active} nonzero actions exceed limit {scm.cardinality}")
    elif isinstance(iv, Hard):
        if dag.reward_node in iv.targets:
            raise HardTargetIncludesReward("cannot intervene on the reward node")
        for t, v in zip(iv.targets, iv.values):
            if not 0 <= t < dag.reward_node:
                raise InterventionError(f"target {t} out of range")
            if v.size != dag.obs_dims[t]:
                raise InterventionError(f"clamp for node {t} must have {dag.obs_dims[t]} entries")
            if t in scm.target_box:
                lo, hi = scm.target_box[t]
                if np.any(v < lo - _BOX_TOL) or np.any(v > hi + _BOX_TOL):
                    raise ActionOutOfBox(f"clamp value for node {t} outside its box")
    elif not isinstance(iv, Observational):
        raise TypeError(f"not an intervention: {iv!r}")


# -- simulation ---------------------------------------------------------------------


def propagate(
    scm: Scm,
    actions: np.ndarray,
    clamps: dict[int, np.ndarray],
    eps: np.ndarray,
) -> list[np.ndarray]:
    """Vectorized rollout over ``R`` rows.

    ``actions`` is (R, A), ``clamps[i]`` is (R, d_i) and ``eps`` is (R, total_obs_dim)
    standard-normal draws, scaled here by each node's noise std.  Clamped nodes take
    their value exactly and ignore both parents and noise.
    """
    dag = scm.dag
    R = eps.shape[0]
    stds = scm.noise_std
    obs: list[np.ndarray] = []
    col = 0
    for i in range(dag.num_nodes):
        d = dag.obs_dims[i]
        if i in clamps:
            obs.append(np.broadcast_to(clamps[i], (R, d)).astype(float))
        else:
            ps = dag.parents[i]
            z = np.concatenate([obs[p] for p in ps], axis=1) if ps else np.zeros((R, 0))
            a = actions[:, list(dag.node_action_index[i])]
            x = scm.mechanisms[i](z, a)
            if np.any(stds[i]):
                x = x + eps[:, col : col + d] * stds[i]
            obs.append(x)
        col += d
    return obs


def _as_rows(scm: Scm, iv: Intervention, R: int):
    A = scm.dag.total_action_dim
    if isinstance(iv, Soft):
        return np.broadcast_to(iv.actions, (R, A)), {}
    if isinstance(iv, Hard):
        return np.zeros((R, A)), {t: v[None] for t, v in zip(iv.targets, iv.values)}
    return np.zeros((R, A)), {}


def simulate_batch(scm: Scm, iv: Intervention, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """``n`` independent samples; one (n, d_i) array per node."""
    check_intervention(scm, iv)
    eps = rng.standard_normal((n, scm.total_obs_dim))
    actions, clamps = _as_rows(scm, iv, n)
    return propagate(scm, actions, clamps, eps)


def simulate(scm: Scm, iv: Intervention, rng: np.random.Generator) -> Sample:
    obs = simulate_batch(scm, iv, 1, rng)
    return Sample(tuple(np.array(o[0]) for o in obs))


def expected_reward(scm: Scm, iv: Intervention, n_mc: int, rng: np.random.Generator) -> float:
    """Monte-Carlo ``E[y | iv]``; an exact single rollout when the task is noiseless."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    obs = simulate_batch(scm, iv, 1 if scm.noiseless else n_mc, rng)
    return float(np.mean(obs[-1][:, 0]))


def mean_reward(scm: Scm, iv: Intervention, eps: np.ndarray) -> float:
    """Mean reward of ``iv`` over a fixed standard-normal bank ``eps`` (S, total_obs_dim)."""
    check_intervention(scm, iv)
    actions, clamps = _as_rows(scm, iv, 1)
    return float(_mean_reward_rows(scm, np.asarray(actions, float), clamps, eps)[0])


# -- brute-force oracle -------------------------------------------------------------


def _soft_grid(scm: Scm, grid_per_dim: int):
    """Yield (support, grid matrix) pairs covering the feasible action space."""
    dag = scm.dag
    n_act = dag.num_actions
    c = scm.cardinality
    if c is None or c >= n_act:
        supports = [tuple(range(n_act))]
    else:
        supports = [s for r in range(c + 1) for s in itertools.combinations(range(n_act), r)]
    for sup in supports:
        idx = [k for j in sup for k in range(dag.action_slices[j].start, dag.action_slices[j].stop)]
        axes = [np.linspace(scm.action_lo[k], scm.action_hi[k], grid_per_dim) for k in idx]
        yield idx, axes


def _grid_size(axes) -> int:
    return int(np.prod([len(a) for a in axes])) if axes else 1


def _grid_points(axes) -> np.ndarray:
    if not axes:
        return np.zeros((1, 0))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _mean_reward_rows(scm, actions, clamps, eps, chunk_rows=400_000) -> np.ndarray:
    """Mean reward over the shared noise bank ``eps`` for every candidate row."""
    N, S = actions.shape[0], eps.shape[0]
    out = np.empty(N)
    step = max(1, chunk_rows // S)
    for lo in range(0, N, step):
        hi = min(N, lo + step)
        n = hi - lo
        acts = np.repeat(actions[lo:hi], S, axis=0)
        cl = {k: np.repeat(v[lo:hi], S, axis=0) for k, v in clamps.items()}
        obs = propagate(scm, acts, cl, np.tile(eps, (n, 1)))
        out[lo:hi] = obs[-1][:, 0].reshape(n, S).mean(axis=1)
    return out


def candidate_grids(scm: Scm, grid_per_dim: int):
    """(kind, support/targets, points) blocks enumerating the oracle grid."""
    if scm.interventions == "soft":
        for idx, axes in _soft_grid(scm, grid_per_dim):
            yield "soft", idx, axes
    else:
        for targets in scm.candidate_targets:
            tl = sorted(targets)
            axes = []
            for t in tl:
                lo, hi = scm.target_box[t]
                axes.extend(np.linspace(l, h, grid_per_dim) for l, h in zip(lo, hi))
            yield "hard", tl, axes


def oracle_best(
    scm: Scm,
    grid_per_dim: int = 25,
    n_mc: int = 2000,
    rng: np.random.Generator | None = None,
    budget: int = 500_000,
) -> tuple[Intervention, float]:
    """Exhaustive grid search for the best intervention, accurate to grid resolution.

    All candidates share one noise bank (common random numbers) so the argmax is
    not driven by Monte-Carlo error; the winner is then re-scored on the same bank.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    blocks = list(candidate_grids(scm, grid_per_dim))
    total = sum(_grid_size(axes) for _, _, axes in blocks)
    if total > budget:
        raise GridBudgetExceeded(f"grid has {total} points, budget is {budget}")
    S = 1 if scm.noiseless else n_mc
    eps = rng.standard_normal((S, scm.total_obs_dim))
    A = scm.dag.total_action_dim
    best_iv, best_val = None, -np.inf
    for kind, sel, axes in blocks:
        pts = _grid_points(axes)
        if kind == "soft":
            actions = np.zeros((pts.shape[0], A))
            actions[:, sel] = pts
            vals = _mean_reward_rows(scm, actions, {}, eps)
            k = int(np.argmax(vals))
            cand = Soft(actions[k])
        else:
            clamps, col = {}, 0
            for t in sel:
                d = scm.dag.obs_dims[t]
                clamps[t] = pts[:, col : col + d]
                col += d
            vals = _mean_reward_rows(scm, np.zeros((pts.shape[0], A)), clamps, eps)
            k = int(np.argmax(vals))
            cand = Hard(tuple(sel), tuple(clamps[t][k] for t in sel)) if sel else Observational()
        if vals[k] > best_val:
            best_iv, best_val = cand, float(vals[k])
    return best_iv, best_val


def oracle_random(
    scm: Scm,
    n_points: int,
    n_mc: int = 2000,
    rng: np.random.Generator | None = None,
    extra: Sequence[Intervention] = (),
) -> tuple[Intervention, float]:
    """Random-search fallback when the grid exceeds its budget (soft tasks only)."""
    rng = np.random.default_rng(0) if rng is None else rng
    if scm.interventions != "soft":
        raise ValueError("random oracle supports soft tasks only")
    S = 1 if scm.noiseless else n_mc
    eps = rng.standard_normal((S, scm.total_obs_dim))
    acts = random_actions(scm, n_points, rng)
    if extra:
        acts = np.vstack([acts] + [np.atleast_2d(e.actions) for e in extra])
    vals = _mean_reward_rows(scm, acts, {}, eps)
    k = int(np.argmax(vals))
    return Soft(acts[k]), float(vals[k])


def random_actions(scm: Scm, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform feasible soft actions; with a cardinality limit a random support is kept."""
    dag = scm.dag
    acts = rng.uniform(scm.action_lo, scm.action_hi, size=(n, dag.total_action_dim))
    c = scm.cardinality
    if c is not None and c < dag.num_actions:
        for r in range(n):
            keep = set(rng.choice(dag.num_actions, size=c, replace=False).tolist())
            for j, s in enumerate(dag.action_slices):
                if j not in keep:
                    acts[r, s] = 0.0
    return acts
