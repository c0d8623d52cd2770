"""Benchmark task catalog.

Every mechanism formula is also listed in TASKS.md.  The DAGs follow the
standard graphs of these benchmarks; mechanism forms are this package's own choices built
from the classical test functions each task is named after, rescaled so node
values stay O(1) for unit-variance GP priors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .gp import Kernel
from .graph import Dag, minimal_intervention_sets, powerset
from .scm import Mechanism, NoiseSpec, Scm, Soft


class UnknownTask(KeyError):
    pass


TASK_NAMES = (
    "toygraph",
    "psagraph",
    "dropwave",
    "alpine2",
    "rosenbrock",
    "ackley",
    "chain_synthetic",
    "tree_synthetic",
)


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def _noise(dag: Dag, noisy: bool, std: float = 1.0) -> tuple[NoiseSpec, ...]:
    return tuple(
        NoiseSpec.gaussian(i, std if noisy else 0.0, dag.obs_dims[i]) for i in range(dag.num_nodes)
    )


def _mech(node: int, formula: str, func) -> Mechanism:
    return Mechanism(node, func, formula)


# -- hard-intervention CBO tasks ------------------------------------------------------


def toygraph(noisy: bool = True) -> Scm:
    dag = Dag.chain(3)
    mechs = (
        _mech(0, "X0 = 0", lambda z, a: np.zeros((z.shape[0], 1))),
        _mech(1, "X1 = exp(-X0)", lambda z, a: np.exp(-z[:, :1])),
        _mech(2, "Y = -cos(X1) + exp(-X1/20)", lambda z, a: -np.cos(z[:, :1]) + np.exp(-z[:, :1] / 20.0)),
    )
    targets = minimal_intervention_sets(dag, powerset([0, 1]))
    return Scm(
        name="toygraph",
        dag=dag,
        mechanisms=mechs,
        noise=_noise(dag, noisy),
        interventions="hard",
        candidate_targets=tuple(targets),
        target_box={0: ([-2.0], [2.0]), 1: ([-5.0], [10.0])},
        lengthscales=(1.0, 1.0, 1.0),
    )


def psagraph(noisy: bool = True) -> Scm:
    # 0 age, 1 bmi, 2 aspirin, 3 statin, 4 cancer, 5 -PSA (all standardized)
    dag = Dag.from_nodes([(), (0,), (0, 1), (0, 1), (0, 1, 2, 3), (0, 1, 2, 3, 4)])
    mechs = (
        _mech(0, "X0 = 0", lambda z, a: np.zeros((z.shape[0], 1))),
        _mech(1, "X1 = -0.2*X0", lambda z, a: -0.2 * z[:, :1]),
        _mech(2, "X2 = sig(-1 + 0.8*X0 + 0.3*X1)", lambda z, a: _sig(-1 + 0.8 * z[:, :1] + 0.3 * z[:, 1:2])),
        _mech(3, "X3 = sig(-1.5 + 0.8*X0 + X1)", lambda z, a: _sig(-1.5 + 0.8 * z[:, :1] + z[:, 1:2])),
        _mech(
            4,
            "X4 = sig(1 - 0.5*X0 + 0.1*X1 + 0.4*X2 - 0.8*X3)",
            lambda z, a: _sig(1 - 0.5 * z[:, :1] + 0.1 * z[:, 1:2] + 0.4 * z[:, 2:3] - 0.8 * z[:, 3:4]),
        ),
        _mech(
            5,
            "Y = -(0.5 + 0.4*X0 - 0.3*X1 + 0.9*X2 - 1.2*X3 + X4)",
            lambda z, a: -(
                0.5 + 0.4 * z[:, :1] - 0.3 * z[:, 1:2] + 0.9 * z[:, 2:3] - 1.2 * z[:, 3:4] + z[:, 4:5]
            ),
        ),
    )
    targets = minimal_intervention_sets(dag, powerset([2, 3]))
    return Scm(
        name="psagraph",
        dag=dag,
        mechanisms=mechs,
        noise=_noise(dag, noisy),
        interventions="hard",
        candidate_targets=tuple(targets),
        target_box={2: ([0.0], [1.0]), 3: ([0.0], [1.0])},
        lengthscales=(1.0,) * 6,
    )


# -- function networks ------------------------------------------------------------------


def dropwave(noisy: bool = False) -> Scm:
    dag = Dag((( ), (0,)), (1, 1), (1, 1), ((0,), (0,)))
    mechs = (
        _mech(0, "X0 = sqrt(a0^2 + a1^2)", lambda z, a: np.sqrt(np.sum(a**2, axis=1, keepdims=True))),
        _mech(
            1,
            "Y = (1 + cos(12*X0)) / (2 + 0.5*X0^2)",
            lambda z, a: (1 + np.cos(12 * z[:, :1])) / (2 + 0.5 * z[:, :1] ** 2),
        ),
    )
    return Scm(
        name="dropwave",
        dag=dag,
        mechanisms=mechs,
        noise=_noise(dag, noisy, 0.1),
        action_lo=[-1.0, -1.0],
        action_hi=[1.0, 1.0],
        mode="function_network",
        lengthscales=(0.5, 0.15),
        ucb_lengthscale=0.15,
        known_optimum=None if noisy else 1.0,
        known_argmax=Soft([0.0, 0.0]),
    )


_ALPINE_PEAK = 2.808131180
_ALPINE_ARGMAX = 7.917052684


def _alpine(a):
    return np.sqrt(np.maximum(a, 0.0)) * np.sin(a) / _ALPINE_PEAK


def alpine2(noisy: bool = False) -> Scm:
    dag = Dag.chain(6, actions=True)
    mechs = [_mech(0, "X0 = g(a0),  g(a) = sqrt(a) sin(a) / 2.80813", lambda z, a: _alpine(a[:, :1]))]
    for i in range(1, 6):
        mechs.append(
            _mech(i, f"X{i} = g(a{i}) * X{i - 1}", lambda z, a: _alpine(a[:, :1]) * z[:, :1])
        )
    return Scm(
        name="alpine2",
        dag=dag,
        mechanisms=tuple(mechs),
        noise=_noise(dag, noisy),
        action_lo=np.zeros(6),
        action_hi=np.full(6, 10.0),
        mode="function_network",
        lengthscales=(1.5,) * 6,
        ucb_lengthscale=1.5,
        known_optimum=None if noisy else 1.0,
        known_argmax=Soft(np.full(6, _ALPINE_ARGMAX)),
    )


def _rosen_term(u, v):
    return -(100.0 * (v - u**2) ** 2 + (1.0 - u) ** 2) / 400.0


def rosenbrock(noisy: bool = False) -> Scm:
    # actions: a0->X0, a1->{X0,X1}, a2->{X1,X2}, a3->{X2,Y}, a4->Y
    dag = Dag(
        ((), (0,), (1,), (2,)),
        (1, 1, 1, 1),
        (1, 1, 1, 1, 1),
        ((0,), (0, 1), (1, 2), (2, 3), (3,)),
    )
    mechs = [_mech(0, "X0 = r(a0, a1),  r(u, v) = -(100 (v - u^2)^2 + (1 - u)^2) / 400",
                   lambda z, a: _rosen_term(a[:, :1], a[:, 1:2]))]
    for i in range(1, 4):
        mechs.append(
            _mech(i, f"X{i} = X{i - 1} + r(a{i}, a{i + 1})",
                  lambda z, a: z[:, :1] + _rosen_term(a[:, :1], a[:, 1:2]))
        )
    return Scm(
        name="rosenbrock",
        dag=dag,
        mechanisms=tuple(mechs),
        noise=_noise(dag, noisy),
        action_lo=np.full(5, -2.0),
        action_hi=np.full(5, 2.0),
        mode="function_network",
        lengthscales=(1.0,) * 4,
        ucb_lengthscale=1.0,
        known_optimum=None if noisy else 0.0,
        known_argmax=Soft(np.ones(5)),
    )


def ackley(noisy: bool = False) -> Scm:
    if noisy:
        raise UnknownTask("ackley has no noisy variant")
    dag = Dag(((), (), (0, 1)), (1, 1, 1), (1,) * 6, ((0, 1),) * 6)
    mechs = (
        _mech(0, "X0 = mean_j a_j^2", lambda z, a: np.mean(a**2, axis=1, keepdims=True)),
        _mech(1, "X1 = mean_j cos(2 pi a_j)", lambda z, a: np.mean(np.cos(2 * np.pi * a), axis=1, keepdims=True)),
        _mech(
            2,
            "Y = 20 exp(-0.2 sqrt(X0)) + exp(X1) - 20 - e",
            lambda z, a: 20 * np.exp(-0.2 * np.sqrt(np.maximum(z[:, :1], 0.0))) + np.exp(z[:, 1:2]) - 20 - np.e,
        ),
    )
    return Scm(
        name="ackley",
        dag=dag,
        mechanisms=mechs,
        noise=_noise(dag, False),
        action_lo=np.full(6, -2.0),
        action_hi=np.full(6, 2.0),
        mode="function_network",
        lengthscales=(1.0, 0.5, 1.0),
        ucb_lengthscale=0.5,
        known_optimum=0.0,
        known_argmax=Soft(np.zeros(6)),
    )


# -- synthetic soft-intervention tasks ------------------------------------------------


def chain_synthetic(noisy: bool = False) -> Scm:
    dag = Dag.chain(4, actions=[0, 1, 2])
    mechs = (
        _mech(0, "X0 = sin(1.5 a0)", lambda z, a: np.sin(1.5 * a[:, :1])),
        _mech(1, "X1 = X0 cos(a1) + 0.5 a1", lambda z, a: z[:, :1] * np.cos(a[:, :1]) + 0.5 * a[:, :1]),
        _mech(2, "X2 = tanh(X1 + a2)", lambda z, a: np.tanh(z[:, :1] + a[:, :1])),
        _mech(3, "Y = 1 - 2 (X2 - 0.6)^2", lambda z, a: 1 - 2 * (z[:, :1] - 0.6) ** 2),
    )
    return Scm(
        name="chain_synthetic",
        dag=dag,
        mechanisms=mechs,
        noise=_noise(dag, noisy),
        action_lo=np.full(3, -1.0),
        action_hi=np.full(3, 1.0),
        lengthscales=(1.0,) * 4,
        ucb_lengthscale=1.0,
        known_optimum=None if noisy else 1.0,
    )


_TREE_CENTERS = (0.5, -0.3, 0.2, -0.6)


def tree_synthetic(noisy: bool = False) -> Scm:
    """Binary tree: X0..X3 -> (X4, X5) -> Y with one action per non-reward node."""
    dag = Dag.from_nodes(
        [(), (), (), (), (0, 1), (2, 3), (4, 5)], action_dims=[1, 1, 1, 1, 1, 1, 0]
    )
    mechs = []
    for j, c in enumerate(_TREE_CENTERS):
        mechs.append(
            _mech(j, f"X{j} = exp(-2 (a{j} - {c})^2)", lambda z, a, c=c: np.exp(-2.0 * (a[:, :1] - c) ** 2))
        )
    mechs.append(
        _mech(4, "X4 = X0 X1 + 0.3 sin(2 a4)", lambda z, a: z[:, :1] * z[:, 1:2] + 0.3 * np.sin(2 * a[:, :1]))
    )
    mechs.append(_mech(5, "X5 = X2 X3 - 0.3 a5^2", lambda z, a: z[:, :1] * z[:, 1:2] - 0.3 * a[:, :1] ** 2))
    mechs.append(_mech(6, "Y = X4 + X5", lambda z, a: z[:, :1] + z[:, 1:2]))
    argmax = np.array(list(_TREE_CENTERS) + [np.pi / 4, 0.0])
    return Scm(
        name="tree_synthetic",
        dag=dag,
        mechanisms=tuple(mechs),
        noise=_noise(dag, noisy),
        action_lo=np.full(6, -1.0),
        action_hi=np.full(6, 1.0),
        lengthscales=(0.7,) * 7,
        ucb_lengthscale=0.7,
        known_optimum=None if noisy else 2.3,
        known_argmax=Soft(argmax),
    )


_BUILDERS: dict[str, Callable[[bool], Scm]] = {
    "toygraph": toygraph,
    "psagraph": psagraph,
    "dropwave": dropwave,
    "alpine2": alpine2,
    "rosenbrock": rosenbrock,
    "ackley": ackley,
    "chain_synthetic": chain_synthetic,
    "tree_synthetic": tree_synthetic,
}


def make_task(name: str, noisy: bool = False, seed: int | None = None, **options) -> Scm:
    """Build a catalog task, an ``rkhs_chain`` task, or load a task JSON file."""
    if name.endswith(".json"):
        return load_task(name, noisy=noisy)
    if name == "rkhs_chain":
        n = options.pop("n_nodes", 3)
        dag = Dag.chain(n, actions=range(n - 1))
        return make_rkhs_task(dag, seed=0 if seed is None else seed, **options)
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise UnknownTask(f"unknown task {name!r}; choose from {', '.join(TASK_NAMES)}") from None
    return builder(noisy)


# -- RKHS tasks ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelExpansion:
    """``f(s)_l = sum_j alpha[j, l] k(s, centers[j])``."""

    kernel: Kernel
    centers: np.ndarray
    alpha: np.ndarray

    def __call__(self, X: np.ndarray) -> np.ndarray:
        if self.centers.shape[0] == 0:
            return np.zeros((X.shape[0], self.alpha.shape[1] if self.alpha.ndim == 2 else 1))
        return self.kernel.base(X, self.centers) @ self.alpha

    def rkhs_norm(self) -> np.ndarray:
        """Per-output norm ``sqrt(alpha_l^T K alpha_l)``."""
        K = self.kernel.base(self.centers, self.centers)
        return np.sqrt(np.maximum(np.einsum("jl,jk,kl->l", self.alpha, K, self.alpha), 0.0))


def make_rkhs_task(
    dag: Dag,
    kernel: Kernel | None = None,
    seed: int = 0,
    norm_bound: float = 1.0,
    n_centers: int = 12,
    noise_std: float = 0.0,
    action_box: tuple[float, float] = (-1.0, 1.0),
    mode: str = "cbo",
) -> Scm:
    """Draw each mechanism as a random finite kernel expansion with RKHS norm ``norm_bound``.

    Parent coordinates of the centers are drawn from ``[-B, B]`` (where
    ``|f| <= B`` for a unit-variance kernel) and action coordinates from the
    action box, so the expansions are informative over the reachable domain.
    """
    kernel = Kernel() if kernel is None else kernel
    rng = np.random.default_rng(seed)
    mechs = []
    B = float(norm_bound)
    lo, hi = action_box
    for i in range(dag.num_nodes):
        p, q, d = dag.parent_dim(i), dag.action_dim(i), dag.obs_dims[i]
        centers = np.hstack(
            [rng.uniform(-max(B, 1e-12), max(B, 1e-12), (n_centers, p)), rng.uniform(lo, hi, (n_centers, q))]
        )
        alpha = rng.standard_normal((n_centers, d))
        exp = KernelExpansion(kernel, centers, alpha)
        norms = exp.rkhs_norm()
        scale = np.where(norms > 0, B / np.where(norms > 0, norms, 1.0), 0.0)
        exp = KernelExpansion(kernel, centers, alpha * scale)
        mechs.append(
            Mechanism(
                i,
                _OnInputs(exp),
                f"rkhs(seed={seed}, node={i}, centers={n_centers}, B={B:g}, "
                f"kernel={kernel.kind}/{kernel.lengthscale:g}/{kernel.variance:g})",
            )
        )
    A = dag.total_action_dim
    return Scm(
        name=f"rkhs_{seed}",
        dag=dag,
        mechanisms=tuple(mechs),
        noise=tuple(NoiseSpec.gaussian(i, noise_std, dag.obs_dims[i]) for i in range(dag.num_nodes)),
        action_lo=np.full(A, float(lo)),
        action_hi=np.full(A, float(hi)),
        mode=mode,
        lengthscales=(kernel.lengthscale,) * dag.num_nodes,
        ucb_lengthscale=kernel.lengthscale,
    )


class _OnInputs:
    """Adapts a function of stacked ``(z, a)`` rows to the mechanism signature."""

    def __init__(self, f: KernelExpansion):
        self.expansion = f

    def __call__(self, z, a):
        return self.expansion(np.hstack([z, a]))


def rkhs_expansions(scm: Scm) -> list[KernelExpansion]:
    """Ground-truth expansions of an RKHS task (for calibration checks)."""
    return [m.func.expansion for m in scm.mechanisms]


# -- named mechanism registry for JSON tasks -------------------------------------------


def _inputs(z, a):
    return np.hstack([z, a])


MECHANISMS: dict[str, Callable[..., Callable]] = {
    "zero": lambda: (lambda z, a: np.zeros((z.shape[0], 1))),
    "identity_sum": lambda: (lambda z, a: np.sum(_inputs(z, a), axis=1, keepdims=True)),
    "linear": lambda weights, bias=0.0: (
        lambda z, a: _inputs(z, a) @ np.asarray(weights, float)[:, None] + bias
    ),
    "neg_square": lambda center=0.0: (
        lambda z, a: -((np.sum(_inputs(z, a), axis=1, keepdims=True) - center) ** 2)
    ),
    "sin_sum": lambda freq=1.0: (lambda z, a: np.sin(freq * np.sum(_inputs(z, a), axis=1, keepdims=True))),
    "tanh_sum": lambda: (lambda z, a: np.tanh(np.sum(_inputs(z, a), axis=1, keepdims=True))),
    "product": lambda: (lambda z, a: np.prod(_inputs(z, a), axis=1, keepdims=True)),
    "exp_neg": lambda: (lambda z, a: np.exp(-np.sum(_inputs(z, a), axis=1, keepdims=True))),
}


def load_task(path: str | Path | dict, noisy: bool = False) -> Scm:
    """Load a custom task from JSON: the graph schema plus registry mechanisms.

    Keys: ``name``, ``nodes`` (+ optional ``actions``), ``mechanisms`` (list of
    ``{"name", "params"}``), ``noise_std`` (used when ``noisy``), ``action_box``
    (``[lo, hi]`` or per-entry list), ``cardinality``, ``mode``, ``intervenable``,
    ``target_box`` (``{node: [lo, hi]}``), ``lengthscales``, ``known_optimum``.
    """
    obj = json.loads(Path(path).read_text()) if not isinstance(path, dict) else path
    dag = Dag.from_json(obj)
    mechs = []
    for i, spec in enumerate(obj["mechanisms"]):
        name = spec["name"]
        if name not in MECHANISMS:
            raise UnknownTask(f"unknown mechanism {name!r}")
        params = spec.get("params", {})
        desc = name + (json.dumps(params, sort_keys=True) if params else "")
        mechs.append(Mechanism(i, MECHANISMS[name](**params), desc))
    std = obj.get("noise_std", 1.0) if noisy else 0.0
    stds = np.broadcast_to(np.asarray(std, float), (dag.num_nodes,))
    noise = tuple(NoiseSpec.gaussian(i, float(stds[i]), dag.obs_dims[i]) for i in range(dag.num_nodes))
    A = dag.total_action_dim
    box = np.asarray(obj.get("action_box", [-1.0, 1.0]), float)
    if box.ndim == 1:
        box = np.tile(box, (A, 1))
    intervenable = obj.get("intervenable", [])
    targets = minimal_intervention_sets(dag, powerset(intervenable)) if intervenable else []
    return Scm(
        name=obj.get("name", Path(path).stem if not isinstance(path, dict) else "custom"),
        dag=dag,
        mechanisms=tuple(mechs),
        noise=noise,
        action_lo=box[:, 0] if A else np.zeros(0),
        action_hi=box[:, 1] if A else np.zeros(0),
        cardinality=obj.get("cardinality"),
        mode=obj.get("mode", "cbo"),
        interventions="hard" if intervenable else "soft",
        candidate_targets=tuple(targets),
        target_box={int(k): v for k, v in obj.get("target_box", {}).items()},
        lengthscales=tuple(obj.get("lengthscales", [1.0] * dag.num_nodes)),
        known_optimum=obj.get("known_optimum"),
    )
