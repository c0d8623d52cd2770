"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the summary
section) or ``python tests/test_acceptance.py``.  The experiment criteria use
a reduced optimizer budget (``ACQ``) so the whole file fits on one CPU core.
"""

from __future__ import annotations

import functools
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from gp_oracle import naive_posterior  # noqa: E402
from mcbo import metrics  # noqa: E402
from mcbo.acquisition import (  # noqa: E402
    AcqConfig,
    ConstantEta,
    NetEta,
    PlausibleModel,
    acq_grad,
    acq_value,
    flatten_eta,
    maximize_eta,
    reparam_rollout,
    unflatten_eta,
)
from mcbo.cli import main as cli_main  # noqa: E402
from mcbo.engine import NodeData, RunConfig, execute  # noqa: E402
from mcbo.gp import GpDataset, Kernel, fit  # noqa: E402
from mcbo.graph import Dag, minimal_intervention_sets, powerset  # noqa: E402
from mcbo.scm import Hard, Observational, Soft, propagate, random_actions, simulate  # noqa: E402
from mcbo.tasks import make_rkhs_task, make_task, rkhs_expansions  # noqa: E402

ACQ = {"restarts": 5, "grad_steps": 40, "raw_candidates": 64, "n_mc": 16}
SEEDS = range(20)
ROUNDS = 100


def report(k: int, ok: bool, detail: str, t0: float) -> None:
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t0:.1f}s) {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


# -- shared experiment runs ---------------------------------------------------------------------


@functools.cache
def chain_runs():
    cfgs = [
        RunConfig(
            task="rkhs_chain",
            rounds=ROUNDS,
            beta=0.5,
            seed=s,
            task_seed=s,
            task_options={"noise_std": 0.01},
            acq=ACQ,
        )
        for s in SEEDS
    ]
    return [execute(c) for c in cfgs]


@functools.cache
def tree_runs(algo: str):
    return [execute(RunConfig(task="tree_synthetic", algo=algo, rounds=ROUNDS, beta=0.5, seed=s, acq=ACQ)) for s in SEEDS]


@functools.cache
def toy_runs():
    return [
        execute(RunConfig(task="toygraph", noisy=True, algo="mcbo_hard", rounds=ROUNDS, beta=0.5, seed=s, acq=ACQ))
        for s in SEEDS
    ]


# -- 1 ---------------------------------------------------------------------------------------------


def test_criterion_1_gp_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        t, D, d = int(rng.integers(1, 21)), int(rng.integers(1, 4)), int(rng.integers(1, 3))
        k = Kernel(rng.choice(["rbf", "linear"]), lengthscale=rng.uniform(0.3, 2.0), variance=rng.uniform(0.2, 1.0))
        X, Y = rng.normal(size=(t, D)), rng.normal(size=(t, d))
        nv = float(rng.uniform(0.01, 1.0))
        Xq = rng.normal(size=(4, D))
        mu, var = fit(k, GpDataset(X, Y, nv)).predict(Xq)
        mu0, var0 = naive_posterior(k, X, Y, nv, Xq)
        worst = max(worst, np.abs(mu - mu0).max(), np.abs(var - np.maximum(var0, 0)).max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 10
    report(1, ok, f"max abs deviation {worst:.2e} over 100 datasets", t0)
    assert ok


# -- 2 ---------------------------------------------------------------------------------------------

GRAD_TASKS = [
    ("tree_synthetic", False),
    ("chain_synthetic", False),
    ("rosenbrock", False),
    ("dropwave", True),
    ("toygraph", True),
    ("psagraph", True),
    ("rkhs_chain", True),
]


def _random_config(rng):
    name, noisy = GRAD_TASKS[int(rng.integers(len(GRAD_TASKS)))]
    opts = {"noise_std": 0.1} if name == "rkhs_chain" else {}
    scm = make_task(name, noisy=noisy and name != "rkhs_chain", seed=int(rng.integers(100)), **opts)
    data = NodeData(scm)
    n = int(rng.integers(3, 15))
    for _ in range(n):
        if scm.interventions == "soft":
            iv = Soft(random_actions(scm, 1, rng)[0])
        else:
            targets = sorted(scm.candidate_targets[int(rng.integers(len(scm.candidate_targets)))])
            iv = Hard.of({t: rng.uniform(*scm.target_box[t]) for t in targets}) if targets else Observational()
        data.add(iv, simulate(scm, iv, rng))
    model = PlausibleModel(scm.dag, data.fit(), float(rng.uniform(0.1, 3.0)), scm.noise_std)
    if scm.interventions == "soft":
        iv = Soft(random_actions(scm, 1, rng)[0])
        clamped = ()
    else:
        nonempty = [t for t in scm.minimal_targets() if t]
        targets = sorted(nonempty[int(rng.integers(len(nonempty)))])
        iv = Hard.of({t: rng.uniform(*scm.target_box[t]) for t in targets})
        clamped = tuple(targets)
    etas = []
    h = 6
    for i in range(scm.dag.num_nodes):
        d, D = scm.dag.obs_dims[i], scm.dag.input_dim(i)
        if i in clamped:
            etas.append(None)
        elif scm.noiseless:
            etas.append(ConstantEta(rng.uniform(-0.9, 0.9, d)))
        else:
            etas.append(NetEta(rng.normal(size=(h, D)), rng.normal(size=h), rng.normal(size=(d, h)), rng.normal(size=d)))
    model.etas = etas
    return scm, model, iv


def _shift(iv, j, h):
    if isinstance(iv, Soft):
        a = iv.actions.copy()
        a[j] += h
        return Soft(a)
    vals = np.concatenate(iv.values)
    vals[j] += h
    out, off = {}, 0
    for t, v in zip(iv.targets, iv.values):
        out[t] = vals[off : off + v.size]
        off += v.size
    return Hard.of(out)


def test_criterion_2_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    cfg = AcqConfig(n_mc=8)
    h = 1e-5
    worst, checked = 0.0, 0
    for c in range(50):
        scm, model, iv = _random_config(rng)
        seed = 1000 + c
        g_iv, g_eta = acq_grad(model, iv, cfg, np.random.default_rng(seed))

        def value(m, v):
            return acq_value(m, v, cfg, np.random.default_rng(seed))

        pairs = []
        for j in range(g_iv.size):
            fd = (value(model, _shift(iv, j, h)) - value(model, _shift(iv, j, -h))) / (2 * h)
            pairs.append((g_iv[j], fd))
        base = list(model.etas)
        for i, e in enumerate(base):
            if e is None:
                continue
            flat = flatten_eta(e)
            for k in rng.choice(flat.size, size=min(8, flat.size), replace=False):
                vals = []
                for s in (h, -h):
                    f = flat.copy()
                    f[k] += s
                    model.etas = base[:i] + [unflatten_eta(e, f)] + base[i + 1 :]
                    vals.append(value(model, iv))
                model.etas = base
                pairs.append((g_eta[i][k], (vals[0] - vals[1]) / (2 * h)))
        for a, f in pairs:
            mag = max(abs(a), abs(f))
            if mag > 1e-6:
                worst = max(worst, abs(a - f) / mag)
                checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    report(2, ok, f"max relative error {worst:.2e} over {checked} entries in 50 configurations", t0)
    assert ok


# -- 3 ---------------------------------------------------------------------------------------------


def _node_inputs(scm, obs, actions, i):
    dag = scm.dag
    parts = [obs[p] for p in dag.parents[i]] + [actions[:, list(dag.node_action_index[i])]]
    return np.hstack(parts)


def test_criterion_3_optimism():
    t0 = time.perf_counter()
    beta = 2.0
    used, worst_err, min_gap = 0, 0.0, np.inf
    cfg = AcqConfig(restarts=2, grad_steps=20)
    for seed in range(12):
        if used == 5:
            break
        scm = make_task("rkhs_chain", seed=seed)
        rng = np.random.default_rng(seed)
        data = NodeData(scm)
        for a in random_actions(scm, 25, rng):
            data.add(Soft(a), simulate(scm, Soft(a), rng))
        posts = data.fit()
        fs = rkhs_expansions(scm)
        probe_a = random_actions(scm, 200, rng)
        inside = True
        obs = _true_rollout(scm, probe_a)
        for i, gp in enumerate(posts):
            X = _node_inputs(scm, obs, probe_a, i)
            mu, var = gp.predict(X)
            inside &= bool(np.all(np.abs(fs[i](X) - mu) <= beta * np.sqrt(var) + 1e-12))
        if not inside:
            continue
        used += 1
        model = PlausibleModel(scm.dag, posts, beta, scm.noise_std)
        acts = random_actions(scm, 50, rng)
        obs = _true_rollout(scm, acts)
        for r in range(50):
            etas = []
            for i, gp in enumerate(posts):
                x = _node_inputs(scm, [o[r : r + 1] for o in obs], acts[r : r + 1], i)
                mu, var = gp.predict(x)
                etas.append(ConstantEta(np.clip((fs[i](x) - mu) / (beta * np.sqrt(var)), -1, 1)[0]))
            model.etas = etas
            iv = Soft(acts[r])
            sim = reparam_rollout(model, iv, [np.zeros(d) for d in scm.dag.obs_dims])
            true = obs[-1][r, 0]
            worst_err = max(worst_err, abs(sim.reward - true))
            if r < 10:
                _, best = maximize_eta(model, iv, cfg, np.random.default_rng(r))
                min_gap = min(min_gap, best - true)
    elapsed = time.perf_counter() - t0
    ok = used >= 3 and worst_err < 1e-6 and min_gap >= -1e-9 and elapsed < 60
    report(
        3,
        ok,
        f"{used} tasks inside bounds; rollout error {worst_err:.1e}; min(max-eta value - true) {min_gap:.3g}",
        t0,
    )
    assert ok


def _true_rollout(scm, actions):
    eps = np.zeros((actions.shape[0], scm.total_obs_dim))
    return propagate(scm, actions, {}, eps)


# -- 4 ---------------------------------------------------------------------------------------------


def test_criterion_4_calibration():
    t0 = time.perf_counter()
    B, rho, delta = 1.0, 0.1, 0.05
    kernel = Kernel()
    hits = total = 0
    for seed in SEEDS:
        scm = make_rkhs_task(Dag.chain(3, actions=[0, 1]), kernel=kernel, seed=seed, norm_bound=B)
        rng = np.random.default_rng(seed)
        for f in rkhs_expansions(scm):
            D = f.centers.shape[1]
            X = rng.uniform(-1, 1, (20, D))
            Y = f(X) + rho * rng.standard_normal((20, 1))
            gamma = 0.0
            data = GpDataset.empty(D, 1, rho**2)
            for x, y in zip(X, Y):
                var = fit(kernel, data).predict(x[None])[1][0, 0]
                gamma += 0.5 * np.log1p(var / rho**2)
                data = data.append(x[None], y[None])
            # GP noise is rho^2 and noise is rho-sub-Gaussian, so the R / rho factor is 1
            beta = B + np.sqrt(2 * (gamma + 1 + np.log(1 / delta)))
            gp = fit(kernel, data)
            Q = rng.uniform(-1, 1, (200, D))
            mu, var = gp.predict(Q)
            hits += int(np.sum(np.abs(f(Q) - mu) <= beta * np.sqrt(var)))
            total += 200
    cover = hits / total
    elapsed = time.perf_counter() - t0
    ok = cover >= 0.95 and elapsed < 120
    report(4, ok, f"coverage {cover:.4f} over {total} queries (20 seeds x 3 mechanisms x 200)", t0)
    assert ok


# -- 5 ---------------------------------------------------------------------------------------------


def _avg_regret(res, t):
    return res.optimum - metrics.average_reward(res.records).values[t - 1]


def test_criterion_5_regret_decrease():
    t0 = time.perf_counter()
    runs = chain_runs()
    r10 = float(np.median([_avg_regret(r, 10) for r in runs]))
    r100 = float(np.median([_avg_regret(r, 100) for r in runs]))
    elapsed = time.perf_counter() - t0
    ok = r100 < 0.5 * r10 and elapsed < 600
    report(5, ok, f"median average regret T=10 {r10:.4g}, T=100 {r100:.4g} (ratio {r100 / r10:.3f})", t0)
    assert ok


# -- 6 ---------------------------------------------------------------------------------------------


def test_criterion_6_structure_advantage():
    t0 = time.perf_counter()
    final = {}
    for algo in ("mcbo", "ucb_baseline"):
        final[algo] = float(np.median([metrics.average_reward(r.records).values[-1] for r in tree_runs(algo)]))
    gap = final["mcbo"] - final["ucb_baseline"]
    elapsed = time.perf_counter() - t0
    ok = gap > 0 and elapsed < 1200
    report(
        6,
        ok,
        f"median final average reward mcbo {final['mcbo']:.4f} vs ucb {final['ucb_baseline']:.4f} (gap {gap:.4f})",
        t0,
    )
    assert ok


# -- 7 ---------------------------------------------------------------------------------------------


def test_criterion_7_target_identification():
    t0 = time.perf_counter()
    runs = toy_runs()
    oracle_target = (1,)
    fracs = [
        np.mean([isinstance(r.intervention, Hard) and r.intervention.targets == oracle_target for r in res.records[-25:]])
        for res in runs
    ]
    med = float(np.median(fracs))
    elapsed = time.perf_counter() - t0
    ok = med > 0.5 and elapsed < 600
    report(7, ok, f"median share of do(X1) in last 25 rounds {med:.2f} (min {min(fracs):.2f})", t0)
    assert ok


# -- 8 ---------------------------------------------------------------------------------------------


def test_criterion_8_minimal_sets():
    t0 = time.perf_counter()
    toy = minimal_intervention_sets(make_task("toygraph").dag, powerset([0, 1]))
    psa = minimal_intervention_sets(make_task("psagraph").dag, powerset([2, 3]))
    ok = toy == [frozenset(), frozenset({0}), frozenset({1})] and psa == [
        frozenset(),
        frozenset({2}),
        frozenset({3}),
        frozenset({2, 3}),
    ]
    ok = ok and time.perf_counter() - t0 < 1
    fmt = lambda sets: "{" + ", ".join("{" + ",".join(map(str, sorted(s))) + "}" for s in sets) + "}"
    report(8, ok, f"toygraph {fmt(toy)}; psagraph {fmt(psa)}", t0)
    assert ok


# -- 9 ---------------------------------------------------------------------------------------------


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    args = ["run", "--task", "dropwave", "--noisy", "--rounds", "5", "--seeds", "2"]
    for out in ("a", "b"):
        assert cli_main(args + ["--out", str(tmp_path / out)]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    elapsed = time.perf_counter() - t0
    ok = same and len(files) == 3 and elapsed < 60
    report(9, ok, f"{len(files)} CSV files byte-identical across two runs", t0)
    assert ok


# -- 10 --------------------------------------------------------------------------------------------


def test_criterion_10_info_gain():
    t0 = time.perf_counter()
    all_runs = list(chain_runs()) + list(tree_runs("mcbo")) + list(tree_runs("ucb_baseline")) + list(toy_runs())
    monotone = all(np.all(np.diff(r.info_gain_curve()) >= 0) for r in all_runs)
    shrink = []
    for r in chain_runs():
        inc = np.diff(np.concatenate([[0.0], r.info_gain_curve()]))
        dec = len(inc) // 10
        shrink.append(inc[-dec:].mean() < inc[:dec].mean())
    ok = monotone and all(shrink)
    report(
        10,
        ok,
        f"nondecreasing on {len(all_runs)} runs: {monotone}; increments shrink on {sum(shrink)}/{len(shrink)} chain runs",
        t0,
    )
    assert ok


if __name__ == "__main__":
    import tempfile

    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                pass
