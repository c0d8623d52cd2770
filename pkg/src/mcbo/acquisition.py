"""Optimistic acquisition via the reparameterization trick.

A plausible mechanism is written ``f~_i = mu_i + beta * sigma_i * eta_i`` with
``eta_i`` mapping node inputs into ``[-1, 1]^d``.  The acquisition is the mean
reward of rollouts through these optimistic models over fixed noise draws, and
is maximized jointly over the intervention and the ``eta`` parameters by
projected gradient ascent.  Gradients are reverse-mode, hand-derived through
the GP posterior Jacobians and the ``eta`` networks.

Everything below is batched over a leading "restart" axis ``B`` and a Monte
Carlo axis ``S``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .gp import DimMismatch, GpPosterior
from .graph import Dag, minimal_intervention_sets
from .scm import Hard, Intervention, Observational, Sample, Scm, Soft


class NoFeasibleCandidate(RuntimeError):
    pass


@dataclass
class AcqConfig:
    n_mc: int = 32
    restarts: int = 10
    grad_steps: int = 100
    step_size: float = 0.05
    raw_candidates: int = 100
    hidden: int = 32
    max_supports: int = 512

    def __post_init__(self):
        if self.n_mc < 1 or self.restarts < 1:
            raise ValueError("n_mc and restarts must be >= 1")
        if self.raw_candidates < self.restarts:
            self.raw_candidates = self.restarts


# -- eta parameterizations ----------------------------------------------------------


@dataclass
class ConstantEta:
    value: np.ndarray

    def __post_init__(self):
        self.value = np.atleast_1d(np.asarray(self.value, dtype=float))


@dataclass
class NetEta:
    """``2 sigmoid(W2 relu(W1 u + b1) + b2) - 1``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int, hidden: int = 32) -> "NetEta":
        return cls(np.zeros((hidden, in_dim)), np.zeros(hidden), np.zeros((out_dim, hidden)), np.zeros(out_dim))


EtaParam = ConstantEta | NetEta


def _squash(o):
    return 2.0 / (1.0 + np.exp(-o)) - 1.0


def eta_eval(eta: EtaParam, z, a) -> np.ndarray:
    """Evaluate one node's ``eta`` at input ``(z, a)``; result lies in ``[-1, 1]^d``."""
    u = np.concatenate([np.ravel(np.asarray(z, float)), np.ravel(np.asarray(a, float))])
    if isinstance(eta, ConstantEta):
        return np.clip(eta.value, -1.0, 1.0)
    if eta.W1.shape[1] != u.size:
        raise DimMismatch(f"eta expects {eta.W1.shape[1]} inputs, got {u.size}")
    h = np.maximum(eta.W1 @ u + eta.b1, 0.0)
    return _squash(eta.W2 @ h + eta.b2)


# -- plausible model -------------------------------------------------------------------


@dataclass
class PlausibleModel:
    """GP posteriors per node plus ``beta`` and one ``eta`` per modelled node.

    ``input_lo``/``input_scale`` map node inputs to the unit box before they
    reach a network ``eta``.  ``noise_std`` is the known noise scale used to
    draw simulated noise inside optimistic rollouts.
    """

    dag: Dag
    posteriors: list[GpPosterior]
    beta: float
    noise_std: list[np.ndarray]
    etas: list[EtaParam | None] | None = None
    input_lo: list[np.ndarray] = field(default=None)
    input_scale: list[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.input_lo is None:
            self.input_lo, self.input_scale = [], []
            for gp in self.posteriors:
                X = gp.data.inputs
                if X.shape[0] == 0:
                    lo, sc = np.zeros(X.shape[1]), np.ones(X.shape[1])
                else:
                    lo, hi = X.min(axis=0), X.max(axis=0)
                    sc = np.where(hi - lo > 1e-9, hi - lo, 1.0)
                self.input_lo.append(lo)
                self.input_scale.append(sc)
        self.noise_std = [np.asarray(s, float) for s in self.noise_std]

    @property
    def noiseless(self) -> bool:
        return all(not np.any(s) for s in self.noise_std)

    @property
    def total_obs_dim(self) -> int:
        return sum(self.dag.obs_dims)

    def noise_scale_vector(self) -> np.ndarray:
        return np.concatenate([np.broadcast_to(s, (d,)) for s, d in zip(self.noise_std, self.dag.obs_dims)])


# -- flat parameter layout ---------------------------------------------------------------


class _Layout:
    """Maps a flat per-restart vector to (decision variables, per-node eta params).

    The first ``n_dec`` entries are decision variables in unit-box coordinates;
    they map to raw values ``lo + u * (hi - lo)``.  The rest are eta parameters
    for every non-clamped node, in node order.
    """

    def __init__(self, dag: Dag, kind: str, clamped: tuple[int, ...], dec_lo, dec_hi, hidden: int):
        self.dag = dag
        self.kind = kind
        self.hidden = hidden
        self.clamped = tuple(clamped)
        self.dec_lo = np.asarray(dec_lo, float)
        self.dec_hi = np.asarray(dec_hi, float)
        self.n_dec = self.dec_lo.size
        self.slots: dict[int, slice] = {}
        off = self.n_dec
        for i in range(dag.num_nodes):
            if i in self.clamped:
                continue
            n = self.eta_size(i)
            self.slots[i] = slice(off, off + n)
            off += n
        self.size = off

    def eta_size(self, i: int) -> int:
        d, D, h = self.dag.obs_dims[i], self.dag.input_dim(i), self.hidden
        if self.kind == "constant":
            return d
        return h * D + h + d * h + d

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(self.size, -np.inf)
        hi = np.full(self.size, np.inf)
        lo[: self.n_dec], hi[: self.n_dec] = 0.0, 1.0
        if self.kind == "constant":
            lo[self.n_dec :], hi[self.n_dec :] = -1.0, 1.0
        return lo, hi

    def decisions(self, theta: np.ndarray) -> np.ndarray:
        return self.dec_lo + theta[:, : self.n_dec] * (self.dec_hi - self.dec_lo)

    def net(self, theta: np.ndarray, i: int):
        """Views (W1, b1, W2, b2) with a leading batch axis."""
        B = theta.shape[0]
        d, D, h = self.dag.obs_dims[i], self.dag.input_dim(i), self.hidden
        p = theta[:, self.slots[i]]
        o = 0
        W1 = p[:, o : o + h * D].reshape(B, h, D); o += h * D
        b1 = p[:, o : o + h]; o += h
        W2 = p[:, o : o + d * h].reshape(B, d, h); o += d * h
        b2 = p[:, o : o + d]
        return W1, b1, W2, b2

    def random(self, n: int, rng: np.random.Generator) -> np.ndarray:
        theta = np.empty((n, self.size))
        theta[:, : self.n_dec] = rng.uniform(0.0, 1.0, (n, self.n_dec))
        for i, sl in self.slots.items():
            if self.kind == "constant":
                theta[:, sl] = rng.uniform(-1.0, 1.0, (n, sl.stop - sl.start))
            else:
                d, D, h = self.dag.obs_dims[i], self.dag.input_dim(i), self.hidden
                parts = [
                    rng.normal(0.0, 1.0 / math.sqrt(max(D, 1)), (n, h * D)),
                    rng.normal(0.0, 1.0, (n, h)),
                    rng.normal(0.0, 1.0 / math.sqrt(h), (n, d * h)),
                    rng.normal(0.0, 1.0, (n, d)),
                ]
                theta[:, sl] = np.hstack(parts)
        return theta

    def pack_etas(self, etas: list[EtaParam | None]) -> np.ndarray:
        out = np.zeros(self.size - self.n_dec)
        for i, sl in self.slots.items():
            e = etas[i]
            s = slice(sl.start - self.n_dec, sl.stop - self.n_dec)
            if self.kind == "constant":
                out[s] = e.value
            else:
                out[s] = np.concatenate([e.W1.ravel(), e.b1, e.W2.ravel(), e.b2])
        return out

    def unpack_etas(self, row: np.ndarray) -> list[EtaParam | None]:
        etas: list[EtaParam | None] = [None] * self.dag.num_nodes
        for i, sl in self.slots.items():
            if self.kind == "constant":
                etas[i] = ConstantEta(row[sl].copy())
            else:
                W1, b1, W2, b2 = self.net(row[None], i)
                etas[i] = NetEta(W1[0].copy(), b1[0].copy(), W2[0].copy(), b2[0].copy())
        return etas


# -- batched rollout with reverse-mode gradient ---------------------------------------------


def _rollout(
    model: PlausibleModel,
    layout: _Layout,
    theta: np.ndarray,
    actions: np.ndarray,
    clamp_of,
    noise: np.ndarray,
    grad: bool,
):
    """Forward (and optionally backward) pass of the optimistic rollout.

    ``theta`` (B, P) holds decision and eta parameters.  ``actions`` (B, A) are
    raw soft actions; ``clamp_of`` maps clamped node -> (B, d) raw values.
    ``noise`` (B or 1, S, total_obs_dim) is already scaled.  Returns per-restart
    mean reward (B,) and, with ``grad``, the gradients w.r.t. ``actions``,
    each clamp, and ``theta``'s eta block.
    """
    dag = model.dag
    beta = model.beta
    B = theta.shape[0]
    S = noise.shape[1]
    n = dag.num_nodes
    obs: list[np.ndarray] = [None] * n
    cache: list = [None] * n
    col = 0
    cols = []
    for i in range(n):
        d = dag.obs_dims[i]
        cols.append(col)
        if i in clamp_of:
            obs[i] = np.broadcast_to(clamp_of[i][:, None, :], (B, S, d))
            col += d
            continue
        ps = dag.parents[i]
        aidx = list(dag.node_action_index[i])
        parts = [obs[p] for p in ps]
        if aidx:
            parts.append(np.broadcast_to(actions[:, None, aidx], (B, S, len(aidx))))
        D = dag.input_dim(i)
        s = np.concatenate(parts, axis=2) if parts else np.zeros((B, S, 0))
        flat = s.reshape(B * S, D)
        gp = model.posteriors[i]
        if grad:
            mu, var, dmu, dvar = gp.predict_with_grad(flat)
        else:
            mu, var = gp.predict(flat)
        sd = np.sqrt(var).reshape(B, S, d)
        mu = mu.reshape(B, S, d)
        u = (s - model.input_lo[i]) / model.input_scale[i]
        if layout.kind == "constant":
            eta = np.broadcast_to(theta[:, None, layout.slots[i]], (B, S, d))
            ec = None
        else:
            W1, b1, W2, b2 = layout.net(theta, i)
            pre = u @ W1.transpose(0, 2, 1) + b1[:, None, :]
            hid = np.maximum(pre, 0.0)
            sg = 1.0 / (1.0 + np.exp(-(hid @ W2.transpose(0, 2, 1) + b2[:, None, :])))
            eta = 2.0 * sg - 1.0
            ec = (u, pre, hid, sg, W1, W2)
        x = mu + beta * sd * eta + noise[:, :, col : col + d]
        obs[i] = x
        if grad:
            with np.errstate(divide="ignore", invalid="ignore"):
                sd_flat = sd.reshape(B * S, d)[..., None]
                dsd = np.where(sd_flat > 0, dvar / (2.0 * sd_flat), 0.0)
            cache[i] = (dmu.reshape(B, S, d, D), dsd.reshape(B, S, d, D), sd, eta, ec, aidx)
        col += d

    reward = obs[-1][:, :, 0]
    value = reward.mean(axis=1)
    if not grad:
        return value, obs

    g_theta = np.zeros_like(theta)
    g_actions = np.zeros_like(actions)
    g_clamp = {}
    gx = [np.zeros((B, S, dag.obs_dims[i])) for i in range(n)]
    gx[-1][:, :, 0] = 1.0 / S
    for i in range(n - 1, -1, -1):
        g = gx[i]
        if i in clamp_of:
            g_clamp[i] = g.sum(axis=1)
            continue
        dmu, dsd, sd, eta, ec, aidx = cache[i]
        ds = (g[:, :, None, :] @ dmu + (g * beta * eta)[:, :, None, :] @ dsd)[:, :, 0, :]
        g_eta = g * beta * sd
        sl = layout.slots[i]
        if layout.kind == "constant":
            g_theta[:, sl] += g_eta.sum(axis=1)
        else:
            u, pre, hid, sg, W1, W2 = ec
            go = g_eta * 2.0 * sg * (1.0 - sg)
            gW2 = go.transpose(0, 2, 1) @ hid
            gb2 = go.sum(axis=1)
            gpre = (go @ W2) * (pre > 0.0)
            gW1 = gpre.transpose(0, 2, 1) @ u
            gb1 = gpre.sum(axis=1)
            g_theta[:, sl] += np.concatenate(
                [gW1.reshape(B, -1), gb1, gW2.reshape(B, -1), gb2], axis=1
            )
            ds = ds + (gpre @ W1) / model.input_scale[i]
        off = 0
        for p in dag.parents[i]:
            dp = dag.obs_dims[p]
            gx[p] = gx[p] + ds[:, :, off : off + dp]
            off += dp
        if aidx:
            g_actions[:, aidx] += ds[:, :, off:].sum(axis=1)
    return value, obs, g_actions, g_clamp, g_theta


# -- objective over the flat layout ----------------------------------------------------------


class _Objective:
    """Acquisition as a function of the flat vector for one support / target set."""

    def __init__(self, model: PlausibleModel, layout: _Layout, mode: str, free_idx, targets):
        self.model = model
        self.layout = layout
        self.mode = mode
        self.free_idx = list(free_idx)
        self.targets = tuple(targets)
        self.A = model.dag.total_action_dim

    def _unpack(self, theta):
        B = theta.shape[0]
        raw = self.layout.decisions(theta)
        actions = np.zeros((B, self.A))
        clamps = {}
        if self.mode == "soft":
            actions[:, self.free_idx] = raw
        else:
            off = 0
            for t in self.targets:
                d = self.model.dag.obs_dims[t]
                clamps[t] = raw[:, off : off + d]
                off += d
        return actions, clamps

    def value(self, theta, noise):
        actions, clamps = self._unpack(theta)
        return _rollout(self.model, self.layout, theta, actions, clamps, noise, grad=False)[0]

    def value_and_grad(self, theta, noise):
        actions, clamps = self._unpack(theta)
        val, _, gA, gC, gT = _rollout(self.model, self.layout, theta, actions, clamps, noise, grad=True)
        g = gT
        span = self.layout.dec_hi - self.layout.dec_lo
        if self.mode == "soft":
            g[:, : self.layout.n_dec] = gA[:, self.free_idx] * span
        else:
            parts = [gC[t] for t in self.targets]
            if parts:
                g[:, : self.layout.n_dec] = np.concatenate(parts, axis=1) * span
        return val, g

    def intervention(self, row: np.ndarray) -> Intervention:
        actions, clamps = self._unpack(row[None])
        if self.mode == "soft":
            return Soft(actions[0])
        if not self.targets:
            return Observational()
        return Hard(self.targets, tuple(clamps[t][0] for t in self.targets))


def _noise_draws(model: PlausibleModel, shape, rng: np.random.Generator) -> np.ndarray:
    scale = model.noise_scale_vector()
    if not np.any(scale):
        return np.zeros(tuple(shape[:-1]) + (1, scale.size))
    return rng.standard_normal(tuple(shape) + (scale.size,)) * scale


def ascend(fun, theta, lo, hi, steps: int, lr: float):
    """Projected Adam ascent on a batch of starts; keeps each start's best iterate.

    ``fun(theta) -> (value (B,), grad (B, P))``.
    """
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best = theta.copy()
    best_val = np.full(theta.shape[0], -np.inf)
    for k in range(1, steps + 1):
        val, g = fun(theta)
        better = val > best_val
        best[better] = theta[better]
        best_val[better] = val[better]
        g = np.nan_to_num(g)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        step = lr * (m / (1 - b1**k)) / (np.sqrt(v / (1 - b2**k)) + eps)
        theta = np.clip(theta + step, lo, hi)
    val, _ = fun(theta)
    better = val > best_val
    best[better] = theta[better]
    best_val[better] = val[better]
    return best, best_val


def _multistart(obj: _Objective, cfg: AcqConfig, rng: np.random.Generator, init_rows=None):
    """Screen raw candidates, ascend the top ``restarts``; return (row, value)."""
    layout = obj.layout
    S = 1 if obj.model.noiseless else cfg.n_mc
    common = _noise_draws(obj.model, (1, S), rng)
    cand = layout.random(cfg.raw_candidates, rng)
    if init_rows is not None:
        cand = np.vstack([np.atleast_2d(init_rows), cand])
    vals = obj.value(cand, common)
    top = np.argsort(-vals, kind="stable")[: cfg.restarts]
    theta = cand[top]
    if layout.size > 0 and cfg.grad_steps > 0:
        noise = _noise_draws(obj.model, (theta.shape[0], S), rng)
        lo, hi = layout.bounds()
        theta, _ = ascend(lambda th: obj.value_and_grad(th, noise), theta, lo, hi, cfg.grad_steps, cfg.step_size)
    final = obj.value(theta, common)
    k = int(np.argmax(final))
    return theta[k], float(final[k])


# -- search space ---------------------------------------------------------------------------------


@dataclass
class SearchSpace:
    dag: Dag
    mode: str
    action_lo: np.ndarray
    action_hi: np.ndarray
    cardinality: int | None = None
    target_sets: tuple[frozenset[int], ...] = ()
    target_box: dict = field(default_factory=dict)

    @classmethod
    def from_scm(cls, scm: Scm) -> "SearchSpace":
        return cls(
            scm.dag,
            scm.interventions,
            scm.action_lo,
            scm.action_hi,
            scm.cardinality,
            tuple(scm.candidate_targets),
            dict(scm.target_box),
        )

    def supports(self, limit: int = 512) -> list[tuple[int, ...]] | None:
        """Action-variable supports to enumerate; None when there are more than ``limit``."""
        n = self.dag.num_actions
        c = self.cardinality
        if c is None or c >= n:
            return [tuple(range(n))]
        count = sum(math.comb(n, r) for r in range(c + 1))
        if count <= limit:
            return [s for r in range(c + 1) for s in itertools.combinations(range(n), r)]
        return None

    def free_index(self, support) -> list[int]:
        return [k for j in support for k in range(self.dag.action_slices[j].start, self.dag.action_slices[j].stop)]


def eta_kind_for(noise_std) -> str:
    return "constant" if all(not np.any(s) for s in noise_std) else "net"


def _soft_objective(model, space, support, kind, cfg):
    idx = space.free_index(support)
    layout = _Layout(model.dag, kind, (), space.action_lo[idx], space.action_hi[idx], cfg.hidden)
    return _Objective(model, layout, "soft", idx, ())


def _hard_objective(model, space, targets, kind, cfg):
    tl = sorted(targets)
    lo = np.concatenate([space.target_box[t][0] for t in tl]) if tl else np.zeros(0)
    hi = np.concatenate([space.target_box[t][1] for t in tl]) if tl else np.zeros(0)
    layout = _Layout(model.dag, kind, tuple(tl), lo, hi, cfg.hidden)
    return _Objective(model, layout, "hard", (), tl)


def optimize_acq(
    posteriors: list[GpPosterior],
    beta: float,
    space: SearchSpace,
    cfg: AcqConfig,
    rng: np.random.Generator,
    noise_std=None,
    eta_kind: str | None = None,
):
    """Maximize the optimistic acquisition over interventions and ``eta``.

    Soft mode enumerates cardinality supports (greedy when too many);
    hard mode enumerates minimal intervention sets.  Returns
    ``(intervention, etas, value)``.
    """
    dag = space.dag
    noise_std = [np.zeros(d) for d in dag.obs_dims] if noise_std is None else noise_std
    model = PlausibleModel(dag, posteriors, beta, noise_std)
    kind = eta_kind or eta_kind_for(noise_std)
    if space.mode == "soft":
        supports = space.supports(cfg.max_supports)
        if supports is None:
            supports = [_greedy_support(model, space, kind, cfg, rng)]
        objectives = [_soft_objective(model, space, s, kind, cfg) for s in supports]
    else:
        sets = minimal_intervention_sets(dag, space.target_sets)
        if not sets:
            raise NoFeasibleCandidate("no candidate target sets")
        objectives = [_hard_objective(model, space, t, kind, cfg) for t in sets]
    if not objectives:
        raise NoFeasibleCandidate("empty search space")
    best = None
    for obj in objectives:
        row, val = _multistart(obj, cfg, rng)
        if best is None or val > best[2]:
            best = (obj, row, val)
    obj, row, val = best
    return obj.intervention(row), obj.layout.unpack_etas(row), val


def _greedy_support(model, space, kind, cfg, rng) -> tuple[int, ...]:
    """Top-``c`` actions ranked by their single-action acquisition optimum."""
    scores = []
    for j in range(space.dag.num_actions):
        obj = _soft_objective(model, space, (j,), kind, cfg)
        scores.append(_multistart(obj, cfg, rng)[1])
    order = np.argsort(-np.asarray(scores), kind="stable")
    return tuple(sorted(order[: space.cardinality].tolist()))


# -- single-intervention API ------------------------------------------------------------------


def _single(model: PlausibleModel, iv: Intervention, hidden: int | None = None):
    """Objective and flat row reproducing ``iv`` and ``model.etas``."""
    dag = model.dag
    etas = model.etas
    if etas is None:
        raise ValueError("model.etas must be set")
    kind = "constant" if any(isinstance(e, ConstantEta) for e in etas if e is not None) else "net"
    if hidden is None:
        hidden = next((e.W1.shape[0] for e in etas if isinstance(e, NetEta)), 32)
    if isinstance(iv, Hard):
        tl = list(iv.targets)
        dec = np.concatenate(iv.values) if tl else np.zeros(0)
        layout = _Layout(dag, kind, tuple(tl), dec - 0.5, dec + 0.5, hidden)
        obj = _Objective(model, layout, "hard", (), tl)
    else:
        acts = iv.actions if isinstance(iv, Soft) else np.zeros(dag.total_action_dim)
        idx = list(range(dag.total_action_dim))
        layout = _Layout(dag, kind, (), acts - 0.5, acts + 0.5, hidden)
        obj = _Objective(model, layout, "soft", idx, ())
    row = np.concatenate([np.full(layout.n_dec, 0.5), layout.pack_etas(etas)])
    return obj, row


def reparam_rollout(model: PlausibleModel, iv: Intervention, noise_draw, dag: Dag | None = None) -> Sample:
    """One rollout through the optimistic model with the given per-node noise values."""
    obj, row = _single(model, iv)
    noise = np.concatenate([np.ravel(w) for w in noise_draw])[None, None, :]
    actions, clamps = obj._unpack(row[None])
    _, obs = _rollout(model, obj.layout, row[None], actions, clamps, noise, grad=False)
    return Sample(tuple(np.array(o[0, 0]) for o in obs))


def acq_value(model: PlausibleModel, iv: Intervention, cfg: AcqConfig, rng: np.random.Generator) -> float:
    """Mean optimistic reward over ``n_mc`` noise draws (one draw when noiseless)."""
    obj, row = _single(model, iv)
    S = 1 if model.noiseless else cfg.n_mc
    return float(obj.value(row[None], _noise_draws(model, (1, S), rng))[0])


def acq_grad(model: PlausibleModel, iv: Intervention, cfg: AcqConfig, rng: np.random.Generator):
    """Gradient of :func:`acq_value` w.r.t. the intervention and every eta.

    Returns ``(g_iv, g_etas)``: ``g_iv`` is the action-vector gradient for soft
    interventions or the concatenated clamp-value gradient for hard ones;
    ``g_etas[i]`` is the flat parameter gradient of node ``i``'s eta.
    """
    obj, row = _single(model, iv)
    S = 1 if model.noiseless else cfg.n_mc
    noise = _noise_draws(model, (1, S), rng)
    _, g = obj.value_and_grad(row[None], noise)
    g = g[0]
    # decision coordinates live in a unit-span box around the point: span == 1
    g_iv = g[: obj.layout.n_dec].copy()
    g_etas: list[np.ndarray | None] = [None] * model.dag.num_nodes
    for i, sl in obj.layout.slots.items():
        g_etas[i] = g[sl].copy()
    return g_iv, g_etas


def maximize_eta(model: PlausibleModel, iv: Intervention, cfg: AcqConfig, rng: np.random.Generator):
    """Optimistic value of a fixed intervention: ascend over eta only.

    Starts from ``model.etas`` plus random draws, so the result is never below
    ``acq_value`` at the starting etas (on the same noise draws).
    Returns ``(etas, value)``.
    """
    obj, row = _single(model, iv)
    layout = obj.layout
    S = 1 if model.noiseless else cfg.n_mc
    noise = _noise_draws(model, (1, S), rng)
    starts = layout.random(cfg.restarts, rng)
    starts[:, : layout.n_dec] = 0.5
    theta = np.vstack([row[None], starts])
    lo, hi = layout.bounds()
    lo[: layout.n_dec] = hi[: layout.n_dec] = 0.5
    best, vals = ascend(lambda th: obj.value_and_grad(th, noise), theta, lo, hi, cfg.grad_steps, cfg.step_size)
    k = int(np.argmax(vals))
    return layout.unpack_etas(best[k]), float(vals[k])


def flatten_eta(eta: EtaParam) -> np.ndarray:
    if isinstance(eta, ConstantEta):
        return eta.value.copy()
    return np.concatenate([eta.W1.ravel(), eta.b1, eta.W2.ravel(), eta.b2])


def unflatten_eta(like: EtaParam, flat: np.ndarray) -> EtaParam:
    if isinstance(like, ConstantEta):
        return ConstantEta(flat.copy())
    h, D = like.W1.shape
    d = like.W2.shape[0]
    o = 0
    W1 = flat[o : o + h * D].reshape(h, D); o += h * D
    b1 = flat[o : o + h]; o += h
    W2 = flat[o : o + d * h].reshape(d, h); o += d * h
    b2 = flat[o : o + d]
    return NetEta(W1.copy(), b1.copy(), W2.copy(), b2.copy())


# -- naive UCB over the full action vector -----------------------------------------------------


def optimize_ucb(gp: GpPosterior, beta: float, space: SearchSpace, cfg: AcqConfig, rng: np.random.Generator):
    """Maximize ``mu(a) + beta * sigma(a)`` of a single GP from actions to reward.

    Returns ``(Soft, value)``.  Cardinality is handled as in :func:`optimize_acq`.
    """
    supports = space.supports(cfg.max_supports)
    if supports is None:
        scores = [_ucb_on_support(gp, beta, space, (j,), cfg, rng)[1] for j in range(space.dag.num_actions)]
        order = np.argsort(-np.asarray(scores), kind="stable")
        supports = [tuple(sorted(order[: space.cardinality].tolist()))]
    best = None
    for sup in supports:
        cand = _ucb_on_support(gp, beta, space, sup, cfg, rng)
        if best is None or cand[1] > best[1]:
            best = cand
    return best


def _ucb_on_support(gp, beta, space, support, cfg, rng):
    A = space.dag.total_action_dim
    idx = space.free_index(support)
    lo, hi = space.action_lo[idx], space.action_hi[idx]
    span = hi - lo

    def to_actions(u):
        a = np.zeros((u.shape[0], A))
        a[:, idx] = lo + u * span
        return a

    def value(u):
        mu, var = gp.predict(to_actions(u))
        return mu[:, 0] + beta * np.sqrt(var[:, 0])

    def value_and_grad(u):
        mu, var, dmu, dvar = gp.predict_with_grad(to_actions(u))
        sd = np.sqrt(var[:, 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            dsd = np.where(sd[:, None] > 0, dvar[:, 0] / (2 * sd[:, None]), 0.0)
        g = (dmu[:, 0] + beta * dsd)[:, idx] * span
        return mu[:, 0] + beta * sd, g

    cand = rng.uniform(0, 1, (cfg.raw_candidates, len(idx)))
    top = np.argsort(-value(cand), kind="stable")[: cfg.restarts]
    u = cand[top]
    if len(idx) and cfg.grad_steps > 0:
        u, _ = ascend(value_and_grad, u, 0.0, 1.0, cfg.grad_steps, cfg.step_size)
    final = value(u)
    k = int(np.argmax(final))
    return Soft(to_actions(u[k : k + 1])[0]), float(final[k])
