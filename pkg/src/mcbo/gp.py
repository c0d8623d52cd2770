"""Exact GP regression for one SCM node with vector-valued output.

The output index is treated as an extra kernel input.  With independent
output coupling ``k((s, l), (s', l')) = [l == l'] * k_base(s, s')``.  The
Gram matrix is assembled over the vectorized index
``(t=1, l=1), (t=1, l=2), ..., (t, d)`` and factorized once; queries for
component ``l`` read the matching rows of the solved system.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize

log = logging.getLogger(__name__)

JITTER_START = 1e-6
JITTER_MAX = 1e-4
_NEG_VAR_TOL = -1e-9


class DimMismatch(ValueError):
    pass


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class _VarianceFloorCounter:
    """Counts queries whose raw posterior variance fell below ``-1e-9``."""

    def __init__(self):
        self.count = 0

    def hit(self, n: int) -> None:
        if n:
            self.count += n
            log.warning("posterior variance below %.0e at %d queries; floored at 0", _NEG_VAR_TOL, n)


negative_variance = _VarianceFloorCounter()


@dataclass(frozen=True)
class Kernel:
    kind: str = "rbf"
    lengthscale: float = 1.0
    variance: float = 1.0
    output_coupling: str = "independent"

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not 0.0 < self.variance <= 1.0:
            raise ValueError("kernel variance must lie in (0, 1] (bounded variance)")
        if self.lengthscale <= 0:
            raise ValueError("lengthscale must be positive")
        if self.output_coupling != "independent":
            raise ValueError("only independent output coupling is supported")

    def base(self, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
        """Base kernel matrix between row sets ``X1`` (n, D) and ``X2`` (t, D)."""
        if self.kind == "rbf":
            sq = (
                np.sum(X1**2, axis=1)[:, None]
                + np.sum(X2**2, axis=1)[None, :]
                - 2.0 * X1 @ X2.T
            )
            np.maximum(sq, 0.0, out=sq)
            return self.variance * np.exp(-0.5 * sq / self.lengthscale**2)
        return self.variance * (X1 @ X2.T)

    def diag(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "rbf":
            return np.full(X.shape[0], self.variance)
        return self.variance * np.sum(X**2, axis=1)


def kernel_eval(k: Kernel, s1, s2) -> float:
    """Kernel on augmented inputs ``s = (z, a, l)``."""
    z1, a1, l1 = s1
    z2, a2, l2 = s2
    x1 = np.concatenate([np.ravel(z1), np.ravel(a1)]).astype(float)
    x2 = np.concatenate([np.ravel(z2), np.ravel(a2)]).astype(float)
    if x1.shape != x2.shape:
        raise DimMismatch(f"input sizes differ: {x1.size} vs {x2.size}")
    if l1 != l2:
        return 0.0
    return float(k.base(x1[None], x2[None])[0, 0])


@dataclass
class GpDataset:
    """Training data for one node: inputs are concatenated ``(z, a)`` rows."""

    inputs: np.ndarray
    outputs: np.ndarray
    noise_var: float

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        if self.outputs.ndim == 1:
            self.outputs = self.outputs[:, None]
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise DimMismatch("inputs and outputs must have the same number of rows")

    @classmethod
    def empty(cls, input_dim: int, output_dim: int, noise_var: float) -> "GpDataset":
        return cls(np.zeros((0, input_dim)), np.zeros((0, output_dim)), noise_var)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.outputs.shape[1]

    def append(self, x_in: np.ndarray, y: np.ndarray) -> "GpDataset":
        x_in = np.atleast_2d(np.asarray(x_in, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return GpDataset(np.vstack([self.inputs, x_in]), np.vstack([self.outputs, y]), self.noise_var)


def vec_gram(kernel: Kernel, X: np.ndarray, d: int) -> np.ndarray:
    """Gram matrix over the vectorized (t, l) index with t outer, l inner."""
    Kb = kernel.base(X, X)
    return np.kron(Kb, np.eye(d))


@dataclass(frozen=True)
class GpPosterior:
    kernel: Kernel
    data: GpDataset
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    # per-component inverse Cholesky factors and alpha blocks, shape (d, t, t) and (d, t);
    # variances use k - |L^-1 k_q|^2, which stays accurate when K is ill-conditioned
    _linv_blocks: np.ndarray = field(default=None, repr=False)
    _alpha_blocks: np.ndarray = field(default=None, repr=False)

    @property
    def input_dim(self) -> int:
        return self.data.input_dim

    @property
    def output_dim(self) -> int:
        return self.data.output_dim

    @property
    def noise_var(self) -> float:
        return self.data.noise_var

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None]
        if X.shape[1] != self.input_dim:
            raise DimMismatch(f"query has {X.shape[1]} inputs, model expects {self.input_dim}")
        return X

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at rows of ``X``; both shaped (n, d)."""
        X = self._check(X)
        n, d = X.shape[0], self.output_dim
        kss = self.kernel.diag(X)
        if len(self.data) == 0:
            return np.zeros((n, d)), np.repeat(kss[:, None], d, axis=1)
        Kq = self.kernel.base(X, self.data.inputs)
        mu = Kq @ self._alpha_blocks.T
        V = Kq[None] @ np.swapaxes(self._linv_blocks, 1, 2)
        var = kss[:, None] - np.sum(V * V, axis=2).T
        return mu, _floor(var)

    def predict_with_grad(self, X: np.ndarray):
        """Mean, variance and their input Jacobians.

        Returns ``mu, var`` of shape (n, d) and ``dmu, dvar`` of shape (n, d, D).
        """
        X = self._check(X)
        n, D = X.shape
        d = self.output_dim
        k = self.kernel
        if k.kind == "rbf":
            kss = np.full(n, k.variance)
            dkss = np.zeros((n, D))
        else:
            kss = k.variance * np.sum(X**2, axis=1)
            dkss = 2.0 * k.variance * X
        if len(self.data) == 0:
            return (
                np.zeros((n, d)),
                np.repeat(kss[:, None], d, axis=1),
                np.zeros((n, d, D)),
                np.repeat(dkss[:, None, :], d, axis=1),
            )
        Xt = self.data.inputs
        Kq = k.base(X, Xt)  # (n, t)
        A = self._alpha_blocks  # (d, t)
        mu = Kq @ A.T
        V = Kq[None] @ np.swapaxes(self._linv_blocks, 1, 2)  # (d, n, t)
        var = kss[:, None] - np.sum(V * V, axis=2).T
        W = V @ self._linv_blocks  # Kq (K + rho^2 I)^-1
        if k.kind == "rbf":
            inv_l2 = 1.0 / k.lengthscale**2
            # dKq[n,t]/dx = Kq[n,t] * (Xt[t] - x[n]) / l^2
            KA = Kq[None, :, :] * A[:, None, :]  # (d, n, t)
            dmu = inv_l2 * (KA @ Xt - KA.sum(-1)[..., None] * X[None])
            KW = Kq[None] * W
            dvar = -2.0 * inv_l2 * (KW @ Xt - KW.sum(-1)[..., None] * X[None])
        else:
            dmu = k.variance * np.broadcast_to((A @ Xt)[:, None, :], (d, n, D))
            dvar = dkss[None] - 2.0 * k.variance * (W @ Xt)
        dmu = np.transpose(dmu, (1, 0, 2))
        dvar = np.transpose(dvar, (1, 0, 2))
        neg = var < 0.0
        var = _floor(var)
        if neg.any():
            dvar = np.where(neg[..., None], 0.0, dvar)
        return mu, var, dmu, dvar

    def to_debug_json(self) -> str:
        return json.dumps(
            {
                "kernel": {
                    "kind": self.kernel.kind,
                    "lengthscale": self.kernel.lengthscale,
                    "variance": self.kernel.variance,
                    "output_coupling": self.kernel.output_coupling,
                },
                "noise_var": self.noise_var,
                "jitter": self.jitter,
                "inputs": self.data.inputs.tolist(),
                "outputs": self.data.outputs.tolist(),
            }
        )


def _floor(var: np.ndarray) -> np.ndarray:
    negative_variance.hit(int(np.count_nonzero(var < _NEG_VAR_TOL)))
    return np.maximum(var, 0.0)


def fit(kernel: Kernel, data: GpDataset) -> GpPosterior:
    """Factorize ``K_t + rho^2 I`` over the vectorized index and cache the solve."""
    t, d = len(data), data.output_dim
    if data.noise_var <= 0:
        raise ValueError("noise_var must be positive; use 1e-6 for noiseless nodes")
    if t == 0:
        return GpPosterior(
            kernel, data, np.zeros((0, 0)), np.zeros(0), 0.0, np.zeros((d, 0, 0)), np.zeros((d, 0))
        )
    K = vec_gram(kernel, data.inputs, d) + data.noise_var * np.eye(t * d)
    y = data.outputs.reshape(-1)  # row-major: (t, l) with l fastest
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(t * d))
            break
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * (1 + 1e-9):
                raise NotPositiveDefinite(f"Cholesky failed with jitter up to {JITTER_MAX:g}")
    alpha = scipy.linalg.cho_solve((L, True), y)
    # the interleaved Gram is block diagonal per component, so L[l::d, l::d] is that block's factor
    linv_blocks = np.stack(
        [scipy.linalg.solve_triangular(L[l::d, l::d], np.eye(t), lower=True) for l in range(d)]
    )
    alpha_blocks = np.stack([alpha[l::d] for l in range(d)])
    return GpPosterior(kernel, data, L, alpha, jitter, linv_blocks, alpha_blocks)


def posterior_mean(gp: GpPosterior, z, a) -> np.ndarray:
    return gp.predict(_query(z, a))[0][0]


def posterior_var(gp: GpPosterior, z, a) -> np.ndarray:
    return gp.predict(_query(z, a))[1][0]


def confidence_bounds(gp: GpPosterior, z, a, beta: float) -> tuple[np.ndarray, np.ndarray]:
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    mu, var = gp.predict(_query(z, a))
    width = beta * np.sqrt(var[0])
    return mu[0] - width, mu[0] + width


def posterior_input_grad(gp: GpPosterior, z, a) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians ``d mu / d(z, a)`` and ``d sigma / d(z, a)``, each (d, D)."""
    _, var, dmu, dvar = gp.predict_with_grad(_query(z, a))
    sd = np.sqrt(var[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        dsd = np.where(sd[:, None] > 0, dvar[0] / (2.0 * sd[:, None]), 0.0)
    return dmu[0], dsd


def _query(z, a) -> np.ndarray:
    return np.concatenate([np.ravel(np.asarray(z, float)), np.ravel(np.asarray(a, float))])[None]


def info_gain(gp_trace, noise_var: float) -> float:
    """Realized information ``1/2 sum_t sum_l ln(1 + sigma^2_{t-1} / rho^2)``."""
    return float(info_gain_curve(gp_trace, noise_var)[-1]) if len(gp_trace) else 0.0


def info_gain_curve(gp_trace, noise_var: float) -> np.ndarray:
    """Running sums of :func:`info_gain` over the trace."""
    if len(gp_trace) == 0:
        return np.zeros(0)
    inc = [0.5 * np.sum(np.log1p(np.asarray(v, float) / noise_var)) for v in gp_trace]
    return np.cumsum(inc)


def fit_hyperparameters(kernel: Kernel, data: GpDataset, bounds=(0.05, 20.0)) -> Kernel:
    """Maximize the log marginal likelihood over the lengthscale (variance fixed).

    Off by default; tasks use declared lengthscales.
    """
    if len(data) < 2 or kernel.kind != "rbf":
        return kernel

    def nll(log_ls):
        k = replace(kernel, lengthscale=float(np.exp(log_ls[0])))
        try:
            gp = fit(k, data)
        except NotPositiveDefinite:
            return 1e10
        y = data.outputs.reshape(-1)
        return 0.5 * y @ gp.alpha + np.sum(np.log(np.diag(gp.chol)))

    res = scipy.optimize.minimize(
        nll, [np.log(kernel.lengthscale)], bounds=[tuple(np.log(bounds))], method="L-BFGS-B"
    )
    return replace(kernel, lengthscale=float(np.exp(res.x[0])))
