import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gp_oracle import naive_posterior
from mcbo.gp import (
    DimMismatch,
    GpDataset,
    Kernel,
    confidence_bounds,
    fit,
    info_gain,
    info_gain_curve,
    kernel_eval,
    posterior_input_grad,
    posterior_mean,
    posterior_var,
)


def one_point(noise_var=0.1):
    return fit(Kernel(), GpDataset(np.zeros((1, 1)), np.ones((1, 1)), noise_var))


def test_kernel_eval_examples():
    k = Kernel(variance=0.8)
    assert kernel_eval(k, ([0.3], [], 0), ([0.3], [], 0)) == pytest.approx(0.8)
    assert kernel_eval(Kernel(), ([0.0], [], 0), ([1.0], [], 0)) == pytest.approx(np.exp(-0.5))
    assert kernel_eval(Kernel(), ([0.0], [], 0), ([0.0], [], 1)) == 0.0
    with pytest.raises(DimMismatch):
        kernel_eval(Kernel(), ([0.0], [], 0), ([0.0, 1.0], [], 0))


def test_kernel_variance_bounds():
    with pytest.raises(ValueError):
        Kernel(variance=1.5)


def test_empty_is_prior():
    gp = fit(Kernel(), GpDataset.empty(2, 2, 0.1))
    np.testing.assert_array_equal(posterior_mean(gp, [0.3], [1.0]), [0, 0])
    np.testing.assert_array_equal(posterior_var(gp, [0.3], [1.0]), [1, 1])
    lo, hi = confidence_bounds(gp, [0.3], [1.0], 2.0)
    np.testing.assert_array_equal(lo, [-2, -2])
    np.testing.assert_array_equal(hi, [2, 2])
    dmu, _ = posterior_input_grad(gp, [0.3], [1.0])
    assert not dmu.any()


def test_one_point_closed_form():
    gp = one_point()
    assert posterior_mean(gp, [0.0], [])[0] == pytest.approx(1 / 1.1, abs=1e-12)
    assert posterior_var(gp, [0.0], [])[0] == pytest.approx(1 - 1 / 1.1, abs=1e-12)
    lo, hi = confidence_bounds(gp, [0.0], [], 1.0)
    s = np.sqrt(1 - 1 / 1.1)
    assert lo[0] == pytest.approx(1 / 1.1 - s) and hi[0] == pytest.approx(1 / 1.1 + s)
    lo, hi = confidence_bounds(gp, [0.0], [], 0.0)
    assert lo[0] == hi[0]


def test_far_query_reverts_to_zero():
    assert abs(posterior_mean(one_point(), [10.0], [])[0]) < 1e-10


def test_interpolation_limit():
    assert posterior_var(one_point(1e-6), [0.0], [])[0] < 1e-4


def test_noise_var_must_be_positive():
    with pytest.raises(ValueError):
        fit(Kernel(), GpDataset(np.zeros((1, 1)), np.ones((1, 1)), 0.0))


def test_dim_mismatch():
    with pytest.raises(DimMismatch):
        one_point().predict(np.zeros((1, 3)))


@pytest.mark.parametrize("seed", range(10))
def test_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    t, D, d = rng.integers(1, 21), rng.integers(1, 4), rng.integers(1, 3)
    k = Kernel(lengthscale=rng.uniform(0.3, 2.0), variance=rng.uniform(0.2, 1.0))
    X, Y = rng.normal(size=(t, D)), rng.normal(size=(t, d))
    nv = rng.uniform(0.01, 1.0)
    Xq = rng.normal(size=(5, D))
    mu, var = fit(k, GpDataset(X, Y, nv)).predict(Xq)
    mu0, var0 = naive_posterior(k, X, Y, nv, Xq)
    np.testing.assert_allclose(mu, mu0, atol=1e-8)
    np.testing.assert_allclose(var, var0, atol=1e-8)


def test_linear_kernel_mean_gradient_constant():
    gp = fit(Kernel("linear"), GpDataset(np.array([[1.0, 2.0]]), np.array([[0.5]]), 0.1))
    g1, _ = posterior_input_grad(gp, [0.0], [0.0])
    g2, _ = posterior_input_grad(gp, [3.0], [-1.0])
    np.testing.assert_allclose(g1, g2)


def test_symmetric_sigma_gradient_zero():
    gp = fit(Kernel(), GpDataset(np.array([[-1.0], [1.0]]), np.array([[0.3], [0.3]]), 0.1))
    _, dsd = posterior_input_grad(gp, [0.0], [])
    assert abs(dsd[0, 0]) < 1e-12


@pytest.mark.parametrize("kind", ["rbf", "linear"])
def test_input_gradients_finite_difference(kind):
    rng = np.random.default_rng(7)
    for _ in range(10):
        D, d = 3, 2
        gp = fit(Kernel(kind, lengthscale=0.8), GpDataset(rng.normal(size=(8, D)), rng.normal(size=(8, d)), 0.05))
        x = rng.normal(size=D)
        dmu, dsd = posterior_input_grad(gp, x[:2], x[2:])
        h = 1e-5
        for j in range(D):
            e = np.zeros(D)
            e[j] = h
            mp, vp = gp.predict((x + e)[None])
            mm, vm = gp.predict((x - e)[None])
            np.testing.assert_allclose((mp - mm)[0] / (2 * h), dmu[:, j], rtol=1e-4, atol=1e-7)
            np.testing.assert_allclose((np.sqrt(vp) - np.sqrt(vm))[0] / (2 * h), dsd[:, j], rtol=1e-4, atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_adding_data_never_increases_variance(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(int(rng.integers(1, 10)), 2))
    data = GpDataset(X, rng.normal(size=(len(X), 1)), 0.1)
    Xq = rng.normal(size=(20, 2))
    before = fit(Kernel(), data).predict(Xq)[1]
    after = fit(Kernel(), data.append(rng.normal(size=(1, 2)), rng.normal(size=(1, 1)))).predict(Xq)[1]
    assert np.all(after <= before + 1e-9)


def test_info_gain_examples():
    assert info_gain([], 1.0) == 0.0
    assert info_gain([[1.0]], 1.0) == pytest.approx(0.5 * np.log(2))
    curve = info_gain_curve([[0.3], [0.0, 2.0], [1.0]], 0.5)
    assert np.all(np.diff(curve) >= 0)


def test_debug_json_roundtrip():
    import json

    dump = json.loads(one_point().to_debug_json())
    assert dump["outputs"] == [[1.0]] and dump["noise_var"] == 0.1
