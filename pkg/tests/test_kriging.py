import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import full_gp_predict
from spatial_sir.exceptions import InvalidArgumentError
from spatial_sir.kriging import NearestNeighborKriging, krige_scalar, matern, ordinary_kriging_weights


def test_matern_values():
    assert matern(0.0, 0.3) == 1.0
    assert matern(1e6, 0.3) == pytest.approx(0.0, abs=1e-300)
    u = np.sqrt(5)
    assert matern(0.3, 0.3) == pytest.approx((1 + u + 5 / 3) * np.exp(-u), rel=1e-14)
    assert matern(0.3, 0.3) == pytest.approx(0.52399, abs=5e-6)
    # the general Bessel form agrees with the closed forms
    d = np.linspace(0.01, 2, 7)
    for kappa in (0.5, 1.5, 2.5):
        np.testing.assert_allclose(matern(d, 0.4, kappa + 1e-9), matern(d, 0.4, kappa), rtol=1e-6)
    with pytest.raises(InvalidArgumentError):
        matern(1.0, 0.0)


def test_exact_at_design_point_and_constant_field():
    rng = np.random.default_rng(0)
    design = rng.uniform(size=(30, 2))
    values = rng.normal(size=30)
    for k in (0, 7, 29):
        assert krige_scalar(values, design, design[k], 0.3, 10) == pytest.approx(values[k], abs=1e-8)
    const = np.full(30, 4.2)
    assert krige_scalar(const, design, [0.5, 0.5], 0.3, 10) == pytest.approx(4.2, abs=1e-10)
    with pytest.raises(InvalidArgumentError):
        krige_scalar(values, design, [0.5, 0.5], 0.3, 31)


def test_local_kriging_beats_nearest_neighbor_and_matches_full_gp():
    x = np.linspace(0, 1, 50)
    f = np.sin(6 * x) + 0.5 * x ** 2
    mids = 0.5 * (x[1:] + x[:-1])
    truth = np.sin(6 * mids) + 0.5 * mids ** 2
    zeta = 0.2
    pred = np.array([krige_scalar(f, x[:, None], [m], zeta, 10) for m in mids])
    nearest = f[np.argmin(np.abs(x[None, :] - mids[:, None]), axis=1)]
    assert np.max(np.abs(pred - truth)) < np.max(np.abs(nearest - truth))
    # with every design point as a neighbor the local predictor is the full GP
    full = np.array([krige_scalar(f, x[:, None], [m], zeta, 50) for m in mids[::7]])
    oracle = np.array([full_gp_predict(x, f, m, zeta) for m in mids[::7]])
    np.testing.assert_allclose(full, oracle, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_weights_sum_to_one_and_match_scalar_predictor(seed, n):
    rng = np.random.default_rng(seed)
    nb = rng.uniform(size=(n, 3))
    target = rng.uniform(size=3)
    w = ordinary_kriging_weights(nb, target, 0.5)
    assert w.sum() == pytest.approx(1.0, abs=1e-8)
    vals = rng.normal(size=n)
    assert w @ vals == pytest.approx(krige_scalar(vals, nb, target, 0.5, n), abs=1e-7)


def test_duplicate_design_points_fall_back_to_jitter():
    nb = np.array([[0.0], [0.0], [1.0]])
    w = ordinary_kriging_weights(nb, np.array([0.4]), 0.5)
    assert w.sum() == pytest.approx(1.0, abs=1e-6)


def test_estimator_api():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(40, 2))
    Y = np.column_stack([X.sum(axis=1), X[:, 0] - X[:, 1]])
    est = NearestNeighborKriging(n_neighbors=8, length_scale=0.4)
    assert est.get_params() == {"n_neighbors": 8, "length_scale": 0.4, "smoothness": 2.5}
    est.fit(X, Y)
    np.testing.assert_allclose(est.predict(X[:5]), Y[:5], atol=1e-10)
    target = np.array([0.5, 0.5])
    pred = est.predict(target[None, :])[0]
    for j in range(2):
        assert pred[j] == pytest.approx(krige_scalar(Y[:, j], X, target, 0.4, 8), abs=1e-12)
    with pytest.raises(InvalidArgumentError):
        NearestNeighborKriging(length_scale=-1).fit(X, Y)
