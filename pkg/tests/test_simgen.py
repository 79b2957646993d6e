import math

import numpy as np
import pytest

from clusterlasso.simgen import (
    BETA_CATALOG,
    Scenario,
    catalog_scenario,
    correlated_support,
    duo_small_value,
    gen_gaussian_design,
    gen_latent_design,
    make_beta,
    make_sigma,
    make_sigma_block,
    make_sigma_single_block,
    run_scenario,
    screening_curve_from_path,
    true_partition,
)


def test_sigma_block_entries():
    S = make_sigma_block(100, 10, 0.9)
    assert S.shape == (1000, 1000)
    assert S[0, 9] == 0.9 and S[0, 10] == 0.0 and S[5, 5] == 1.0
    assert np.allclose(make_sigma_block(3, 4, 0.0), np.eye(12))
    SC = make_sigma_block(500, 2, 0.9)
    assert SC[0, 1] == 0.9 and SC[1, 2] == 0.0
    with pytest.raises(ValueError):
        make_sigma_block(2, 3, -0.5)
    with pytest.raises(ValueError):
        make_sigma_block(2, 3, 1.0)


def test_sigma_single_block_entry_scan():
    S = make_sigma_single_block(1000, 30, 0.9)
    i, j = np.nonzero(S - np.eye(1000))
    assert i.max() < 30 and j.max() < 30 and len(i) == 30 * 29
    assert np.allclose(make_sigma_single_block(10, 1, 0.5), np.eye(10))


def test_catalog_supports():
    assert BETA_CATALOG["Aa"]["support"] == list(range(20))
    assert BETA_CATALOG["Ab"]["support"][:4] == [0, 1, 10, 11] and BETA_CATALOG["Ab"]["support"][-1] == 91
    assert BETA_CATALOG["Ba"]["support"] == list(range(15)) + list(range(30, 35))
    assert BETA_CATALOG["Bb"]["support"] == list(range(5)) + list(range(30, 45))
    for name in BETA_CATALOG:
        b = make_beta(name, 0)
        assert np.count_nonzero(b) == 20


def test_beta_values_and_flips():
    b = make_beta("Aa", 1)
    assert np.allclose(np.sort(b[:20]), np.arange(1, 21) / 10)
    c = make_beta("Ac", 1)
    assert np.sum(c < 0) == 10 and np.allclose(np.sort(np.abs(c[:20])), np.arange(1, 21) / 10)
    assert np.array_equal(make_beta("Ad", 5), make_beta("Ad", 5))
    with pytest.raises(ValueError):
        make_beta("Zz", 0)


def test_beta_scenario_c():
    b = make_beta("C", 0, p=1000, n=100, sigma=3.0)
    small = (1 / 3) * math.sqrt(math.log(1000) / 100) * 3 / 1.9
    assert small == pytest.approx(duo_small_value(1000, 100, 3.0))
    assert np.allclose(b[0:20:2], 2.0) and np.allclose(b[1:20:2], small)


def test_custom_beta():
    b = make_beta({"support": [3, 7], "values": [1.0, -1.0]}, 0, p=10)
    assert b[3] == 1 and b[7] == -1 and np.count_nonzero(b) == 2
    with pytest.raises(ValueError):
        make_beta({"support": [12]}, 0, p=10)


def test_gaussian_design_covariance():
    X = gen_gaussian_design(np.eye(10), 10_000, 0).data
    S = X.T @ X / 10_000
    assert np.max(np.abs(S - np.eye(10))) <= 4 * np.sqrt(np.log(10) / 10_000)
    assert np.max(np.abs(X.mean(0))) <= 4 / np.sqrt(10_000)
    assert np.array_equal(X, gen_gaussian_design(np.eye(10), 10_000, 0).data)
    with pytest.raises(ValueError):
        gen_gaussian_design(-np.eye(3), 5, 0)


def test_latent_design():
    X, first = gen_latent_design(np.eye(2), [3, 1], [0.0, 0.0], 50, 0)
    A = X.data
    assert np.allclose(A[:, 0], A[:, 1]) and np.allclose(A[:, 0], A[:, 2]) and list(first) == [0, 3]
    X1, _ = gen_latent_design([[2.0]], [1], [0.5], 20, 1)
    assert X1.p == 1
    N, m, tau = 200_000, 4, 0.8
    Xl, _ = gen_latent_design([[1.0]], [m], [tau], N, 2)
    v = Xl.data.mean(1).var()
    expect = 1 + tau**2 * (m - 1) / m**2
    assert abs(v - expect) <= 4 * expect * np.sqrt(2 / N)


def test_correlated_support():
    rng = np.random.default_rng(0)
    u = rng.standard_normal((100, 1))
    X = np.hstack([u + 0.1 * rng.standard_normal((100, 10)), rng.standard_normal((100, 20))])
    s = correlated_support(X, 3, size=10)
    assert len(s) == 10
    if s.max() < 10:
        assert list(s) == list(range(10))


def test_screening_curve():
    sels = [set(), {0}, {0, 5}, {0, 1, 5}, {0, 1, 2, 3, 5, 9}]
    c = screening_curve_from_path(sels, [0, 1, 2])
    assert list(c.sizes) == [0, 1, 2, 3, 6]
    assert list(c.at([0, 1, 2, 3, 5, 6, 10])) == pytest.approx([0, 1 / 3, 1 / 3, 2 / 3, 2 / 3, 1, 1])


def _small(beta_spec, seed=0, sigma=1.0):
    return Scenario("small", {"kind": "block", "num_blocks": 4, "block_size": 5, "rho": 0.8},
                    beta_spec, sigma, 60, 20, seed)


def test_run_scenario_small_and_deterministic():
    sc = _small({"support": [0, 1, 5], "values": [2.0, 1.0, -1.5]})
    r1 = run_scenario(sc, runs=3, clusterer="true", n_lambda=30)
    r2 = run_scenario(sc, runs=3, clusterer="true", n_lambda=30)
    for m in r1.methods:
        assert np.array_equal(r1.mse[m], r2.mse[m])
        assert np.array_equal(r1.curves[m], r2.curves[m])
        assert np.all(r1.mse[m] >= 0)
        c = r1.mean_curve(m)
        assert np.all(np.diff(c) >= 0) and c[-1] <= 1
    assert r1.partition == true_partition(sc.sigma_spec)
    tab = r1.mse_table()
    assert [row["method"] for row in tab] == ["CRL", "CGL", "Lasso"]
    # the dense end of the path fits everything, so TPR reaches 1 at |S| = p
    assert r1.mean_curve("Lasso")[-1] == 1.0


def test_run_scenario_null_model_mse_near_sigma2():
    sc = _small({"support": [0], "values": [0.0]}, sigma=2.0)
    sc.n_test = 2000
    r = run_scenario(sc, methods=("Lasso",), runs=1, clusterer="true", n_lambda=10)
    # at lambda_max the prediction is 0, so the test MSE is the noise variance
    assert r.mse["Lasso"][0] <= np.mean(r.oracle_mse) + 1e-12
    assert abs(r.oracle_mse[0] - 4.0) <= 3 * 4.0 * np.sqrt(2 / 2000)


def test_run_scenario_one_run_sd_zero_and_cv():
    sc = _small({"support": [0, 7], "values": [1.0, 1.0]})
    r = run_scenario(sc, runs=1, clusterer="cancor", n_lambda=15, cv=True, cv_folds=5)
    for row in r.mse_table():
        assert row["mse_sd"] == 0.0 and row["cv_mse_mean"] >= row["mse_mean"] - 1e-12


def test_run_scenario_errors():
    sc = _small({"support": [0], "values": [1.0]})
    with pytest.raises(ValueError):
        run_scenario(sc, runs=0)
    with pytest.raises(ValueError):
        run_scenario(sc, methods=("OSCAR",), runs=1)
    bad = Scenario("bad", {"kind": "identity", "p": 5}, {"support": [0]}, 1.0, 10, 6, 0)
    with pytest.raises(ValueError):
        run_scenario(bad, runs=1)


def test_oracle_mse_near_sigma2_catalog_size():
    sc = catalog_scenario("Aa", seed=3)
    assert sc.s0 == 20 and sc.n_test == 100
    assert Scenario.from_dict(sc.to_dict()) == sc
    with pytest.raises(ValueError):
        Scenario.from_dict({**sc.to_dict(), "bogus": 1})
    with pytest.raises(ValueError):
        catalog_scenario("Q")


def test_make_sigma_kinds():
    assert np.allclose(make_sigma({"kind": "identity", "p": 3}), np.eye(3))
    with pytest.raises(ValueError):
        make_sigma({"kind": "custom", "matrix": [[1, 2], [2, 1]]})
    with pytest.raises(ValueError):
        make_sigma({"kind": "weird"})
    assert true_partition({"kind": "custom", "matrix": [[1.0]]}) is None
