import numpy as np
import pytest
from scipy.stats import ortho_group

from cgcnet import discovery
from cgcnet.graph import CausalGraph


def uniform_sources(rng, n, k):
    return rng.uniform(-np.sqrt(3), np.sqrt(3), size=(n, k))


def best_abs_corr(recovered, sources):
    c = np.corrcoef(recovered.T, sources.T)[: recovered.shape[1], recovered.shape[1]:]
    return np.abs(c).max(axis=0)


def test_fast_ica_unmixes_orthogonal_mixture(rng):
    s = uniform_sources(rng, 5000, 3)
    x = s @ ortho_group.rvs(3, random_state=1).T
    est = discovery.fast_ica(x, seed=0)
    assert est.converged
    rec = (est.unmixing @ discovery.standardize(x).T).T
    assert np.all(best_abs_corr(rec, s) > 0.95)
    np.testing.assert_allclose(np.linalg.norm(est.unmixing, axis=1), 1.0)


def test_fast_ica_identity_mixing_is_near_permutation(rng):
    s = uniform_sources(rng, 5000, 3)
    est = discovery.fast_ica(s, seed=3)
    a = np.abs(est.unmixing)
    assert np.allclose(np.sort(a, axis=1)[:, -1], 1.0, atol=0.05)
    assert sorted(a.argmax(axis=1)) == [0, 1, 2]


def test_fast_ica_constant_column_named(rng):
    x = np.c_[rng.normal(size=100), np.ones(100)]
    with pytest.raises(discovery.RankDeficiencyError, match="b has zero variance"):
        discovery.fast_ica(x, names=["a", "b"])


def test_fast_ica_dependent_column_named(rng):
    x1 = rng.uniform(size=500)
    x = np.c_[x1, 2 * x1, rng.uniform(size=500)]
    with pytest.raises(discovery.RankDeficiencyError, match="x2"):
        discovery.fast_ica(x, names=["x1", "x2", "x3"])


def test_fast_ica_rejects_tiny_input(rng):
    with pytest.raises(ValueError):
        discovery.fast_ica(rng.normal(size=(2, 3)))


def test_fast_ica_reports_nonconvergence(rng):
    est = discovery.fast_ica(rng.normal(size=(300, 3)), max_iter=2, tol=1e-14)
    assert not est.converged


def chain_data(rng, n=5000):
    e = uniform_sources(rng, n, 3)
    x1 = e[:, 0]
    x2 = 1.5 * x1 + e[:, 1]
    y = -2.0 * x2 + e[:, 2]
    return np.c_[x1, x2, y]


def test_lingam_recovers_chain(rng):
    g = discovery.ica_lingam(chain_data(rng), ["x1", "t", "y"], "t", "y", seed=0)
    assert isinstance(g, CausalGraph)
    assert g.edges == {("x1", "t"), ("t", "y")}


def test_lingam_without_refit_recovers_chain(rng):
    g = discovery.ica_lingam(chain_data(rng), ["x1", "t", "y"], "t", "y", seed=0, refit=False)
    assert g.edges == {("x1", "t"), ("t", "y")}


def test_lingam_deterministic(rng):
    data = chain_data(rng)
    a = discovery.ica_lingam(data, ["a", "t", "y"], "t", "y", seed=5)
    b = discovery.ica_lingam(data, ["a", "t", "y"], "t", "y", seed=5)
    assert a == b


def test_lingam_gaussian_data_still_returns_dag(rng):
    x = rng.normal(size=(1000, 4))
    x[:, 3] += x[:, 0]
    out = discovery.ica_lingam(x, ["a", "b", "t", "y"], "t", "y", seed=0)
    if isinstance(out, discovery.DiscoveryFailure):
        assert "converge" in out.reason
    else:
        assert not out.children("y")


def test_lingam_failure_is_a_value(rng):
    out = discovery.ica_lingam(chain_data(rng, 500), ["x1", "t", "y"], "t", "y", max_iter=1, tol=0.0)
    assert isinstance(out, discovery.DiscoveryFailure)


def test_lingam_outcome_is_sink(rng):
    # y causes x3 in the data; the discovered edge is turned around
    e = uniform_sources(rng, 5000, 3)
    x1 = e[:, 0]
    y = 2.0 * x1 + e[:, 1]
    x3 = 1.5 * y + e[:, 2]
    g = discovery.ica_lingam(np.c_[x1, y, x3], ["x1", "y", "x3"], "x1", "y", seed=0)
    assert ("x3", "y") in g.edges and not g.children("y")


def test_lingam_rejects_bad_input(rng):
    with pytest.raises(ValueError):
        discovery.ica_lingam(rng.normal(size=(50, 3)), ["a", "b"], "a", "b")
    bad = rng.normal(size=(50, 3))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        discovery.ica_lingam(bad, ["a", "b", "c"], "a", "b")


def test_greedy_matches_exhaustive_on_exact_triangle(rng):
    k = 5
    b = np.tril(rng.uniform(0.5, 2.0, size=(k, k)), -1)
    p = rng.permutation(k)
    bp = np.empty_like(b)
    bp[np.ix_(p, p)] = b
    exhaustive = discovery.causal_order(bp)
    greedy = discovery.greedy_order(bp * bp)
    for order in (exhaustive, greedy):
        assert np.allclose(np.triu(bp[np.ix_(order, order)], 1), 0.0)


def test_refit_matches_generating_coefficients(rng):
    xs = discovery.standardize(chain_data(rng, 20000))
    b = discovery.refit_along_order(xs, np.array([0, 1, 2]))
    assert abs(b[2, 0]) < 0.03
    assert b[1, 0] > 0.5 and b[2, 1] < -0.5
