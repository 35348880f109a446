import numpy as np
import pytest
from _trees import random_tree, shapley_oracle
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from driftscope.errors import EmptyBackground, EmptyDataset, UnlabeledDataset, ValidationError
from driftscope.rashomon import (
    BootstrapSet,
    DecisionTree,
    GreedyTreeClassifier,
    ImportanceVector,
    RashomonEnsemble,
    RashomonImportance,
    build_ensemble,
    fit_greedy_tree,
    gifim,
    lfim_tree_shapley,
    lifim,
    tree_shap_enumeration,
    tree_shap_paths,
    write_importance_csv,
)


def stump(j, m, low=(3.0, 1.0), high=(1.0, 3.0)):
    return DecisionTree.from_dict({
        "n_features": m,
        "root": {"n0": 4, "n1": 4, "feature": j,
                 "left": {"n0": low[0], "n1": low[1]}, "right": {"n0": high[0], "n1": high[1]}},
    })


def root_only(m, n1=2.0):
    return DecisionTree.from_dict({"n_features": m, "root": {"n0": 3.0, "n1": n1}})


def ensemble_of(*groups):
    bss = [BootstrapSet(b, np.empty(0, int), 0.0, list(g), [0.0] * len(g), len(g)) for b, g in enumerate(groups)]
    return RashomonEnsemble(bss, 0.0, 0)


# --------------------------------------------------------------------- trees


def test_pure_labels_give_a_root_only_tree(rng):
    X = rng.integers(0, 2, (20, 3)).astype(float)
    t = fit_greedy_tree(X, np.ones(20), depth=3)
    assert t.n_leaves == 1 and t.predict_proba1(X).tolist() == [1.0] * 20


def test_xor_is_solved_at_depth_two():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 5, dtype=float)
    y = np.logical_xor(X[:, 0], X[:, 1]).astype(float)
    t = fit_greedy_tree(X, y, depth=2, leaf_penalty=0.0)
    assert np.mean(t.predict(X) == y) == 1.0
    assert t.n_leaves == 4


@given(st.integers(0, 2**32 - 1), st.floats(0.5, 5.0))
def test_large_leaf_penalty_gives_root_only(seed, lam):
    r = np.random.default_rng(seed)
    X = r.integers(0, 2, (30, 4)).astype(float)
    y = r.integers(0, 2, 30).astype(float)
    assert fit_greedy_tree(X, y, depth=3, leaf_penalty=lam, seed=seed).n_leaves == 1


@given(st.integers(0, 2**32 - 1))
def test_tree_invariants(seed):
    r = np.random.default_rng(seed)
    X = r.integers(0, 2, (40, 5)).astype(float)
    y = r.integers(0, 2, 40).astype(float)
    t = fit_greedy_tree(X, y, depth=4, leaf_penalty=0.0, seed=seed, feature_subsample=0.6)
    for _, path in t.leaf_paths():
        feats = [f for f, _ in path]
        assert len(feats) == len(set(feats))
    assert t.leaf_fractions.sum() == pytest.approx(1.0, abs=1e-12)
    assert t.depth <= 4


def test_tree_needs_labels():
    with pytest.raises(UnlabeledDataset):
        fit_greedy_tree(np.zeros((3, 2)), None)


def test_greedy_tree_classifier_api(rng):
    X = rng.integers(0, 2, (30, 3)).astype(float)
    y = X[:, 1]
    clf = clone(GreedyTreeClassifier(max_depth=2)).fit(X, y)
    assert clf.score(X, y) == 1.0
    assert clf.predict_proba(X).shape == (30, 2)


def test_tree_serialisation_round_trip(rng):
    t = random_tree(rng, 5, 3)
    back = DecisionTree.from_dict(t.to_dict())
    X = rng.integers(0, 2, (20, 5)).astype(float)
    np.testing.assert_array_equal(back.predict_proba1(X), t.predict_proba1(X))
    assert back.signature() == t.signature()


# ------------------------------------------------------------------ ensembles


@pytest.fixture
def binary_task(rng):
    X = rng.integers(0, 2, (80, 5)).astype(float)
    y = np.where(rng.random(80) < 0.15, 1 - X[:, 0], X[:, 0])
    return X, y


def test_large_epsilon_admits_every_candidate(binary_task):
    ens = build_ensemble(*binary_task, n_bootstraps=3, epsilon=10.0, candidates_per_bootstrap=4)
    assert [len(b.members) for b in ens.bootstraps] == [4, 4, 4]


def test_zero_epsilon_keeps_only_the_best(binary_task):
    X, y = binary_task
    ens = build_ensemble(X, y, n_bootstraps=4, epsilon=0.0, candidates_per_bootstrap=6)
    for bs in ens.bootstraps:
        assert len(bs.members) >= 1
        assert all(loss <= bs.best_loss + 1e-12 for loss in bs.member_losses)
        for t, loss in zip(bs.members, bs.member_losses):
            assert t.regularized_loss(X[bs.rows], y[bs.rows]) == pytest.approx(loss)


def test_bootstraps_differ_across_seeds():
    X = np.arange(10.0)[:, None] % 2
    y = X[:, 0]
    same = 0
    for s in range(100):
        ens = build_ensemble(X, y, n_bootstraps=2, candidates_per_bootstrap=1, seed=s)
        same += np.array_equal(ens.bootstraps[0].rows, ens.bootstraps[1].rows)
    assert same == 0


def test_ensemble_json_round_trip(binary_task, tmp_path):
    ens = build_ensemble(*binary_task, n_bootstraps=2, candidates_per_bootstrap=3)
    ens.save(tmp_path / "ens.json")
    import json

    back = RashomonEnsemble.from_dict(json.loads((tmp_path / "ens.json").read_text()))
    X = binary_task[0]
    np.testing.assert_array_equal(lifim(back, X[:5], X), lifim(ens, X[:5], X))


# ------------------------------------------------------------------- Shapley


def test_root_only_tree_has_zero_attribution(rng):
    bg = rng.integers(0, 2, (10, 4)).astype(float)
    assert np.all(lfim_tree_shapley(root_only(4), bg[0], bg) == 0)


def test_stump_puts_all_mass_on_its_feature(rng):
    bg = rng.integers(0, 2, (10, 4)).astype(float)
    for method in ("path", "enumeration"):
        phi = lfim_tree_shapley(stump(2, 4), np.array([0, 1, 1, 0.0]), bg, method)
        assert phi[2] != 0
        assert np.all(phi[[0, 1, 3]] == 0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(0, 4))
def test_path_algorithm_matches_brute_force(seed, m, depth):
    r = np.random.default_rng(seed)
    t = random_tree(r, m, depth)
    bg = r.integers(0, 2, (int(r.integers(1, 8)), m)).astype(float)
    X = r.integers(0, 2, (3, m)).astype(float)
    fast = tree_shap_paths(t, X, bg)
    enum = tree_shap_enumeration(t, X, bg)
    for x, row_fast, row_enum in zip(X, fast, enum):
        oracle = shapley_oracle(t.predict_proba1, x, bg)
        np.testing.assert_allclose(row_fast, oracle, atol=1e-9, rtol=0)
        np.testing.assert_allclose(row_enum, oracle, atol=1e-9, rtol=0)
        # efficiency
        base = t.predict_proba1(bg).mean()
        assert abs(row_fast.sum() - (t.predict_proba1(x[None])[0] - base)) <= 1e-9
        # dummy features
        unused = [j for j in range(m) if j not in t.used_features()]
        assert np.all(row_enum[unused] == 0)
        assert np.all(np.abs(row_fast[unused]) <= 1e-9)


def test_depth_two_tree_over_three_features(rng):
    t = DecisionTree.from_dict({"n_features": 3, "root": {
        "n0": 1, "n1": 1, "feature": 0,
        "left": {"n0": 1, "n1": 1, "feature": 2, "left": {"n0": 5, "n1": 1}, "right": {"n0": 1, "n1": 2}},
        "right": {"n0": 1, "n1": 1, "feature": 1, "left": {"n0": 0, "n1": 4}, "right": {"n0": 3, "n1": 3}},
    }})
    bg = np.array([[0, 0, 0], [1, 1, 0], [0, 1, 1], [1, 0, 1]], dtype=float)
    for x in bg:
        np.testing.assert_allclose(lfim_tree_shapley(t, x, bg, "path"), shapley_oracle(t.predict_proba1, x, bg),
                                   atol=1e-12)


def test_symmetric_features_get_equal_attribution():
    # output is 1 only when both features are 1: the two features play identical roles
    t = DecisionTree.from_dict({"n_features": 2, "root": {
        "n0": 1, "n1": 1, "feature": 0,
        "left": {"n0": 1, "n1": 0},
        "right": {"n0": 1, "n1": 1, "feature": 1, "left": {"n0": 1, "n1": 0}, "right": {"n0": 0, "n1": 1}},
    }})
    bg = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    phi = lfim_tree_shapley(t, np.array([1.0, 1.0]), bg)
    assert phi[0] == pytest.approx(phi[1], abs=1e-12)


def test_empty_background_and_unknown_method():
    with pytest.raises(EmptyBackground):
        lfim_tree_shapley(stump(0, 2), np.zeros(2), np.zeros((0, 2)))
    with pytest.raises(ValidationError):
        lfim_tree_shapley(stump(0, 2), np.zeros(2), np.zeros((1, 2)), "sampling")


# ------------------------------------------------------------- LiFIM / GiFIM


def test_identical_trees_reproduce_the_single_tree(rng):
    bg = rng.integers(0, 2, (8, 3)).astype(float)
    t = stump(1, 3)
    ens = ensemble_of([t, t], [t])
    np.testing.assert_allclose(lifim(ens, bg, bg), lfim_tree_shapley(t, bg, bg), atol=1e-15)


def test_two_bootstraps_average_their_attributions():
    bg = np.array([[0.0, 0.0]])
    x = np.array([1.0, 1.0])
    a, b = stump(0, 2), stump(1, 2)
    phi_a = lfim_tree_shapley(a, x, bg)
    phi_b = lfim_tree_shapley(b, x, bg)
    # normalise so the two trees attribute (1, 0) and (0, 1)
    assert phi_a[1] == 0 and phi_b[0] == 0 and phi_a[0] == phi_b[1]
    got = lifim(ensemble_of([a], [b]), x, bg) / phi_a[0]
    np.testing.assert_allclose(got, [0.5, 0.5])


def test_unequal_rashomon_sets_weight_members_by_set_size(rng):
    bg = rng.integers(0, 2, (6, 3)).astype(float)
    x = np.array([1.0, 0.0, 1.0])
    t1, t2, t3 = stump(0, 3), stump(1, 3, high=(0.0, 5.0)), stump(2, 3, low=(5.0, 0.0))
    phis = [lfim_tree_shapley(t, x, bg) for t in (t1, t2, t3)]
    expected = 0.25 * phis[0] + 0.25 * phis[1] + 0.5 * phis[2]
    np.testing.assert_allclose(lifim(ensemble_of([t1, t2], [t3]), x, bg), expected, atol=1e-15)


def test_gifim_examples(rng, binary_task):
    X, y = binary_task
    ens = build_ensemble(X, y, n_bootstraps=2, candidates_per_bootstrap=2)
    np.testing.assert_allclose(gifim(ens, X[:1], X), lifim(ens, X[0], X))
    np.testing.assert_allclose(gifim(ens, np.vstack([X, X]), X), gifim(ens, X, X), atol=1e-15)
    with pytest.raises(EmptyDataset):
        gifim(ens, np.zeros((0, 5)), X)


def test_two_rows_average_to_their_mean():
    bg = np.array([[0.0, 0.0]])
    a, b = stump(0, 2), stump(1, 2)
    ens = ensemble_of([a], [b])
    rows = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(gifim(ens, rows, bg), lifim(ens, rows, bg).mean(axis=0))


# ------------------------------------------------------------------ estimator


def test_importance_is_bit_reproducible(binary_task):
    X, y = binary_task
    a = RashomonImportance(n_bootstraps=3, seed=4).fit(X, y).global_importance()
    b = RashomonImportance(n_bootstraps=3, seed=4).fit(X, y).global_importance()
    assert a.tobytes() == b.tobytes()


def test_importance_ranks_the_label_feature_first(binary_task):
    X, y = binary_task
    g = RashomonImportance(n_bootstraps=4, attribution="absolute").fit(X, y).global_importance()
    assert np.argmax(g) == 0
    assert np.all(g >= 0)


def test_importance_estimator_contract(binary_task):
    X, y = binary_task
    est = clone(RashomonImportance(n_bootstraps=2, background_size=16))
    phi = est.fit(X, y).transform(X[:7])
    assert phi.shape == (7, 5)
    assert est.background_.shape == (16, 5)
    with pytest.raises(ValidationError):
        est.set_params(attribution="squared").transform(X[:1])


def test_importance_csv(tmp_path):
    v = ImportanceVector(np.array([0.25, -0.5]), "gifim", "d", ("a", "b"))
    write_importance_csv([v], tmp_path / "imp.csv")
    assert (tmp_path / "imp.csv").read_text().splitlines() == [
        "feature,value,provenance,subject", "a,0.25,gifim,d", "b,-0.5,gifim,d"]
    assert v.to_dict()["convention"] == "interventional"
