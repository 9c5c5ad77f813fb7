import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deblora import kmeans
from deblora.errors import InfeasibleConstraintError, InternalError, ValidationError
from deblora.features import FeatureSet

from oracles import brute_force_constrained_kmeans


def test_kmeanspp_exhaustion_is_permutation():
    x = np.random.default_rng(0).standard_normal((7, 3))
    centers = kmeans.kmeanspp_init(x, 7, seed=1)
    assert sorted(map(tuple, centers)) == sorted(map(tuple, x))


def test_kmeanspp_single_and_deterministic():
    x = np.random.default_rng(0).standard_normal((10, 2))
    c1 = kmeans.kmeanspp_init(x, 1, seed=3)
    assert any(np.array_equal(c1[0], row) for row in x)
    np.testing.assert_array_equal(kmeans.kmeanspp_init(x, 4, 9), kmeans.kmeanspp_init(x, 4, 9))


def test_kmeanspp_distinct_with_duplicates():
    x = np.array([[0.0, 0], [0, 0], [0, 0], [1, 1], [2, 2]])
    centers = kmeans.kmeanspp_init(x, 3, seed=0)
    assert len({tuple(c) for c in centers}) == 3
    with pytest.raises(ValidationError):
        kmeans.kmeanspp_init(x, 4, seed=0)


def test_assign_already_feasible():
    x = np.array([[0.0, 0], [0, 1], [10, 0], [10, 1]])
    a, s = kmeans.assign_constrained(x, np.array([[0, 0.5], [10, 0.5]]), 2)
    assert a.tolist() == [0, 0, 1, 1] and s.tolist() == [2, 2]


def test_assign_repair_moves_min_regret_point():
    x = np.array([[0.0, 0], [0, 1], [0, 2], [9, 0]])
    centers = np.array([[0.0, 1], [10, 0]])
    # regrets to center 1 for the three left points, enumerated by hand:
    # (0,0): 100 - 1 = 99, (0,1): 101 - 0 = 101, (0,2): 104 - 1 = 103
    regrets = [((p - centers[1]) ** 2).sum() - ((p - centers[0]) ** 2).sum() for p in x[:3]]
    assert regrets == [99, 101, 103]
    a, s = kmeans.assign_constrained(x, centers, 2)
    assert a.tolist() == [1, 0, 0, 1]
    assert s.tolist() == [2, 2]


def test_assign_infeasible():
    with pytest.raises(InfeasibleConstraintError):
        kmeans.assign_constrained(np.zeros((4, 1)), np.zeros((2, 1)), 3)


def test_update_centers():
    x = np.array([[0.0, 0], [2, 0], [5, 5], [3, 3], [3, 3]])
    c = kmeans.update_centers(x, np.array([0, 0, 1, 2, 2]), 3)
    np.testing.assert_array_equal(c, [[1, 0], [5, 5], [3, 3]])
    with pytest.raises(InternalError):
        kmeans.update_centers(x, np.array([0, 0, 0, 0, 0]), 2)


def test_fit_two_blobs_matches_brute_force():
    x = np.array([[0.0, 0], [0, 1], [10, 0], [10, 1]])
    m = kmeans.fit(x, k=2, rho=1, seed=0)
    best, _ = brute_force_constrained_kmeans(x, 2, m.min_size)
    assert m.inertia == pytest.approx(best) == pytest.approx(1.0)


def test_fit_k1_is_global_mean():
    x = np.random.default_rng(2).standard_normal((20, 3))
    m = kmeans.fit(x, k=1, rho=1)
    np.testing.assert_allclose(m.centers[0], x.mean(axis=0))
    assert m.inertia == pytest.approx(x.var(axis=0).sum() * 20)


def test_fit_duplicated_dataset_same_centers():
    x = np.array([[0.0, 0], [1, 0], [0, 1], [6, 6], [7, 6]])
    xx = np.repeat(x, 2, axis=0)
    # rho=4 keeps the size floor non-binding for both problems, so they share an optimum
    single, dup = kmeans.fit(x, 2, rho=4, seed=0), kmeans.fit(xx, 2, rho=4, seed=0)
    order = lambda c: c[np.lexsort(c.T[::-1])]
    np.testing.assert_allclose(order(single.centers), order(dup.centers))
    # brute force on the deduplicated problem agrees
    best, labels = brute_force_constrained_kmeans(x, 2, single.min_size)
    assert single.inertia == pytest.approx(best)
    assert dup.inertia == pytest.approx(2 * best)
    assert dup.inertia == pytest.approx(brute_force_constrained_kmeans(xx, 2, dup.min_size)[0])


def test_fit_accepts_featureset_and_json_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    fs = FeatureSet(rng.standard_normal((60, 4)), np.zeros(60, int), ["a"])
    m = kmeans.fit(fs, k=5, rho=2, seed=1)
    p = tmp_path / "c.json"
    m.save(p)
    back = kmeans.ClusterModel.load(p)
    np.testing.assert_array_equal(back.centers, m.centers)
    np.testing.assert_array_equal(back.assignment, m.assignment)
    assert back.inertia == m.inertia and back.min_size == m.min_size


def test_fit_normalize_flag():
    x = np.random.default_rng(0).standard_normal((40, 3)) + 5
    m = kmeans.fit(x, 4, rho=2, normalize=True)
    assert np.allclose(np.linalg.norm(m.centers, axis=1) <= 1 + 1e-12, True)
    raw = kmeans.recenter(m, x)
    assert raw.inertia == pytest.approx(kmeans.inertia_of(x, raw.centers, raw.assignment))


def test_min_cluster_size():
    assert kmeans.min_cluster_size(100, 32, 4) == 1
    assert kmeans.min_cluster_size(2136, 32, 4) == 16
    assert kmeans.min_cluster_size(10, 3, 1) == 3


@st.composite
def instances(draw):
    n = draw(st.integers(4, 60))
    k = draw(st.integers(1, min(6, n)))
    rho = draw(st.sampled_from([1.0, 2.0, 4.0]))
    seed = draw(st.integers(0, 2**32 - 1))
    return n, k, rho, seed


@given(instances())
@settings(max_examples=40)
def test_fit_invariants(inst):
    n, k, rho, seed = inst
    x = np.random.default_rng(seed).standard_normal((n, 2))
    m = kmeans.fit(x, k, rho, seed=seed, max_iter=30)
    assert (m.sizes >= m.min_size).all()
    assert m.sizes.sum() == n
    assert m.assignment.max() < k
    np.testing.assert_array_equal(np.bincount(m.assignment, minlength=k), m.sizes)
    assert m.inertia == pytest.approx(kmeans.inertia_of(x, m.centers, m.assignment), rel=1e-6)
    again = kmeans.fit(x, k, rho, seed=seed, max_iter=30)
    np.testing.assert_array_equal(again.centers, m.centers)


@given(instances())
@settings(max_examples=40)
def test_repair_bookkeeping(inst):
    n, k, rho, seed = inst
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    centers = x[rng.choice(n, k, replace=False)]
    min_size = kmeans.min_cluster_size(n, k, rho)
    a, _ = kmeans.assign_constrained(x, centers, min_size)
    nearest = np.argmin(((x[:, None] - centers[None]) ** 2).sum(-1), axis=1)
    moved = np.flatnonzero(a != nearest)
    repair = sum(((x[i] - centers[a[i]]) ** 2).sum() - ((x[i] - centers[nearest[i]]) ** 2).sum() for i in moved)
    constrained = kmeans.inertia_of(x, centers, a)
    unconstrained = kmeans.inertia_of(x, centers, nearest)
    assert constrained <= unconstrained + repair + 1e-9
    assert constrained == pytest.approx(unconstrained + repair)
