import numpy as np
import pytest

from shiftrec import CoordinateError, PatternError, SparseTensor
from shiftrec.data import consensus_instance
from shiftrec.recsys import (
    ConsensusPattern,
    Recommender,
    fairness_probe,
    pick_probe_user,
    recommend,
    top_n,
    verify_consensus,
)


def test_recommend_known_and_imputed(three_known):
    r = Recommender.fit(three_known)
    assert recommend(r, (1, 2)) == 2.0
    assert abs(recommend(r, (1, 1)) - 1.0) < 1e-8
    with pytest.raises(CoordinateError):
        recommend(r, (3, 1))


def test_recommend_uc():
    mask = np.ones((2, 2), bool)
    mask[0, 0] = False
    t = SparseTensor.from_dense(np.outer([1.0, 2.0], [3.0, 4.0]), mask)
    assert abs(recommend(Recommender.fit(t, "uc"), (1, 1)) - 3.0) < 1e-8


def test_top_n_all_rated():
    r = Recommender.fit(SparseTensor.from_dense(np.arange(6.0).reshape(2, 3)))
    assert top_n(r, 1, 3).items == ()


def test_top_n_ranks_by_imputation():
    # user 2 fixes column levels; user 1 rated items 1, 2 only
    full = np.array([[3.0, 3.0, 0.0, 0.0], [3.0, 3.0, 4.0, 2.0]])
    mask = np.array([[True, True, False, False], [True, True, True, True]])
    r = Recommender.fit(SparseTensor.from_dense(full, mask))
    assert abs(recommend(r, (1, 3)) - 4.0) < 1e-8
    assert abs(recommend(r, (1, 4)) - 2.0) < 1e-8
    assert top_n(r, 1, 1).items == (3,)
    assert top_n(r, 1, 5).items == (3, 4)


def test_top_n_tie_break():
    full = np.array([[1.0, 0.0, 0.0], [1.0, 2.0, 2.0]])
    mask = np.array([[True, False, False], [True, True, True]])
    r = Recommender.fit(SparseTensor.from_dense(full, mask))
    assert top_n(r, 1, 2).items == (2, 3)


def test_top_n_bad_n(three_known):
    with pytest.raises(ValueError):
        top_n(Recommender.fit(three_known), 1, 0)


@pytest.mark.parametrize("shape,axis", [((12, 8), 2), ((12, 8), 1), ((4, 3, 3), 3), ((4, 5, 3), 1)])
def test_consensus(shape, axis):
    for seed in range(5):
        t, gamma = consensus_instance(shape, D=2, axis=axis, seed=seed)
        pat = ConsensusPattern.from_tensor(t, gamma, axis=axis)
        chk = verify_consensus(Recommender.fit(t), pat)
        assert chk.ok, chk.violations
        assert chk.n_checked == pat.sigma_bar.shape[0]


def test_consensus_rejects_malformed():
    t, gamma = consensus_instance((6, 5), D=2, seed=1)
    vals = t.to_dense()
    mask = t.known_mask()
    g0, g1 = gamma[0] - 1, gamma[1] - 1
    # tie on the common set
    j = np.flatnonzero(mask[:, g0])[0]
    tied = vals.copy()
    tied[j, g1] = tied[j, g0]
    with pytest.raises(PatternError):
        ConsensusPattern.from_tensor(SparseTensor.from_dense(tied, mask), gamma)
    # unequal known sets
    m2 = mask.copy()
    m2[j, g1] = False
    with pytest.raises(PatternError):
        ConsensusPattern.from_tensor(SparseTensor.from_dense(vals, m2), gamma)


def _ratings(seed, m=60, n=40):
    rng = np.random.default_rng(seed)
    vals = np.clip(np.round(rng.normal(3.0, 1.0, size=(m, n))), 1, 5)
    return SparseTensor.from_dense(vals, rng.random((m, n)) < 0.3)


def test_fairness_sc():
    t = _ratings(0)
    user = pick_probe_user(t, 5.0)
    rep = fairness_probe(t, user, delta=1.0, Ns=range(1, 26))
    assert rep.ok
    assert rep.max_other_deviation <= 1e-9
    assert rep.shifted_user_deviation <= 1e-9  # own imputations moved by exactly delta
    lines = rep.to_csv().strip().splitlines()
    assert lines[0] == "N,changed_user_count"
    assert len(lines) == 26 and all(l.endswith(",0") for l in lines[1:])


def test_fairness_zero_delta():
    rep = fairness_probe(_ratings(1), 1, delta=0.0, Ns=[1, 5])
    assert rep.ok and rep.max_other_deviation == 0.0


def test_fairness_user_without_ratings():
    t = SparseTensor((3, 3), [(1, 1), (2, 2)], [1.0, 2.0])
    with pytest.raises(ValueError):
        fairness_probe(t, 3)


def test_fairness_uc_runs():
    rep = fairness_probe(_ratings(2), 1, delta=1.0, Ns=[1, 10], method="uc")
    assert rep.method == "uc" and set(rep.changed) == {1, 10}


def test_top_n_deterministic_across_orders():
    from shiftrec.completion import random_orders

    t = _ratings(4, 20, 15)
    lists = []
    for order in random_orders(t.shape, 1, 3, seed=2):
        r = Recommender.fit(t, order=order)
        lists.append([top_n(r, u, 5).items for u in range(1, 21)])
    assert lists[0] == lists[1] == lists[2]
