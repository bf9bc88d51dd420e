"""Acceptance criteria, one test per criterion.

Every test records a single ``ACCEPTANCE <n> PASS|FAIL|SKIP`` line, shown in
the terminal summary. Tolerances and runtime limits are pinned below.

MovieLens files are looked up under ``$SHIFTREC_DATA`` (or ``./data``):
``ml-100k/u.data`` and ``ml-1m/ratings.dat``. Parts that need them are
skipped when absent; criterion 7 then runs its synthetic analogue.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from shiftrec import (
    ConvergenceConfig,
    ShiftVector,
    apply_shift,
    catalog,
    check_support,
    csa,
    residual,
    scca,
)
from shiftrec.canonical import null_shift_deviation
from shiftrec.completion import expand_shifts, random_orders
from shiftrec.data import (
    SplitSpec,
    SyntheticSpec,
    consensus_instance,
    generate,
    generate_full_support,
    parse_movielens,
    split,
)
from shiftrec.harness import ExperimentConfig, evaluate
from shiftrec.recsys import (
    ConsensusPattern,
    Recommender,
    fairness_probe,
    pick_probe_user,
    verify_consensus,
)

from .conftest import ACCEPTANCE_LINES

# pinned tolerances
TOL_RECOVERY = 1e-8
TOL_SHIFT = 1e-8
TOL_UNIQUE = 1e-8
TOL_NULL = 1e-8
TOL_FAIR = 1e-9
TOL_RESIDUAL = 1e-7
GAP_UPPER = 0.005
GAP_RANGE = (-0.06, 0.005)
MAE_DELTA, MAE_TOL = -0.03, 0.03
ML100K_SPARSITY, SPARSITY_TOL = 0.937, 0.0005

# pinned runtime limits, seconds
LIMIT_1, LIMIT_2, LIMIT_3, LIMIT_4 = 30, 60, 60, 30
LIMIT_5_ML100K = 120
LIMIT_7 = 600

DATA = Path(os.environ.get("SHIFTREC_DATA", Path(__file__).resolve().parents[1] / "data"))
ML100K = DATA / "ml-100k" / "u.data"
ML1M = DATA / "ml-1m" / "ratings.dat"

# canonical residuals of every converged run made in this module (criterion 6)
_RESIDUALS: list[float] = []


def record(n, passed, text):
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    ACCEPTANCE_LINES.append(f"ACCEPTANCE {n} {status} {text}")


def _complete(t, k, **kw):
    """scca that also logs the canonical residual of the converged run."""
    res = scca(t, k, **kw)
    canonical = apply_shift(t, res.shifts, "forward")
    _RESIDUALS.append(residual(canonical, k))
    return res


def _full_support_instances(n, seed, noise=0.0, mixed_k=False):
    rng = np.random.default_rng(seed)
    for i in range(n):
        if i % 2 == 0:
            shape = (int(rng.integers(5, 51)), int(rng.integers(5, 81)))
            frac = float(rng.uniform(0.6, 0.9))
        else:
            shape = tuple(int(x) for x in rng.integers(4, 11, size=3))
            frac = float(rng.uniform(0.75, 0.95))
        d = len(shape)
        k = d - 1
        if mixed_k and d == 3 and i % 4 == 1:
            k = 1
        spec = SyntheticSpec(shape, noise=noise, known_fraction=frac, k=d - 1)
        yield generate_full_support(spec, seed=int(rng.integers(2**31))), k


def test_1_exact_additive_recovery():
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for inst, k in _full_support_instances(200, seed=101):
        res = _complete(inst.masked, k)
        unk = ~inst.masked.known_mask()
        if unk.any():
            worst = max(worst, float(np.max(np.abs(res.dense()[unk] - inst.truth[unk]))))
        n += 1
    elapsed = time.perf_counter() - t0
    ok = n == 200 and worst <= TOL_RECOVERY and elapsed < LIMIT_1
    record(1, ok, f"exact additive recovery: {n} instances, max |error| {worst:.2e} "
                  f"(tol {TOL_RECOVERY:g}), {elapsed:.1f}s (limit {LIMIT_1}s)")
    assert ok


def test_2_shift_consistency():
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    rng = np.random.default_rng(202)
    for inst, k in _full_support_instances(100, seed=202, noise=1.0, mixed_k=True):
        t = inst.masked
        base = _complete(t, k).dense()
        for _ in range(5):
            T = ShiftVector.random(t.shape, k, rng, scale=float(rng.uniform(0.1, 10.0)))
            rhs = _complete(apply_shift(t, T, "forward"), k).dense()
            worst = max(worst, float(np.max(np.abs(base - expand_shifts(T) - rhs))))
        n += 1
    elapsed = time.perf_counter() - t0
    ok = n == 100 and worst < TOL_SHIFT and elapsed < LIMIT_2
    record(2, ok, f"shift consistency: {n} instances x 5 shifts, max deviation {worst:.2e} "
                  f"(tol {TOL_SHIFT:g}), {elapsed:.1f}s (limit {LIMIT_2}s)")
    assert ok


def test_3_uniqueness():
    t0 = time.perf_counter()
    dev = null = 0.0
    n = guaranteed = 0
    for inst, k in _full_support_instances(50, seed=303, noise=1.0):
        t = inst.masked
        guaranteed += check_support(t, certificates=False).fully_supported
        runs = [_complete(t, k, order=o) for o in random_orders(t.shape, k, 3, seed=n)]
        dense = [r.dense() for r in runs]
        for a in range(3):
            for b in range(a + 1, 3):
                dev = max(dev, float(np.max(np.abs(dense[a] - dense[b]))))
                null = max(null, null_shift_deviation(t, runs[a].shifts, runs[b].shifts))
        n += 1
    elapsed = time.perf_counter() - t0
    ok = n == 50 and guaranteed == 50 and dev < TOL_UNIQUE and null <= TOL_NULL and elapsed < LIMIT_3
    record(3, ok, f"uniqueness: {n} full-support instances x 3 orders, max deviation {dev:.2e}, "
                  f"null-shift residue {null:.2e} (tol {TOL_UNIQUE:g}), {elapsed:.1f}s (limit {LIMIT_3}s)")
    assert ok


def test_4_consensus_ordering():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    n = violations = checked = 0
    while n < 100:
        if n % 2 == 0:
            shape = (int(rng.integers(4, 30)), int(rng.integers(4, 30)))
        else:
            shape = tuple(int(x) for x in rng.integers(3, 7, size=3))
        axis = int(rng.integers(1, len(shape) + 1))
        D = int(rng.integers(2, min(4, shape[axis - 1]) + 1))
        t, gamma = consensus_instance(shape, D=D, axis=axis, seed=int(rng.integers(2**31)),
                                      known_fraction=float(rng.uniform(0.3, 0.8)))
        pat = ConsensusPattern.from_tensor(t, gamma, axis=axis)
        rec = Recommender.fit(t)
        _RESIDUALS.append(residual(apply_shift(t, rec.completed.shifts, "forward"), t.ndim - 1))
        chk = verify_consensus(rec, pat)
        violations += len(chk.violations)
        checked += chk.n_checked
        n += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and checked > 0 and elapsed < LIMIT_4
    record(4, ok, f"consensus ordering: {n} patterns (d in 2,3), {checked} unknown positions checked, "
                  f"{violations} violations, {elapsed:.1f}s (limit {LIMIT_4}s)")
    assert ok


def _fairness(t, scale_max):
    user = pick_probe_user(t, scale_max, 1.0)
    rep = fairness_probe(t, user, delta=1.0, Ns=range(1, 26))
    ok = rep.ok and rep.max_other_deviation <= TOL_FAIR and rep.shifted_user_deviation <= TOL_FAIR
    return ok, rep


def test_5_fairness():
    spec = SyntheticSpec((500, 800), base=3.0, factor_range=(-1.0, 1.0), noise=0.6,
                         known_fraction=0.08, discretize=(1.0, 5.0, 1.0))
    t = generate(spec, seed=505).masked
    ok, rep = _fairness(t, 5.0)
    parts = [f"synthetic 500 users: max other deviation {rep.max_other_deviation:.1e}, "
             f"top-N changes {sum(rep.changed.values())} for N=1..25"]
    if ML100K.exists():
        t0 = time.perf_counter()
        ds = parse_movielens(ML100K, "ml100k")
        ok_ml, rep_ml = _fairness(ds.matrix, 5.0)
        elapsed = time.perf_counter() - t0
        ok = ok and ok_ml and elapsed < LIMIT_5_ML100K
        parts.append(f"ml100k: max other deviation {rep_ml.max_other_deviation:.1e}, "
                     f"top-N changes {sum(rep_ml.changed.values())}, {elapsed:.1f}s (limit {LIMIT_5_ML100K}s)")
    else:
        parts.append(f"ml100k part skipped ({ML100K} absent)")
    record(5, ok, f"fairness (tol {TOL_FAIR:g}): " + "; ".join(parts))
    assert ok


def test_6_convergence_diagnostics():
    # also covers every converged run made by the criteria above
    rng = np.random.default_rng(606)
    for i in range(40):
        shape = (int(rng.integers(5, 200)), int(rng.integers(5, 200))) if i % 2 else \
            tuple(int(x) for x in rng.integers(2, 12, size=3))
        t = generate(SyntheticSpec(shape, noise=1.0, known_fraction=float(rng.uniform(0.05, 0.9)),
                                   base=float(rng.uniform(-100, 100))), seed=i).masked
        for k in range(1, t.ndim):
            res = csa(t, k)
            _RESIDUALS.append(residual(res.canonical, k))
    worst = max(_RESIDUALS)
    ok = worst <= TOL_RESIDUAL
    text = f"convergence diagnostics: {len(_RESIDUALS)} converged runs, max residual {worst:.2e} (tol {TOL_RESIDUAL:g})"
    if ML100K.exists():
        cfg = ConvergenceConfig()
        res = csa(parse_movielens(ML100K, "ml100k").matrix, 1, cfg)
        r = residual(res.canonical, 1)
        ok = ok and r <= TOL_RESIDUAL and res.sweeps_used <= cfg.max_sweeps
        text += f"; ml100k converged in {res.sweeps_used} sweeps (cap {cfg.max_sweeps}), residual {r:.1e}"
    else:
        text += f"; ml100k part skipped ({ML100K} absent)"
    record(6, ok, text)
    assert ok


def test_7_sc_vs_uc_gap():
    t0 = time.perf_counter()
    if ML100K.exists():
        t = parse_movielens(ML100K, "ml100k").matrix
        rep = evaluate(t, ExperimentConfig(fractions=(1.0,), seeds=(0, 1, 2, 3, 4), test_fraction=0.2))
        s = {r["method"]: r for r in rep.summary()}
        sc, uc = s["sc"]["rmse_mean"], s["uc"]["rmse_mean"]
        gap = sc - uc
        mgap = s["sc"]["mae_mean"] - s["uc"]["mae_mean"]
        elapsed = time.perf_counter() - t0
        ok = (sc <= uc + GAP_UPPER and GAP_RANGE[0] <= gap <= GAP_RANGE[1]
              and abs(mgap - MAE_DELTA) <= MAE_TOL and elapsed < LIMIT_7)
        record(7, ok, f"ml100k 80/20 x5 seeds: SC RMSE {sc:.4f}, UC RMSE {uc:.4f}, gap {gap:+.4f} "
                      f"(allowed {GAP_RANGE}); MAE gap {mgap:+.4f} (target {MAE_DELTA:+.2f} +/- {MAE_TOL}); "
                      f"{elapsed:.1f}s (limit {LIMIT_7}s)")
        assert ok
        return
    spec = SyntheticSpec((943, 1682), base=3.0, factor_range=(-1.0, 1.0), known_fraction=0.3,
                         discretize=(1.0, 5.0, 1.0))
    wins, gaps = 0, []
    for seed in range(5):
        t = generate(spec, seed=seed).masked
        rep = evaluate(t, ExperimentConfig(fractions=(1.0,), seeds=(seed,), test_fraction=0.2))
        s = {r["method"]: r for r in rep.summary()}
        gaps.append(s["sc"]["rmse_mean"] - s["uc"]["rmse_mean"])
        wins += s["sc"]["rmse_mean"] <= s["uc"]["rmse_mean"]
    elapsed = time.perf_counter() - t0
    ok = wins >= 4 and elapsed < LIMIT_7
    record(7, ok, f"synthetic analogue (ml100k absent): discretized additive 943x1682, 30% known, 80/20; "
                  f"SC RMSE <= UC RMSE on {wins}/5 seeds (need 4), mean gap {np.mean(gaps):+.4f}, {elapsed:.1f}s")
    assert ok


def test_8_parser_fidelity():
    parts = []
    ok = True
    if ML100K.exists():
        ds = parse_movielens(ML100K, "ml100k")
        good = (ds.n_users, ds.n_items, ds.n_ratings) == (943, 1682, 100_000) and \
            abs(ds.sparsity - ML100K_SPARSITY) <= SPARSITY_TOL
        ok &= good
        parts.append(f"ml100k {ds.n_users} users / {ds.n_items} items / {ds.n_ratings} ratings, "
                     f"sparsity {100 * ds.sparsity:.2f}%")
    if ML1M.exists():
        ds = parse_movielens(ML1M, "ml1m")
        good = ds.n_users == 6040 and ds.n_ratings == 1_000_209
        ok &= good
        parts.append(f"ml1m {ds.n_users} users / {ds.n_ratings} ratings")
    if not parts:
        record(8, None, f"parser fidelity: no MovieLens files under {DATA}; "
                        "format handling is covered by the parser unit tests")
        pytest.skip("MovieLens files absent")
    record(8, ok, "parser fidelity: " + "; ".join(parts))
    assert ok
