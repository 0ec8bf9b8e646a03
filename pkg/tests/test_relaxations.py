import numpy as np
import pytest

from cardsvm import solve_svm, brute_force_fs, solve_boxmp, solve_dsmp, solve_dscop, solve_dscomp, \
    psd3_membership, theorem1_threshold, bound_m_range, ValidationError, IndicatorKind
from cardsvm.relaxations import psd3_membership_many

from conftest import random_instance, dataset_path


def test_boxmp_collapses_to_svm(sparse2, dense2):
    assert solve_boxmp(sparse2, 1.0, 1, 1.0).LowerBound == pytest.approx(0.5, abs=1e-6)
    assert solve_boxmp(dense2, 10.0, 1, 1.0).LowerBound == pytest.approx(0.25, abs=1e-6)

def test_boxmp_full_budget(random_small):
    r = solve_boxmp(random_small, 1.0, random_small.n, 1e3)
    assert r.LowerBound == pytest.approx(solve_svm(random_small, 1.0).Objective, rel=1e-5, abs=1e-6)
    assert r.Indicator.Kind == IndicatorKind.Select

def test_boxmp_needs_m(dense2):
    with pytest.raises(ValidationError):
        solve_boxmp(dense2, 1.0, 1, None)

def test_dsmp_equals_boxmp(dense2):
    r = solve_dsmp(dense2, 10.0, 1, 0.5)
    assert r.Metadata["relaxation"] == "DSMP"
    assert r.LowerBound == pytest.approx(solve_boxmp(dense2, 10.0, 1, 0.5).LowerBound, abs=1e-7)

def test_dscop_sparse(sparse2):
    r = solve_dscop(sparse2, 1.0, 1)
    assert r.LowerBound == pytest.approx(0.5, abs=1e-6)
    assert np.allclose(r.Indicator.u, [0.0, 1.0], atol=1e-5)

def test_dscop_strictly_above_svm(dense2):
    r = solve_dscop(dense2, 10.0, 1)
    assert r.LowerBound == pytest.approx(0.5, abs=1e-6)
    assert r.LowerBound > solve_svm(dense2, 10.0).Objective + 0.2

def test_dscop_full_budget(random_small):
    r = solve_dscop(random_small, 1.0, random_small.n)
    assert r.LowerBound == pytest.approx(solve_svm(random_small, 1.0).Objective, rel=1e-5, abs=1e-6)

def test_dscomp_not_below_dscop(dense2):
    assert solve_dscomp(dense2, 10.0, 1, 1.0).LowerBound == pytest.approx(0.5, abs=1e-6)

def test_bounds_are_ordered(random_small):
    B, C = 2, 1.0
    subset, opt = brute_force_fs(random_small, C, B)
    M = float(np.max(np.abs(opt.W))) * 1.01
    svm = solve_svm(random_small, C).Objective
    dscop = solve_dscop(random_small, C, B).LowerBound
    dscomp = solve_dscomp(random_small, C, B, M).LowerBound
    box = solve_boxmp(random_small, C, B, M).LowerBound
    slack = 1e-6 * (1.0 + opt.Objective)
    assert svm - slack <= box <= dscomp + slack
    assert svm - slack <= dscop <= dscomp + slack
    assert dscomp <= opt.Objective + slack

def test_perspective_identity_at_optimum():
    data = random_instance(8)
    r = solve_dscop(data, 1.0, 2)
    assert r.Metadata["perspective_error"] <= 1e-4
    assert r.Metadata["perspective_ok"]
    eig, soc = psd3_membership_many(r.Point.W, r.Indicator.u, r.DiagW, tol=1e-5)
    assert np.all(eig) and np.all(soc)

def test_psd3_membership():
    assert psd3_membership(0.0, 1.0, 0.0) == (True, True)
    assert psd3_membership(1.0, 0.0, 1.0) == (True, True)
    assert psd3_membership(1.0, 0.5, 1.0) == (False, False)

def test_psd3_routes_agree_on_random_points():
    rng = np.random.default_rng(0)
    w = rng.uniform(-2, 2, size=500)
    u = rng.uniform(0, 1, size=500)
    W = rng.uniform(0, 4, size=500)
    eig, soc = psd3_membership_many(w, u, W)
    # points too close to the boundary may land on either side of the tolerance
    margin = np.abs((1.0 - u) * W - w * w) > 1e-3
    assert np.array_equal(eig[margin], soc[margin])

def test_theorem1_threshold(sparse2, dense2):
    assert theorem1_threshold(sparse2, 1.0, 1) == pytest.approx(1.0, abs=1e-5)
    assert theorem1_threshold(dense2, 10.0, 1) == pytest.approx(1.0, abs=1e-5)
    assert theorem1_threshold(dense2, 10.0, 2) == pytest.approx(0.5, abs=1e-5)

def test_bound_m_range(dense2):
    low, high, nonempty = bound_m_range(dense2, 10.0, 1, 1.0)
    assert low == 1.0 and high == pytest.approx(1.0, abs=1e-5)
    assert bound_m_range(dense2, 10.0, 1, 0.5)[2]

def test_arrhythmia_dscop_bound():
    from cardsvm import load_csv, standardize
    data, _ = standardize(load_csv(dataset_path("arrhythmia.csv")))
    assert solve_dscop(data, 10.0, 10).LowerBound == pytest.approx(754.46, rel=0.01)

def test_psd3_routes_agree_away_from_the_boundary():
    rng = np.random.default_rng(1)
    count = 100000
    w = rng.uniform(-2.0, 2.0, size=count)
    u = rng.uniform(-0.5, 1.5, size=count)
    W = rng.uniform(0.0, 4.0, size=count)
    eig, soc = psd3_membership_many(w, u, W)
    mats = np.zeros((count, 3, 3))
    mats[:, 0, 0] = 1.0
    mats[:, 0, 1] = mats[:, 1, 0] = w
    mats[:, 0, 2] = mats[:, 2, 0] = u
    mats[:, 1, 1] = W
    mats[:, 2, 2] = u
    lowest = np.linalg.eigvalsh(mats)[:, 0]
    s = 1.0 - u
    rotated = W + s - np.sqrt((W - s) ** 2 + 4.0 * w * w)
    band = 1e-7
    away = (np.abs(lowest) > band) & (np.abs(rotated) > 2 * band) & (np.abs(u) > band) \
        & (np.abs(1.0 - u) > band) & (W > band)
    assert np.count_nonzero(away) >= 0.99 * count
    assert np.array_equal(eig[away], soc[away])
    assert np.array_equal(eig[away], lowest[away] > 0)

@pytest.mark.parametrize("B", [1, 2])
def test_boxmp_collapses_just_above_threshold(B, random_small):
    svm = solve_svm(random_small, 1.0).Objective
    M = theorem1_threshold(random_small, 1.0, B) * (1.0 + 1e-6)
    assert solve_boxmp(random_small, 1.0, B, M).LowerBound == pytest.approx(svm, rel=1e-6, abs=1e-7)

def test_lower_bound_is_certified(random_small):
    r = solve_dscop(random_small, 1.0, 2)
    assert r.LowerBound <= r.Value
    assert r.LowerBound == min(r.Stats["dual_obj"], r.Value)
    assert r.Value - r.LowerBound <= 1e-6 * (1.0 + r.Value)

@pytest.mark.parametrize("seed", range(50))
def test_bounds_are_ordered_on_random_instances(seed):
    rng = np.random.default_rng(500 + seed)
    m, n = int(rng.integers(10, 41)), int(rng.integers(3, 9))
    B = int(rng.integers(1, 3))
    data = random_instance(seed + 100, m=m, n=n)
    C = 1.0
    _, opt = brute_force_fs(data, C, B)
    M = max(1.01 * float(np.max(np.abs(opt.W))), 1e-3)
    svm = solve_svm(data, C).Objective
    box = solve_boxmp(data, C, B, M).LowerBound
    dscop = solve_dscop(data, C, B).LowerBound
    dscomp = solve_dscomp(data, C, B, M).LowerBound
    slack = lambda v: 1e-6 * (1.0 + abs(v))
    assert svm <= box + slack(box)
    assert box <= opt.Objective + slack(opt.Objective)
    assert svm <= dscop + slack(dscop)
    assert dscop <= dscomp + slack(dscomp)
    assert dscomp <= opt.Objective + slack(opt.Objective)
