import math
import numpy as np
import pytest

from cardsvm import Dataset, ProblemConfig, PrimalPoint, IndicatorVector, IndicatorKind, MipResult, MipStatus, \
    ValidationError, DimensionError, SingleClassError, objective, min_slacks, l0_norm, check_point, relative_gap
from cardsvm.core import ordering
from cardsvm.util import Deadline


def test_objective_examples():
    p = PrimalPoint([0.0, 0.0, 0.0], 0.0, [0.0, 0.0], 3.0)
    assert objective(p, 3.0) == 0.0
    assert objective(PrimalPoint([1.0, 0.0], 0.0, [0.0, 0.0], 1.0), 1.0) == pytest.approx(0.5)
    assert objective(PrimalPoint([0.5, 0.5], 0.0, [0.0, 0.0], 10.0), 10.0) == pytest.approx(0.25)

def test_objective_counts_slacks():
    p = PrimalPoint([1.0], 0.0, [0.5, 0.25], 2.0)
    assert p.Objective == pytest.approx(0.5 + 2.0 * 0.75)
    assert objective(p, 2.0) == pytest.approx(p.Objective)

def test_objective_dimension_mismatch(sparse2):
    p = PrimalPoint([1.0, 0.0, 0.0], 0.0, [0.0, 0.0], 1.0)
    with pytest.raises(DimensionError):
        objective(p, 1.0, sparse2)

def test_min_slacks(sparse2):
    assert np.allclose(min_slacks([1.0, 0.0], 0.0, sparse2), [0.0, 0.0])
    assert np.allclose(min_slacks([0.0, 0.0], 0.0, sparse2), [1.0, 1.0])
    assert np.allclose(min_slacks([0.5, 0.0], 0.0, sparse2), [0.5, 0.5])
    with pytest.raises(DimensionError):
        min_slacks([1.0], 0.0, sparse2)

def test_l0_norm():
    assert l0_norm([0.0, 0.0, 0.0]) == 0
    assert l0_norm([1.0, 1e-12, -2.0], 1e-6) == 2
    assert l0_norm([1e-6, 2e-6], 1e-6) == 1
    with pytest.raises(ValidationError):
        l0_norm([1.0], 0.0)

def test_dataset_validation():
    with pytest.raises(SingleClassError):
        Dataset([[1.0], [2.0]], [1, 1])
    with pytest.raises(ValidationError):
        Dataset([[1.0], [2.0]], [1, 0])
    with pytest.raises(DimensionError):
        Dataset([[1.0], [2.0]], [1, -1, 1])
    with pytest.raises(ValidationError):
        Dataset([[np.nan], [2.0]], [1, -1])

def test_dataset_is_read_only(sparse2):
    with pytest.raises(ValueError):
        sparse2.X[0, 0] = 5.0

def test_dataset_restrict_and_subset(dense2):
    r = dense2.restrict([1])
    assert r.n == 1 and r.m == 2
    assert np.allclose(r.X[:, 0], dense2.X[:, 1])
    s = dense2.subset([1, 0])
    assert list(s.Y) == [-1.0, 1.0]
    assert dense2.positives == 1 and dense2.negatives == 1

def test_problem_config_defaults_and_validation():
    cfg = ProblemConfig(10, 3)
    assert cfg.heur_rho == 10 and cfg.mip_gap_stop == 0.01 and cfg.M is None
    with pytest.raises(ValidationError):
        ProblemConfig(0, 3)
    with pytest.raises(ValidationError):
        ProblemConfig(1, 0)
    with pytest.raises(ValidationError):
        ProblemConfig(1, 2, M=-1.0)
    with pytest.raises(ValidationError):
        ProblemConfig(1, 2, no_such_field=1)
    with pytest.raises(ValidationError):
        ProblemConfig(1, 3).validate(2)
    with pytest.raises(ValidationError):
        ProblemConfig(1, 1, heur_k=2).validate(2)

def test_problem_config_round_trip():
    cfg = ProblemConfig(2.5, 2, M=1.5, heur_k=1)
    again = ProblemConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    changed = cfg.replace(B=1)
    assert changed.B == 1 and changed.M == 1.5 and cfg.B == 2

def test_point_support_and_decision():
    p = PrimalPoint([0.0, 2.0, 1e-9], 0.5, [0.0], 1.0)
    assert p.Support == frozenset([1])
    assert np.allclose(p.decision([[1.0, 1.0, 1.0]]), [2.5])

def test_point_from_wb(sparse2):
    p = PrimalPoint.from_wb([0.5, 0.0], 0.0, sparse2, 1.0)
    assert np.allclose(p.Xi, [0.5, 0.5])
    assert p.Objective == pytest.approx(0.125 + 1.0)

def test_negative_slacks_rejected():
    with pytest.raises(ValidationError):
        PrimalPoint([1.0], 0.0, [-0.1], 1.0)

def test_check_point(sparse2):
    good = PrimalPoint([1.0, 0.0], 0.0, [0.0, 0.0], 1.0)
    assert check_point(good, sparse2, B=1) == []
    bad = PrimalPoint([0.5, 0.0], 0.0, [0.0, 0.0], 1.0)
    assert any("margin" in p for p in check_point(bad, sparse2))
    dense = PrimalPoint([1.0, 1.0], 0.0, [0.0, 0.0], 1.0)
    assert any("cardinality" in p for p in check_point(dense, sparse2, B=1))

def test_indicator_conversion():
    v = IndicatorVector([1.0, 0.25, 0.0], IndicatorKind.Select)
    assert np.allclose(v.u, [0.0, 0.75, 1.0])
    assert np.allclose(v.to_deselect().to_select().Values, v.Values)
    assert not v.Integral
    assert IndicatorVector([1.0, 1e-7], "u_deselect").Integral

def test_relative_gap():
    assert relative_gap(2.0, 1.0) == pytest.approx(0.5)
    assert relative_gap(1.0, 1.0) == 0.0
    assert relative_gap(1.0, 1.5) == 0.0
    assert relative_gap(math.inf, 1.0) == math.inf

def test_mip_result_properties():
    p = PrimalPoint([1.0, 0.0], 0.0, [0.0, 0.0], 1.0)
    r = MipResult(p, {0: 0, 1: 1}, 0.5, 0.5, MipStatus.Optimal)
    assert r.gap == 0.0 and r.objective == pytest.approx(0.5) and r.support == frozenset([0])
    empty = MipResult(None, None, math.inf, math.inf, MipStatus.Infeasible)
    assert empty.objective is None and empty.support == frozenset()

def test_ordering_breaks_ties_by_index():
    assert list(ordering([0.5, 0.5, 0.1])) == [2, 0, 1]
    assert list(ordering([0.5, 0.5 + 1e-12, 0.9], descending=True)) == [2, 0, 1]

def test_deadline():
    unlimited = Deadline()
    assert not unlimited.expired()
    assert unlimited.limit() is None
    assert math.isinf(unlimited.remaining())
    spent = Deadline(0.0)
    assert spent.expired()
    assert spent.remaining() == 0.0
    assert spent.limit() == 0.0
    assert spent.elapsed() >= 0.0
