import pytest

from cardsvm import ProblemConfig, MipStatus, Strategy, exact_procedure, brute_force_fs, check_point, \
    ValidationError, load_csv, standardize
from cardsvm.exact import MSource, _next_kernel
from cardsvm.heuristics import RankedFeatures

from conftest import random_instance, dataset_path


def test_exact_dense(dense2):
    result = exact_procedure(dense2, 10.0, 1, 1)
    assert result.Status == MipStatus.GapStop
    assert result.objective == pytest.approx(0.5, abs=1e-6)
    assert result.gap <= 1e-4
    assert result.Metadata["iterations"] <= 2

@pytest.mark.parametrize("strategy", [Strategy.LocalSearch, Strategy.KernelSearch])
def test_exact_matches_enumeration(strategy, random_small):
    _, opt = brute_force_fs(random_small, 1.0, 2)
    cfg = ProblemConfig(1.0, 2, mip_gap_stop=1e-4, heur_k=1, heur_rho=2)
    trace = []
    result = exact_procedure(random_small, 1.0, 2, 1, strategy, cfg, trace=trace)
    assert result.Status in (MipStatus.GapStop, MipStatus.Optimal)
    assert result.objective == pytest.approx(opt.Objective, rel=1e-5)
    assert result.LB <= opt.Objective * (1.0 + 1e-5)
    assert check_point(result.Incumbent, random_small, 2) == []
    for record in trace:
        assert set(record) == {"iter", "K", "LB", "UB", "gap", "time"}
    assert all(b["LB"] >= a["LB"] - 1e-12 for a, b in zip(trace, trace[1:]))
    assert all(b["UB"] <= a["UB"] + 1e-12 for a, b in zip(trace, trace[1:]))

def test_exact_with_user_m():
    data = random_instance(12)
    _, opt = brute_force_fs(data, 1.0, 2)
    M = 1.05 * float(max(abs(opt.W)))
    cfg = ProblemConfig(1.0, 2, mip_gap_stop=1e-4, heur_rho=2)
    result = exact_procedure(data, 1.0, 2, 2, config=cfg, M_source=MSource.User, M=M)
    assert result.Metadata["M"] == M
    assert result.objective == pytest.approx(opt.Objective, rel=1e-5)

def test_exact_reuses_heuristic_m(monkeypatch):
    from cardsvm import heuristics
    original = heuristics.tighten_big_m
    calls = []
    def counted(*args, **kw):
        bounds = original(*args, **kw)
        calls.append(bounds)
        return bounds
    monkeypatch.setattr("cardsvm.heuristics.tighten_big_m", counted)
    monkeypatch.setattr("cardsvm.exact.tighten_big_m", counted)
    data = random_instance(12)
    cfg = ProblemConfig(1.0, 2, mip_gap_stop=1e-4, heur_rho=2)
    result = exact_procedure(data, 1.0, 2, 2, config=cfg)
    assert len(calls) == 1
    assert result.Metadata["M"] == calls[0].M
    assert result.Metadata["stage_records"]

def test_exact_user_m_required(dense2):
    with pytest.raises(ValidationError):
        exact_procedure(dense2, 10.0, 1, 1, M_source=MSource.User)

def test_exact_bad_s(dense2):
    with pytest.raises(ValidationError):
        exact_procedure(dense2, 10.0, 1, 3)

def test_exact_zero_time_limit():
    data = random_instance(13)
    result = exact_procedure(data, 1.0, 2, 1, time_limit=0.0)
    assert result.Status in (MipStatus.TimeLimit, MipStatus.GapStop)
    assert result.Incumbent is not None
    assert result.LB <= result.UB

def test_next_kernel_skips_visited_sets():
    ranked = RankedFeatures([0.0, 0.9, 0.5, 0.1], descending=True)
    K, added = _next_kernel({0}, ranked, 1, set(), {frozenset({0, 1})})
    assert added == [2] and K == {0, 2}
    K, added = _next_kernel({0, 1}, ranked, 1, {0}, set())
    assert added == [2] and K == {1, 2}

def test_colorectal_exact():
    data, _ = standardize(load_csv(dataset_path("colorectal.csv")))
    result = exact_procedure(data, 10.0, 10, 1)
    assert result.objective == pytest.approx(2.04, rel=0.01)
