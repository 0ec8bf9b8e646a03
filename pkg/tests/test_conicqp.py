import math
import numpy as np
import scipy.sparse as sp
import pytest

from cardsvm import ConicProgram, ConicSolution, ConicStatus, Sense, solve, warm_start, ValidationError
from cardsvm.conicqp import read_dump
from cardsvm.ipm import ConeDims, Scaling, KKTSolver
from cardsvm.models import SVMModel, FeatureState

from conftest import random_instance


def test_square_above_one():
    p = ConicProgram("square")
    x = p.add_variables(1, q=2.0)[0]
    p.add_row([x], [1.0], Sense.GE, 1.0)
    sol = solve(p)
    assert sol.Status == ConicStatus.Optimal
    assert sol.X[x] == pytest.approx(1.0, abs=1e-6)
    assert sol.PrimalObj == pytest.approx(1.0, abs=1e-6)
    assert sol.Residuals["pres"] <= 1e-8 and sol.Residuals["dres"] <= 1e-8

def test_rotated_cone_with_fixed_member():
    p = ConicProgram("amgm")
    a, b = p.add_variables(2, lo=0.0, cost=1.0)
    w = p.add_variables(1)[0]
    p.fix(w, 1.0)
    p.add_cone(a, [w], b=b)
    sol = solve(p)
    assert sol.Status == ConicStatus.Optimal
    assert sol.PrimalObj == pytest.approx(math.sqrt(2.0), abs=1e-6)
    assert sol.X[a] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-5)
    assert sol.X[b] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-5)
    assert sol.Residuals["pres"] <= 1e-8 and sol.Residuals["dres"] <= 1e-8

def test_constant_beta_cone():
    # 2 * t * 0.5 >= x^2, x = 3  =>  t >= 9
    p = ConicProgram("const")
    t = p.add_variables(1, cost=1.0)[0]
    x = p.add_variables(1, lo=3.0, hi=3.0)[0]
    p.add_cone(t, [x], b_const=0.5)
    sol = solve(p)
    assert sol.PrimalObj == pytest.approx(9.0, abs=1e-6)

def test_quadratic_factor():
    p = ConicProgram("lsq")
    x = p.add_variables(3)
    p.set_quadratic_factor(np.eye(3))
    p.add_row(x, 1.0, Sense.EQ, 1.0)
    sol = solve(p)
    assert np.allclose(sol.X, 1.0 / 3.0, atol=1e-6)
    assert sol.PrimalObj == pytest.approx(1.0 / 6.0, abs=1e-7)

def test_svm_program(sparse2):
    model = SVMModel(sparse2, 1.0, [FeatureState.Selected] * 2)
    sol = solve(model.Program)
    assert sol.Status == ConicStatus.Optimal
    assert sol.PrimalObj == pytest.approx(0.5, abs=1e-6)
    assert sol.Residuals["pres"] <= 1e-8 and sol.Residuals["dres"] <= 1e-8
    point = model.point(sol.X)
    assert np.allclose(point.W, [1.0, 0.0], atol=1e-5)
    assert point.Bias == pytest.approx(0.0, abs=1e-5)

def test_dual_objective_matches(random_small):
    model = SVMModel(random_small, 1.0, [FeatureState.Perspective] * random_small.n, B=2)
    sol = solve(model.Program)
    assert sol.Status == ConicStatus.Optimal
    assert sol.DualObj <= sol.PrimalObj + 1e-6 * (1.0 + abs(sol.PrimalObj))
    assert abs(sol.PrimalObj - sol.DualObj) <= 1e-5 * (1.0 + abs(sol.PrimalObj))

@pytest.mark.parametrize("seed", range(20))
def test_separable_quadratic_against_closed_form(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 31))
    q = rng.uniform(0.5, 4.0, size=n)
    c = rng.normal(size=n) * 3.0
    lo = rng.uniform(-2.0, 0.0, size=n)
    hi = lo + rng.uniform(0.1, 3.0, size=n)
    p = ConicProgram(f"box{seed}")
    p.add_variables(n, lo=lo, hi=hi, cost=c, q=q)
    sol = solve(p)
    expected = np.clip(-c / q, lo, hi)
    assert sol.Status == ConicStatus.Optimal
    assert np.allclose(sol.X, expected, atol=1e-5)
    assert sol.PrimalObj == pytest.approx(p.objective(expected), abs=1e-5 * (1.0 + abs(p.objective(expected))))

def test_warm_start_same_program():
    data = random_instance(5)
    model = SVMModel(data, 2.0, [FeatureState.Perspective] * data.n, B=2)
    first = solve(model.Program)
    again = warm_start(model.Program, first)
    assert again.Status == ConicStatus.Optimal
    assert again.PrimalObj == pytest.approx(first.PrimalObj, abs=1e-7 * (1.0 + abs(first.PrimalObj)))

def test_fixing_a_variable_never_lowers_the_objective():
    data = random_instance(6)
    parent = SVMModel(data, 1.0, [FeatureState.Perspective] * data.n, B=2)
    psol = solve(parent.Program)
    states = [FeatureState.Perspective] * data.n
    states[0] = FeatureState.Deselected
    child = SVMModel(data, 1.0, states, B=2)
    csol = warm_start(child.Program, psol)
    assert csol.Status == ConicStatus.Optimal
    assert csol.PrimalObj >= psol.PrimalObj - 1e-7 * (1.0 + abs(psol.PrimalObj))

def test_empty_bounds_are_infeasible():
    p = ConicProgram("empty")
    x = p.add_variables(1, lo=0.0, hi=1.0, cost=1.0)[0]
    p.set_bounds(x, lo=2.0)
    assert solve(p).Status == ConicStatus.Infeasible

def test_conflicting_row_is_infeasible():
    p = ConicProgram("conflict")
    x, y = p.add_variables(2, lo=0.0, hi=1.0, cost=1.0)
    p.add_row([x, y], [1.0, 1.0], Sense.GE, 3.0)
    sol = solve(p)
    assert sol.Status == ConicStatus.Infeasible
    assert not sol.usable

def test_cone_slot_used_twice():
    p = ConicProgram("twice")
    a, b, c = p.add_variables(3, lo=0.0)
    p.add_cone(a, [c], b=b)
    p.add_cone(a, [c], b_const=1.0)
    with pytest.raises(ValidationError):
        solve(p)

def test_cone_needs_one_beta():
    p = ConicProgram("beta")
    a, b, c = p.add_variables(3)
    with pytest.raises(ValidationError):
        p.add_cone(a, [c])

def test_dump_is_canonical(tmp_path, dense2):
    model = SVMModel(dense2, 10.0, [FeatureState.Perspective] * 2, B=1)
    path = str(tmp_path / "dscop.txt")
    text = model.Program.dump(path)
    assert read_dump(path) == text
    assert model.Program.copy().dump(str(tmp_path / "copy.txt")) == text
    assert text.startswith("# program")

def test_warm_start_detects_infeasible_child():
    p = ConicProgram("parent")
    x = p.add_variables(1, lo=0.0, hi=1.0, cost=1.0)[0]
    p.add_row([x], [1.0], Sense.GE, 0.5)
    first = solve(p)
    assert first.Status == ConicStatus.Optimal
    child = p.copy()
    child.set_bounds(x, hi=0.2)
    sol = warm_start(child, first)
    assert sol.Status == ConicStatus.Infeasible
    assert not sol.usable

def test_stalled_exit_usable_only_when_accurate():
    good = ConicSolution(ConicStatus.Stalled, np.zeros(1), residuals=dict(pres=1e-9, dres=1e-9, rgap=1e-9))
    bad = ConicSolution(ConicStatus.Stalled, np.zeros(1), residuals=dict(pres=1e-3, dres=1e-9, rgap=1e-9))
    assert good.usable
    assert not bad.usable
    assert not ConicSolution(ConicStatus.Stalled).usable

def _random_program(seed):
    """
    Small programs with a closed-form optimum: a separable box QP, a linear objective over a
    ball written as a rotated cone, and a projection onto the simplex plane.
    """
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(1, 30))
    p = ConicProgram(f"random{seed}")
    kind = seed % 3
    if kind == 0:
        q = rng.uniform(0.5, 4.0, size=n)
        c = rng.normal(size=n) * 3.0
        lo = rng.uniform(-2.0, 0.0, size=n)
        hi = lo + rng.uniform(0.1, 3.0, size=n)
        p.add_variables(n, lo=lo, hi=hi, cost=c, q=q)
        return p, p.objective(np.clip(-c / q, lo, hi))
    if kind == 1:
        # 2 t >= ||x||^2 with t = r^2 / 2
        c = rng.normal(size=n)
        r = rng.uniform(0.5, 3.0)
        xs = p.add_variables(n, cost=c)
        t = p.add_variables(1)[0]
        p.fix(t, r * r / 2.0)
        p.add_cone(t, list(xs), b_const=1.0)
        return p, -r * float(np.linalg.norm(c))
    target = rng.normal(size=n)
    xs = p.add_variables(n, cost=-target, q=1.0)
    p.add_row(xs, 1.0, Sense.EQ, 1.0)
    x = target - (np.sum(target) - 1.0) / n
    return p, p.objective(x)

@pytest.mark.parametrize("seed", range(200))
def test_random_programs_against_closed_form(seed):
    p, expected = _random_program(seed)
    sol = solve(p)
    assert sol.Status == ConicStatus.Optimal
    assert sol.PrimalObj == pytest.approx(expected, abs=1e-5 * (1.0 + abs(expected)))
    assert sol.DualObj <= sol.PrimalObj + 1e-7 * (1.0 + abs(sol.PrimalObj))

def test_many_more_features_than_points():
    data = random_instance(12, m=10, n=200)
    model = SVMModel(data, 1.0, [FeatureState.Perspective] * data.n, B=3)
    sol = solve(model.Program)
    assert sol.Status == ConicStatus.Optimal
    assert sol.DualObj <= sol.PrimalObj + 1e-6 * (1.0 + abs(sol.PrimalObj))

def _interior_pair():
    dims = ConeDims(4, (3, 3))
    rng = np.random.default_rng(4)
    v = rng.normal(size=2)
    nv = float(np.linalg.norm(v))
    # first cone block of s and second of z sit 1e-9 inside the boundary
    s = np.array([1e-9, 1.0, 1e-9, 0.5, nv + 1e-9, v[0], v[1], 3.0, 1.0, 1.0])
    z = np.array([1.0, 1e-9, 2.0, 0.5, 2.0, 1.0, 0.0, nv + 1e-9, -v[0], v[1]])
    return dims, s, z

def test_scaling_maps_both_sides_to_lambda():
    dims, s, z = _interior_pair()
    W = Scaling(s, z, dims)
    assert np.allclose(W.apply(z), W.apply_inv(s), rtol=1e-8, atol=1e-10)
    v = np.random.default_rng(5).normal(size=dims.Size)
    assert np.allclose(W.apply(W.apply_inv(v)), v, rtol=1e-8, atol=1e-8)
    assert np.allclose(W.inverse_matrix() @ v, W.apply_inv(v), rtol=1e-9, atol=1e-9)

def test_kkt_solution_near_the_boundary():
    dims, s, z0 = _interior_pair()
    W = Scaling(s, z0, dims)
    rng = np.random.default_rng(6)
    G = rng.normal(size=(dims.Size, 5))
    A = rng.normal(size=(2, 5))
    r1, r2, r3 = rng.normal(size=5), rng.normal(size=2), rng.normal(size=dims.Size)
    kkt = KKTSolver(sp.csr_matrix(G), sp.csr_matrix(A))
    kkt.factor(W)
    x, y, z, zs = kkt.solve(r1, r2, r3)

    ATy, GTz = A.T @ y, G.T @ z
    assert np.max(np.abs(ATy + GTz - r1)) <= 1e-8 * (1.0 + np.max(np.abs(ATy)) + np.max(np.abs(GTz)))
    assert np.max(np.abs(A @ x - r2)) <= 1e-8 * (1.0 + np.max(np.abs(A @ x)))
    assert np.allclose(W.apply(z), zs, rtol=1e-7, atol=1e-7 * (1.0 + np.max(np.abs(zs))))
    Gsx, t = W.apply_inv(G @ x), W.apply_inv(r3)
    assert np.max(np.abs(Gsx - zs - t)) <= 1e-8 * (1.0 + np.max(np.abs(Gsx)) + np.max(np.abs(t)))
