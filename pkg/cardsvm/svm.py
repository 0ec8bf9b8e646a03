import itertools, logging
import numpy as np
from .core import PrimalPoint, GuardExceeded, NumericalBreakdown, ValidationError, ZERO_TOL
from .conicqp import solve
from .models import SVMModel, FeatureState
from .workers import run_parallel

logger = logging.getLogger(__name__)

def _intercept_only(data):
    # minimizes sum max(0, 1 - y_i b) over b
    pos, neg = data.positives, data.negatives
    return 1.0 if pos > neg else (-1.0 if neg > pos else 0.0)

def solve_svm(data, C, active=None, ipm_tol=1e-8, max_iter=200, time_limit=None, zero_tol=ZERO_TOL):
    """
    Solves the l2-regularized l1-loss SVM, optionally with w_j = 0 forced outside ``active``.

    :param Dataset data: training data
    :param float C: misclassification weight
    :param active: feature indices allowed to be nonzero, None for all
    :return: PrimalPoint over all n features
    """
    n = data.n
    if active is None:
        features = list(range(n))
    else:
        features = sorted(set(int(j) for j in active))
        if features and (features[0] < 0 or features[-1] >= n):
            raise ValidationError("active feature index out of range", n=n)
    w = np.zeros(n)
    if not features:
        return PrimalPoint.from_wb(w, _intercept_only(data), data, C, zero_tol)
    sub = data if len(features) == n else data.restrict(features)
    model = SVMModel(sub, C, [FeatureState.Selected] * sub.n, name=f"svm[{len(features)}]")
    sol = solve(model.Program, ipm_tol, max_iter, time_limit)
    if not sol.usable:
        raise NumericalBreakdown("SVM program did not reach optimality", status=sol.Status.value)
    w[features] = sol.X[model.WIdx]
    return PrimalPoint.from_wb(w, sol.X[model.BIdx], data, C, zero_tol)

def brute_force_fs(data, C, B, max_n=20, nworkers=1, **solver_args):
    """
    Enumerates every feature subset of size B and returns (subset, PrimalPoint) of the best one.
    Objectives within 1e-9 relative are ties, resolved by the lexicographically smallest subset.
    """
    if data.n > max_n:
        raise GuardExceeded("too many features for enumeration", n=data.n, max_n=max_n)
    if not 1 <= B <= data.n:
        raise ValidationError("budget B must be in [1, n]", B=B, n=data.n)
    subsets = list(itertools.combinations(range(data.n), B))
    jobs = [(lambda s=s: solve_svm(data, C, s, **solver_args)) for s in subsets]
    points = run_parallel(jobs, nworkers)
    best = None
    for subset, point in zip(subsets, points):
        if best is None or point.Objective < best[1].Objective - 1e-9 * (1.0 + abs(best[1].Objective)):
            best = (subset, point)
    logger.debug("enumerated %d subsets, best %s obj=%.10g", len(subsets), best[0], best[1].Objective)
    return frozenset(best[0]), best[1]

def accuracy(point, data):
    """
    Fraction of samples whose label matches sign(w'x + b), with sign(0) = +1.
    """
    if point.n != data.n:
        raise ValidationError("point does not match the dataset", n=data.n, w=point.n)
    pred = np.where(point.decision(data.X) >= 0.0, 1.0, -1.0)
    return float(np.mean(pred == data.Y))
