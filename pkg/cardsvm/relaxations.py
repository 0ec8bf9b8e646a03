"""
Continuous lower bounds for FS-SVM: the box relaxation of the big-M model and the
decomposed perspective relaxations, with and without big-M linking.
"""

import logging
import numpy as np
from .core import IndicatorKind, NumericalBreakdown, ValidationError, ZERO_TOL
from .conicqp import solve
from .models import SVMModel, FeatureState
from .svm import solve_svm

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-7

def _solve(model, kind, ipm_tol, max_iter, time_limit, metadata, zero_tol=ZERO_TOL):
    sol = solve(model.Program, ipm_tol, max_iter, time_limit)
    if not sol.usable:
        raise NumericalBreakdown(f"{model.Program.Name} relaxation did not reach optimality", status=sol.Status.value)
    return model.relaxation(sol, kind, zero_tol=zero_tol, metadata=metadata)

def solve_boxmp(data, C, B, M, ipm_tol=1e-8, max_iter=200, time_limit=None, m_source="user"):
    """
    Box relaxation of the big-M formulation: v in [0, 1]^n, sum(v) = B, |w_j| <= M v_j.

    :param str m_source: provenance of M; the bound is valid for FS-SVM only when M >= ||w_opt||_inf
    :return: RelaxationSolution with a v_select indicator and diagW = w^2
    """
    if M is None or not M > 0:
        raise ValidationError("BoxMP needs a positive big-M", M=M)
    model = SVMModel(data, C, [FeatureState.Box] * data.n, B=B, M=M, name="boxmp")
    return _solve(model, IndicatorKind.Select, ipm_tol, max_iter, time_limit,
        dict(relaxation="BoxMP", M=float(M), m_source=m_source))

def solve_dsmp(data, C, B, M, **kw):
    """
    The decomposed relaxation of the big-M model; its value equals the box relaxation's.
    """
    r = solve_boxmp(data, C, B, M, **kw)
    r.Metadata.update(relaxation="DSMP", equivalent_to="BoxMP")
    return r

PERSPECTIVE_TOL = 1e-6

def _perspective_check(r, tol=PERSPECTIVE_TOL):
    """
    Records how far W_j (1 - u_j) is from w_j^2 on the features that are not fully deselected.
    The identity holds at every optimum of the perspective relaxations.
    """
    u = r.Indicator.u
    w = r.Point.W
    W = r.DiagW
    mask = u <= 1.0 - 1e-6
    worst = 0.0
    if np.any(mask):
        err = np.abs(W[mask] * (1.0 - u[mask]) - w[mask] ** 2) / (1.0 + W[mask])
        worst = float(np.max(err))
    ok = worst <= tol
    if not ok:
        logger.warning("perspective identity off by %.2e at the relaxation optimum", worst)
    r.Metadata.update(perspective_error=worst, perspective_ok=ok)
    return ok

def solve_dscop(data, C, B, ipm_tol=1e-8, max_iter=200, time_limit=None):
    """
    Decomposed perspective relaxation of the complementarity formulation.

    :return: RelaxationSolution with a u_deselect indicator and diagW = W
    """
    model = SVMModel(data, C, [FeatureState.Perspective] * data.n, B=B, name="dscop")
    r = _solve(model, IndicatorKind.Deselect, ipm_tol, max_iter, time_limit, dict(relaxation="DSCoP"))
    _perspective_check(r)
    return r

def solve_dscomp(data, C, B, M, ipm_tol=1e-8, max_iter=200, time_limit=None, m_source="user"):
    """
    DSCoP with big-M linking -M(1 - u_j) <= w_j <= M(1 - u_j).
    """
    if M is None or not M > 0:
        raise ValidationError("DSCoMP needs a positive big-M", M=M)
    model = SVMModel(data, C, [FeatureState.Perspective] * data.n, B=B, M=M, perspective_big_m=True, name="dscomp")
    r = _solve(model, IndicatorKind.Deselect, ipm_tol, max_iter, time_limit,
        dict(relaxation="DSCoMP", M=float(M), m_source=m_source))
    _perspective_check(r)
    return r

def psd3_membership_many(w, u, W, tol=BOUNDARY_TOL):
    """
    Vectorized form of psd3_membership; returns two boolean arrays.
    """
    w, u, W = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (w, u, W)))
    mats = np.zeros(w.shape + (3, 3))
    mats[..., 0, 0] = 1.0
    mats[..., 0, 1] = mats[..., 1, 0] = w
    mats[..., 0, 2] = mats[..., 2, 0] = u
    mats[..., 1, 1] = W
    mats[..., 2, 2] = u
    eig_route = np.linalg.eigvalsh(mats)[..., 0] >= -tol
    s = 1.0 - u
    soc_route = (u >= -tol) & (u <= 1.0 + tol) & (W >= -tol) & (np.sqrt((W - s) ** 2 + 4.0 * w * w) <= W + s + tol)
    return eig_route, soc_route

def psd3_membership(w, u, W, tol=BOUNDARY_TOL):
    """
    Tests whether [[1, w, u], [w, W, 0], [u, 0, u]] is positive semidefinite, once by its
    eigenvalues and once by the equivalent rotated-cone description (1 - u) W >= w^2, u in [0, 1].

    :return: (eig_route, soc_route)
    """
    e, s = psd3_membership_many(w, u, W, tol)
    return bool(e), bool(s)

def theorem1_threshold(data, C, B, **solver_args):
    """
    ||w*||_1 / B for the unconstrained SVM optimum w*. For any M at or above this value
    the box relaxation collapses to the plain SVM.
    """
    if not B >= 1:
        raise ValidationError("budget B must be at least 1", B=B)
    w = solve_svm(data, C, **solver_args).W
    return float(np.sum(np.abs(w))) / B

def bound_m_range(data, C, B, m_valid, **solver_args):
    """
    The interval [m_valid, ||w*||_1 / B) of big-M values that are valid and still give a box
    relaxation stronger than the plain SVM.

    :param float m_valid: a valid bound on ||w_opt||_inf, e.g. from tighten_big_m
    :return: (low, high, nonempty)
    """
    high = theorem1_threshold(data, C, B, **solver_args)
    return float(m_valid), high, bool(m_valid < high)
