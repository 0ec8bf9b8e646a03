"""
Upper-bounding heuristics (Local Search, Kernel Search), big-M tightening over the
decomposed relaxation's objective level set, and the combined heuristic procedure.
"""

import math, logging
from enum import Enum
import numpy as np
from .core import ProblemConfig, ValidationError, MipStatus, ordering
from .conicqp import solve
from .models import SVMModel, FeatureState
from .mip import BranchSpec, solve_cop_restricted
from .relaxations import solve_dscop, solve_dscomp, bound_m_range
from .svm import solve_svm
from .dataio import ResultRecord
from .util import Deadline
from .workers import run_parallel

logger = logging.getLogger(__name__)

class Strategy(Enum):
    LocalSearch = "LS"
    KernelSearch = "KS"

class RankedFeatures(object):

    def __init__(self, key, descending=False):
        self.Key = np.asarray(key, dtype=float)
        self.Descending = descending
        self.Order = ordering(self.Key, descending)

    def __len__(self):
        return len(self.Order)

    def first(self, count, exclude=()):
        exclude = set(exclude)
        return [int(j) for j in self.Order if j not in exclude][:count]

    def buckets(self, rho):
        """
        Consecutive chunks of size rho; the last one holds the remainder.
        """
        order = [int(j) for j in self.Order]
        return [order[i:i + rho] for i in range(0, len(order), rho)]


class HeuristicResult(object):

    def __init__(self, point, ub, selected, records=None, trace=None, metadata=None):
        self.Point = point
        self.UB = ub
        self.Selected = frozenset(selected)
        self.Records = list(records or [])
        self.Trace = list(trace or [])
        self.Metadata = dict(metadata or {})

    def __iter__(self):
        return iter((self.Point, self.UB, self.Selected))

    def __str__(self):
        return f"HeuristicResult(UB={self.UB:.10g}, selected={sorted(self.Selected)})"


class KernelState(object):

    def __init__(self, buckets):
        self.Kernel = set()
        self.Buckets = buckets
        self.UB = math.inf
        self.Incumbent = None
        self.History = {}                   # {feature: [selected in feasible iteration, ...]}

    def update(self, bucket, selected):
        selected = set(selected)
        for j in self.Kernel:
            self.History.setdefault(j, []).append(j in selected)
        added = selected & set(bucket)
        removed = {j for j in self.Kernel if self.History.get(j, [])[-2:] == [False, False]}
        for j in added:
            self.History[j] = [True]
        self.Kernel = (self.Kernel | added) - removed
        return added, removed


def _config(config, C, B):
    return config if config is not None else ProblemConfig(C, B)

def _fallback(data, C, ranked, B, cfg):
    support = ranked.first(B)
    logger.warning("no incumbent from the restricted problems, using the top %d ranked features", B)
    return solve_svm(data, C, support, cfg.ipm_tol, cfg.ipm_max_iter, zero_tol=cfg.zero_tol)

def _record(data, method, C, B, point, ub, t, M=None):
    return ResultRecord(data.Provenance.get("source", ""), method, C, B, M=M,
        obj=None if point is None else point.Objective, ub=ub, time_s=t,
        features=[] if point is None else sorted(point.Support))

def _relax_u(data, C, B, cfg, relax_u):
    if relax_u is not None:
        relax_u = np.asarray(relax_u, dtype=float)
        if len(relax_u) != data.n:
            raise ValidationError("relaxed indicator length does not match n", n=data.n, u=len(relax_u))
        return relax_u
    return solve_dscop(data, C, B, cfg.ipm_tol, cfg.ipm_max_iter).Indicator.u

def local_search(data, C, B, k, relax_u=None, config=None, time_limit=None):
    """
    Solves the complementarity problem restricted to the B + k features with the smallest relaxed u.

    :param int k: number of features beyond the budget kept in the restricted problem
    :param relax_u: ranking vector; the DSCoP solution is computed when absent
    :return: HeuristicResult, unpackable as (point, UB, selected)
    """
    cfg = _config(config, C, B)
    if not 0 <= k <= data.n - B:
        raise ValidationError("Local Search excess k must be in [0, n-B]", k=k, n=data.n, B=B)
    deadline = Deadline(time_limit)
    ranked = RankedFeatures(_relax_u(data, C, B, cfg, relax_u))
    K = ranked.first(B + k)
    result = solve_cop_restricted(data, C, B, BranchSpec(K), deadline.limit(), cfg)
    point = result.Incumbent or _fallback(data, C, ranked, B, cfg)
    logger.info("local search: |K|=%d UB=%.10g status=%s", len(K), point.Objective, result.Status.value)
    return HeuristicResult(point, point.Objective, point.Support,
        [_record(data, "local-search", C, B, point, point.Objective, deadline.elapsed())],
        [point.Objective], dict(K=K, status=result.Status.value))

def kernel_search(data, C, B, rho, sub_time_limit=60.0, relax_u=None, config=None, time_limit=None):
    """
    Solves a sequence of restricted problems over the kernel plus one bucket of ranked features.
    Each problem carries the cutoff objective <= UB and requires a feature of the new bucket.

    :param int rho: bucket size
    :param float sub_time_limit: cap per restricted problem in seconds
    :return: HeuristicResult; Trace holds the UB after each bucket
    """
    cfg = _config(config, C, B)
    if not 1 <= rho <= data.n:
        raise ValidationError("Kernel Search bucket size rho must be in [1, n]", rho=rho, n=data.n)
    deadline = Deadline(time_limit)
    ranked = RankedFeatures(_relax_u(data, C, B, cfg, relax_u))
    state = KernelState(ranked.buckets(rho))
    logger.info("kernel search: %d buckets of size %d", len(state.Buckets), rho)
    records, trace = [], []
    for it, bucket in enumerate(state.Buckets):
        if deadline.expired():
            logger.warning("kernel search stopped by its time budget after %d buckets", it)
            break
        K = sorted(state.Kernel | set(bucket))
        spec = BranchSpec(K, extra_ub_cutoff=state.UB, cover_set=bucket)
        limit = min(sub_time_limit, deadline.remaining()) if sub_time_limit is not None else deadline.limit()
        result = solve_cop_restricted(data, C, B, spec, limit, cfg)
        point = result.Incumbent
        if result.Status == MipStatus.TimeLimit:
            if point is None:
                logger.warning("bucket %d hit its time limit without an incumbent, treated as infeasible", it + 1)
            else:
                logger.warning("bucket %d hit its time limit, using its best incumbent", it + 1)
        if point is None:
            logger.debug("bucket %d: infeasible, kernel unchanged", it + 1)
            trace.append(state.UB)
            continue
        if point.Objective <= state.UB:
            state.UB = point.Objective
            state.Incumbent = point
        added, removed = state.update(bucket, point.Support & set(K))
        logger.debug("bucket %d: obj=%.10g UB=%.10g added=%s removed=%s kernel=%s", it + 1, point.Objective,
            state.UB, sorted(added), sorted(removed), sorted(state.Kernel))
        trace.append(state.UB)
        records.append(_record(data, f"kernel-search[{it + 1}]", C, B, point, state.UB, deadline.elapsed()))
    point = state.Incumbent or _fallback(data, C, ranked, B, cfg)
    logger.info("kernel search: UB=%.10g support=%s", point.Objective, sorted(point.Support))
    return HeuristicResult(point, point.Objective, point.Support, records, trace,
        dict(buckets=len(state.Buckets), kernel=sorted(state.Kernel)))


class BigMBounds(object):

    def __init__(self, M, upper, lower):
        self.M = float(M)
        self.Upper = np.asarray(upper, dtype=float)
        self.Lower = np.asarray(lower, dtype=float)

    def __iter__(self):
        return iter((self.M, self.Upper, self.Lower))

    def __str__(self):
        return f"BigMBounds(M={self.M:.8g})"

def tighten_big_m(data, C, B, UB, config=None, nworkers=1):
    """
    Bounds every w_j over the DSCoP feasible set intersected with {objective <= UB}.
    Each bound takes one conic solve; the 2n solves run on the worker pool.

    :param float UB: objective of a feasible FS-SVM point
    :return: BigMBounds, unpackable as (M, upper, lower)
    """
    cfg = _config(config, C, B)
    if not (UB >= 0 and math.isfinite(UB)):
        raise ValidationError("UB must be a finite objective value", UB=UB)
    level = UB + 1e-7 * max(1.0, abs(UB))
    fallback = math.sqrt(2.0 * level)       # W_j >= w_j^2 and W_j / 2 <= level
    model = SVMModel(data, C, [FeatureState.Perspective] * data.n, B=B, name="bigm")

    def bound(j, sign):
        sol = solve(model.level_set_program(level, j, sign), cfg.ipm_tol, cfg.ipm_max_iter)
        if not sol.usable:
            logger.warning("big-M bound for feature %d (%+d) not solved (%s), using %.6g",
                j, sign, sol.Status.value, fallback)
            return -fallback
        # lower bound on min sign * w_j
        return max(min(sol.PrimalObj, sol.DualObj), -fallback)

    jobs = []
    for j in range(data.n):
        jobs.append(lambda j=j: bound(j, -1))
        jobs.append(lambda j=j: bound(j, +1))
    values = run_parallel(jobs, nworkers or cfg.threads)
    # minimize -w_j gives max w_j; minimize w_j gives min w_j
    sols = np.array(values).reshape(data.n, 2)
    upper = -sols[:, 0]
    lower = sols[:, 1]
    M = float(np.max(np.maximum(np.abs(upper), np.abs(lower))))
    logger.info("big-M from UB %.10g: M=%.8g", UB, M)
    return BigMBounds(M, upper, lower)

def run_strategy(strategy, data, C, B, relax_u, config, time_limit=None):
    strategy = Strategy(strategy)
    if strategy == Strategy.LocalSearch:
        return local_search(data, C, B, config.heur_k, relax_u, config, time_limit)
    # a bucket larger than n is a single bucket
    return kernel_search(data, C, B, min(config.heur_rho, data.n), config.sub_time_limit_s, relax_u, config, time_limit)

def heuristic_procedure(data, C, B, strategy, config=None, time_limit=None):
    """
    Runs the strategy on the DSCoP ranking, derives M from its UB, and when M is below
    ||w*||_1 / B reruns the strategy on the DSCoMP ranking, keeping the better point.

    :return: HeuristicResult with Metadata["M"]
    """
    cfg = _config(config, C, B)
    cfg.validate(data.n)
    deadline = Deadline(time_limit if time_limit is not None else cfg.heur_time_limit_s)
    relax = solve_dscop(data, C, B, cfg.ipm_tol, cfg.ipm_max_iter)
    name = f"heuristic-{Strategy(strategy).value}"
    best = run_strategy(strategy, data, C, B, relax.Indicator.u, cfg, deadline.limit())
    records = list(best.Records)
    bounds = tighten_big_m(data, C, B, best.UB, cfg)
    records.append(_record(data, f"{name}[DSCoP]", C, B, best.Point, best.UB, deadline.elapsed(), M=bounds.M))
    low, high, stronger = bound_m_range(data, C, B, bounds.M, ipm_tol=cfg.ipm_tol, max_iter=cfg.ipm_max_iter)
    second_ub = None
    if stronger and not deadline.expired():
        relax2 = solve_dscomp(data, C, B, bounds.M, cfg.ipm_tol, cfg.ipm_max_iter, m_source="tighten")
        again = run_strategy(strategy, data, C, B, relax2.Indicator.u, cfg, deadline.limit())
        records.extend(again.Records)
        records.append(_record(data, f"{name}[DSCoMP]", C, B, again.Point, again.UB, deadline.elapsed(), M=bounds.M))
        second_ub = again.UB
        if again.UB <= best.UB:
            best = again
    logger.info("heuristic procedure (%s): UB=%.10g M=%.6g threshold=%.6g second stage=%s",
        Strategy(strategy).value, best.UB, bounds.M, high, "yes" if second_ub is not None else "no")
    return HeuristicResult(best.Point, best.UB, best.Selected, records, best.Trace,
        dict(M=bounds.M, threshold=high, second_stage_ub=second_ub, relaxation_lb=relax.LowerBound))
