import math, logging
import numpy as np
from .core import MipResult, MipStatus, ProblemConfig, SVMError, ValidationError, relative_gap
from .heuristics import heuristic_procedure, run_strategy, tighten_big_m, RankedFeatures, Strategy
from .mip import solve_sr_dlmp
from .util import Deadline

logger = logging.getLogger(__name__)

class MSource(object):
    Prop1 = "Prop1"
    User = "user"

def _next_kernel(K, ranked, s, removed, visited):
    """
    K plus the first s ranked features outside K, minus the removed ones. When that set was
    already visited, the next s ranked features are taken instead.
    """
    offset = 0
    while True:
        added = ranked.first(offset + s, exclude=K)[offset:]
        newK = (K | set(added)) - removed
        if frozenset(newK) not in visited or not added:
            if offset:
                logger.warning("binary set revisited, taking ranked features %d..%d instead", offset, offset + s)
            return newK, added
        offset += s

def exact_procedure(data, C, B, s, strategy=Strategy.KernelSearch, config=None, M_source=MSource.Prop1, M=None,
                time_limit=None, trace=None):
    """
    Alternates semi-relaxed lower bounds over a growing binary set K with heuristic upper bounds
    until the percent gap drops below config.mip_gap_stop or time runs out.

    :param int s: number of features added to K per iteration
    :param Strategy strategy: heuristic used for upper bounds
    :param M_source: "Prop1" to derive M from the heuristic UB, "user" to use M as given
    :param time_limit: global wall-clock cap, defaults to config.global_time_limit_s
    :param list trace: optional list receiving one dict per iteration {iter, K, LB, UB, gap, time}
    :return: MipResult with status GapStop or TimeLimit
    """
    cfg = config if config is not None else ProblemConfig(C, B, exact_s=s)
    if not 1 <= s <= data.n:
        raise ValidationError("exact procedure parameter s must be in [1, n]", s=s, n=data.n)
    cfg.validate(data.n)
    deadline = Deadline(time_limit if time_limit is not None else cfg.global_time_limit_s)
    trace = trace if trace is not None else []

    heur = heuristic_procedure(data, C, B, strategy, cfg, min(cfg.heur_time_limit_s, deadline.remaining()))
    incumbent, UB = heur.Point, heur.UB
    K = set(heur.Selected)
    LB = min(heur.Metadata.get("relaxation_lb", -math.inf), UB)
    if M_source == MSource.User:
        if M is None:
            raise ValidationError("a user-supplied M is required")
        M = float(M)
    elif heur.Metadata.get("M") is not None:
        # derived by the heuristic stage from this same UB
        M = float(heur.Metadata["M"])
    else:
        M = tighten_big_m(data, C, B, UB, cfg).M
    history = {}
    visited = set()
    nodes = 0
    status = MipStatus.TimeLimit
    it = 0
    gap = 100.0 * relative_gap(UB, LB)
    logger.info("exact: start UB=%.10g LB=%.10g gap=%.4g%% M=%.6g |K|=%d", UB, LB, gap, M, len(K))
    while True:
        if gap < cfg.mip_gap_stop:
            status = MipStatus.GapStop
            break
        if deadline.expired():
            logger.warning("exact procedure stopped by its time limit at gap %.4g%%", gap)
            break
        if len(K) == data.n and frozenset(K) in visited:
            # with every indicator binary the semi-relaxation is FS-SVM itself
            logger.info("binary set covers every feature, LB=%.10g is final", LB)
            status = MipStatus.Optimal
            break
        it += 1
        visited.add(frozenset(K))
        sr = solve_sr_dlmp(data, C, B, sorted(K), M, min(cfg.sr_time_limit_s, deadline.remaining()), cfg)
        nodes += sr.Nodes
        if sr.Status == MipStatus.TimeLimit:
            logger.warning("semi-relaxation over |K|=%d hit its time limit, using its bound %.10g", len(K), sr.LB)
        LB = max(LB, min(sr.LB, UB))
        u = np.asarray(sr.Metadata["relaxed_u"], dtype=float)

        selected = None
        if not deadline.expired():
            try:
                h = run_strategy(strategy, data, C, B, u, cfg, min(cfg.heur_time_limit_s, deadline.remaining()))
            except SVMError as e:
                logger.warning("heuristic stage failed in iteration %d, keeping UB %.10g: %s", it, UB, e)
            else:
                selected = h.Selected
                if h.UB < UB:
                    UB, incumbent = h.UB, h.Point
                    LB = min(LB, UB)
        removed = set()
        if selected is not None:
            for j in K:
                history.setdefault(j, []).append(j in selected)
            removed = {j for j in K if history.get(j, [])[-2:] == [False, False]}

        ranked = RankedFeatures(u - u * u, descending=True)
        K, added = _next_kernel(K, ranked, s, removed, visited)
        gap = 100.0 * relative_gap(UB, LB)
        record = dict(iter=it, K=len(K), LB=LB, UB=UB, gap=gap, time=deadline.elapsed())
        trace.append(record)
        logger.info("exact iteration %d: LB=%.10g UB=%.10g gap=%.4g%% |K|=%d (+%s -%s)", it, LB, UB, gap, len(K),
            sorted(added), sorted(removed))

    assignment = {j: (0 if j in incumbent.Support else 1) for j in range(data.n)}
    return MipResult(incumbent, assignment, LB, UB, status, nodes,
        dict(iterations=it, M=M, trace=trace, K=sorted(K), time_s=deadline.elapsed(), stage_records=heur.Records))
