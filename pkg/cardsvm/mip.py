"""
Branch and bound over the deselection indicators u_j, j in K, with conic node relaxations.

Two families share the engine:

    CoP(K)      features outside K are deselected; integral leaves are polished by a
                restricted SVM solve and give FS-SVM incumbents
    SR-DLMP(K)  features outside K keep a continuous perspective relaxation; the
                optimal value is a lower bound for FS-SVM and the relaxed u is reported
"""

import math, logging
from enum import Enum
import numpy as np
from .core import MipResult, MipStatus, ProblemConfig, ValidationError, GuardExceeded, NumericalBreakdown, \
    check_point, ordering
from .conicqp import warm_start, ConicStatus
from .models import SVMModel, FeatureState
from .svm import solve_svm
from .util import Deadline

logger = logging.getLogger(__name__)

CUTOFF_SLACK = 1e-7

class Formulation(Enum):
    Complementarity = "CoP_complementarity"
    BigM = "BigM"

class BranchSpec(object):

    def __init__(self, K, formulation=Formulation.Complementarity, M=None, extra_ub_cutoff=None, cover_set=None,
                outside=FeatureState.Deselected):
        """
        :param K: indices of the binary indicators
        :param Formulation formulation: perspective (complementarity) or big-M node relaxation over K
        :param M: big-M bound, required by the big-M formulation
        :param extra_ub_cutoff: objective upper bound added to every node
        :param cover_set: features of which at least one must be selected
        :param FeatureState outside: state of features outside K (Deselected or Perspective)
        """
        self.K = sorted(set(int(j) for j in K))
        self.Formulation = Formulation(formulation)
        self.M = None if M is None else float(M)
        self.Cutoff = None if extra_ub_cutoff is None or not math.isfinite(extra_ub_cutoff) else float(extra_ub_cutoff)
        self.Cover = None if cover_set is None else frozenset(int(j) for j in cover_set)
        self.Outside = FeatureState(outside)
        if self.Outside not in (FeatureState.Deselected, FeatureState.Perspective):
            raise ValidationError("features outside K are either deselected or relaxed", outside=self.Outside.value)
        if not self.K and self.Outside == FeatureState.Deselected:
            raise ValidationError("binary set K must not be empty")
        if self.Formulation == Formulation.BigM and self.M is None:
            raise ValidationError("big-M formulation needs M")

    def __str__(self):
        return f"BranchSpec(|K|={len(self.K)}, {self.Formulation.value}, outside={self.Outside.value}, M={self.M})"

    @property
    def relaxed_state(self):
        return FeatureState.Box if self.Formulation == Formulation.BigM else FeatureState.Perspective

class BranchNode(object):

    def __init__(self, fixed_zero, fixed_one, bound, depth, prior=None, id=0):
        self.FixedZero = frozenset(fixed_zero)          # u_j = 0, feature selected
        self.FixedOne = frozenset(fixed_one)            # u_j = 1, feature deselected
        assert not (self.FixedZero & self.FixedOne)
        self.Bound = bound
        self.Depth = depth
        self.Prior = prior
        self.Id = id

    def __str__(self):
        return f"node {self.Id} depth={self.Depth} bound={self.Bound:.10g} u0={sorted(self.FixedZero)} u1={sorted(self.FixedOne)}"

    def child(self, j, value, id):
        if value == 0:
            return BranchNode(self.FixedZero | {j}, self.FixedOne, self.Bound, self.Depth + 1, self.Prior, id)
        return BranchNode(self.FixedZero, self.FixedOne | {j}, self.Bound, self.Depth + 1, self.Prior, id)


class BranchAndBound(object):

    def __init__(self, data, C, B, spec, config=None, time_limit=None, relaxation_leaves=False, node_log=None):
        """
        :param bool relaxation_leaves: integral nodes report their relaxation value instead of
            a polished FS-SVM point (semi-relaxation mode)
        :param node_log: optional writable stream receiving one line per node
        """
        self.Data = data
        self.C = float(C)
        self.B = int(B)
        self.Spec = spec
        self.Config = config or ProblemConfig(C, B)
        self.Deadline = Deadline(time_limit)
        self.RelaxationLeaves = relaxation_leaves
        self.NodeLog = node_log
        self.K = spec.K
        self.UB = math.inf
        self.Incumbent = None
        self.Assignment = None
        self.Payload = None
        self.Nodes = 0
        self.PrunedBound = math.inf
        self.NextId = 0
        self.RootU = None

    def next_id(self):
        self.NextId += 1
        return self.NextId

    def states(self, node):
        spec = self.Spec
        K = set(self.K)
        out = []
        for j in range(self.Data.n):
            if j in node.FixedZero:
                out.append(FeatureState.Selected)
            elif j in node.FixedOne:
                out.append(FeatureState.Deselected)
            elif j in K:
                out.append(spec.relaxed_state)
            else:
                out.append(spec.Outside)
        return out

    def cutoff_level(self):
        # a cutoff equal to the optimum leaves no interior, so it is loosened slightly
        cutoff = self.Spec.Cutoff
        return None if cutoff is None else cutoff + CUTOFF_SLACK * max(1.0, abs(cutoff))

    def relax(self, node):
        spec = self.Spec
        model = SVMModel(self.Data, self.C, self.states(node), B=self.B, M=spec.M,
            selected_big_m=spec.Formulation == Formulation.BigM, cutoff=self.cutoff_level(), cover=spec.Cover,
            name=f"node{node.Id}")
        cfg = self.Config
        sol = warm_start(model.Program, node.Prior, cfg.ipm_tol, cfg.ipm_max_iter, self.Deadline.limit())
        return model, sol

    def polish(self, support):
        """
        Exact restricted SVM on the support; None when it violates the cutoff or cover constraints.
        """
        point = solve_svm(self.Data, self.C, support, self.Config.ipm_tol, self.Config.ipm_max_iter,
            zero_tol=self.Config.zero_tol)
        spec = self.Spec
        if spec.Cutoff is not None and point.Objective > self.cutoff_level():
            return None
        if spec.Cover is not None and not (set(support) & spec.Cover):
            return None
        return point

    def offer(self, point, support):
        if point is None or point.Objective >= self.UB:
            return False
        problems = check_point(point, self.Data, self.B, self.Config.eps_feas, self.Config.zero_tol)
        if problems:
            logger.warning("rejecting candidate incumbent: %s", "; ".join(problems))
            return False
        self.UB = point.Objective
        self.Incumbent = point
        self.Assignment = {j: (0 if j in support else 1) for j in self.K}
        logger.debug("new incumbent %.10g support=%s", self.UB, sorted(support))
        return True

    def round_support(self, v):
        """
        Top-B features of K by selection value v.
        """
        K = np.array(self.K, dtype=int)
        budget = min(self.B, len(K))
        order = ordering(v[K], descending=True)
        return sorted(int(j) for j in K[order[:budget]])

    def prune_level(self):
        if not math.isfinite(self.UB):
            return math.inf
        return self.UB - self.Config.eps_rel_gap * max(abs(self.UB), 1e-12)

    def log_node(self, node, status):
        line = f"{node.Depth} {node.Bound:.10g} u0={sorted(node.FixedZero)} u1={sorted(node.FixedOne)} {status}"
        logger.debug("node %s", line)
        if self.NodeLog is not None:
            self.NodeLog.write(line + "\n")

    def select(self, open_nodes):
        if self.Incumbent is None and self.Payload is None:
            return open_nodes.pop()                     # depth first until the first incumbent
        i = min(range(len(open_nodes)), key=lambda k: (open_nodes[k].Bound, open_nodes[k].Id))
        return open_nodes.pop(i)

    def run(self):
        cfg = self.Config
        root = BranchNode((), (), -math.inf, 0, id=0)
        open_nodes = [root]
        limit_hit = False
        root_bound = None
        while open_nodes:
            if self.Deadline.expired() or (cfg.max_nodes is not None and self.Nodes >= cfg.max_nodes):
                limit_hit = True
                break
            node = self.select(open_nodes)
            if node.Bound >= self.prune_level():
                self.PrunedBound = min(self.PrunedBound, node.Bound)
                continue
            model, sol = self.relax(node)
            self.Nodes += 1
            if sol.Status == ConicStatus.Infeasible:
                self.log_node(node, "infeasible")
                continue
            if not sol.usable:
                if self.Deadline.expired():
                    open_nodes.append(node)
                    limit_hit = True
                    break
                if self.Spec.Cutoff is not None:
                    # the cutoff leaves at most a sliver of the node's feasible set
                    logger.warning("node %d relaxation ended with %s under the cutoff, pruned", node.Id,
                        sol.Status.value)
                    self.log_node(node, "pruned")
                    continue
                raise NumericalBreakdown("node relaxation did not reach optimality", node=node.Id,
                    status=sol.Status.value)
            node.Bound = max(node.Bound, sol.DualObj)
            node.Prior = sol
            if root_bound is None:
                root_bound = node.Bound
            v = model.selection(sol.X)
            u = 1.0 - v
            if node is root:
                self.RootU = u

            if node is root and not self.RelaxationLeaves:
                support = self.round_support(v)
                self.offer(self.polish(support), support)

            if node.Bound >= self.prune_level():
                self.PrunedBound = min(self.PrunedBound, node.Bound)
                self.log_node(node, "pruned")
                continue

            free = [j for j in self.K if j not in node.FixedZero and j not in node.FixedOne]
            frac = [j for j in free if min(u[j], 1.0 - u[j]) > cfg.int_tol]
            if not frac:
                self.leaf(node, model, sol, v)
                continue
            order = ordering(np.abs(u[frac] - 0.5))
            j = frac[order[0]]
            down, up = node.child(j, 0, self.next_id()), node.child(j, 1, self.next_id())
            self.log_node(node, f"branch x{j} u={u[j]:.4f}")
            # the child on the rounded side is explored first
            open_nodes.extend([up, down] if u[j] < 0.5 else [down, up])

        open_bound = min((n.Bound for n in open_nodes), default=math.inf)
        lb = min(self.UB, self.PrunedBound, open_bound)
        if limit_hit:
            status = MipStatus.TimeLimit
            if cfg.max_nodes is not None and self.Nodes >= cfg.max_nodes:
                logger.warning("node limit %d reached", cfg.max_nodes)
        elif math.isfinite(self.UB):
            status = MipStatus.Optimal
        else:
            status = MipStatus.Infeasible
            lb = math.inf
        if not math.isfinite(lb) and status == MipStatus.TimeLimit:
            lb = -math.inf
        metadata = dict(root_bound=root_bound, time_s=self.Deadline.elapsed(), spec=str(self.Spec))
        if self.RelaxationLeaves:
            metadata["relaxed_u"] = self.Payload if self.Payload is not None else self.RootU
        result = MipResult(self.Incumbent, self.Assignment, lb, self.UB, status, self.Nodes, metadata)
        logger.debug("branch and bound: %s", result)
        return result

    def leaf(self, node, model, sol, v):
        if self.RelaxationLeaves:
            value = node.Bound
            if value < self.UB:
                self.UB = value
                self.Payload = 1.0 - v
                self.Assignment = {j: int(round(1.0 - v[j])) for j in self.K}
            self.log_node(node, "leaf")
            return
        support = [j for j in self.K if v[j] >= 0.5]
        if len(support) > self.B:
            support = self.round_support(v)
        self.offer(self.polish(support), support)
        self.log_node(node, "leaf")


def _config(config, C, B):
    return config if config is not None else ProblemConfig(C, B)

def solve_cop_restricted(data, C, B, spec, time_limit=None, config=None, node_log=None):
    """
    Solves the complementarity formulation restricted to the features in spec.K,
    with the optional objective cutoff and cover constraints of the spec.

    :return: MipResult; status Infeasible when the cutoff or cover cannot be met
    """
    if spec.Outside != FeatureState.Deselected:
        raise ValidationError("restricted CoP deselects every feature outside K")
    if spec.K and (spec.K[0] < 0 or spec.K[-1] >= data.n):
        raise ValidationError("K refers to a feature out of range", n=data.n)
    bb = BranchAndBound(data, C, B, spec, _config(config, C, B), time_limit, node_log=node_log)
    return bb.run()

def solve_sr_dlmp(data, C, B, K, M, time_limit=None, config=None, node_log=None):
    """
    Semi-relaxation: u_j binary for j in K (with big-M linking and W_j >= w_j^2),
    perspective relaxation for the remaining features.

    :return: MipResult whose LB is a valid FS-SVM lower bound; Metadata["relaxed_u"] holds the
        relaxed u of the best leaf
    """
    spec = BranchSpec(K, Formulation.BigM, M, outside=FeatureState.Perspective)
    if spec.K and (spec.K[0] < 0 or spec.K[-1] >= data.n):
        raise ValidationError("K refers to a feature out of range", n=data.n)
    bb = BranchAndBound(data, C, B, spec, _config(config, C, B), time_limit, relaxation_leaves=True,
        node_log=node_log)
    result = bb.run()
    result.Metadata["value"] = result.UB
    return result

def _guard(data, config):
    guard = config.bnb_guard if config is not None else ProblemConfig.Defaults["bnb_guard"]
    if guard is not None and data.n > guard:
        raise GuardExceeded("too many features for full branch and bound", n=data.n, guard=guard)

def solve_cop_full(data, C, B, time_limit=None, config=None):
    _guard(data, config)
    return solve_cop_restricted(data, C, B, BranchSpec(range(data.n)), time_limit, config)

def solve_bigmp_full(data, C, B, M, time_limit=None, config=None):
    _guard(data, config)
    if M is None:
        raise ValidationError("big-M formulation needs M")
    return solve_cop_restricted(data, C, B, BranchSpec(range(data.n), Formulation.BigM, M), time_limit, config)
