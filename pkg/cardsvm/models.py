"""
Builders that express members of the FS-SVM family as a :class:`ConicProgram`.

Every feature j carries one of four states:

    Selected     w_j is free (or |w_j| <= M), cost w_j^2 / 2
    Deselected   w_j = 0
    Perspective  relaxed selection s_j in [0, 1] with 2 W_j s_j >= 2 w_j^2, cost W_j / 2
    Box          relaxed selection v_j in [0, 1] with |w_j| <= M v_j, cost w_j^2 / 2

The variable layout does not depend on the states, so programs built for different
branch-and-bound nodes over the same data can warm start each other.
"""

import math, logging
from enum import Enum
import numpy as np
from .core import PrimalPoint, RelaxationSolution, IndicatorVector, IndicatorKind, ValidationError
from .conicqp import ConicProgram, Sense

logger = logging.getLogger(__name__)

class FeatureState(Enum):
    Selected = "selected"
    Deselected = "deselected"
    Perspective = "perspective"
    Box = "box"

Relaxed = (FeatureState.Perspective, FeatureState.Box)

class SVMModel(object):

    def __init__(self, data, C, states, B=None, M=None, selected_big_m=False, perspective_big_m=False,
                cutoff=None, cover=None, name=""):
        """
        :param Dataset data: samples
        :param float C: misclassification weight
        :param states: n FeatureState values
        :param B: budget, None for no budget row
        :param M: big-M bound for Box features (and Selected/Perspective ones when requested)
        :param bool selected_big_m: bound Selected weights by M
        :param bool perspective_big_m: link Perspective weights by |w_j| <= M s_j
        :param cutoff: optional objective upper bound
        :param cover: optional feature set of which at least one must be selected
        """
        n, m = data.n, data.m
        states = [FeatureState(s) for s in states]
        if len(states) != n:
            raise ValidationError("one feature state per feature is required", n=n, states=len(states))
        needs_m = any(s == FeatureState.Box for s in states) \
            or (selected_big_m and FeatureState.Selected in states) \
            or (perspective_big_m and FeatureState.Perspective in states)
        if needs_m and M is None:
            raise ValidationError("big-M is required for this formulation")
        self.Data = data
        self.C = float(C)
        self.States = states
        self.B = B
        self.M = None if M is None else float(M)

        p = ConicProgram(name)
        self.WIdx = p.add_variables(n)
        self.BIdx = p.add_variables(1)[0]
        self.XiIdx = p.add_variables(m, lo=0.0, cost=self.C)
        self.SelIdx = p.add_variables(n, lo=0.0, hi=1.0)
        self.EpiIdx = p.add_variables(n, lo=0.0)

        for j, state in enumerate(states):
            w, s, W = self.WIdx[j], self.SelIdx[j], self.EpiIdx[j]
            if state != FeatureState.Perspective:
                p.fix(W, 0.0)
            if state == FeatureState.Deselected:
                p.fix(w, 0.0)
                p.fix(s, 0.0)
            elif state == FeatureState.Selected:
                p.fix(s, 1.0)
                p.QDiag[w] = 1.0
                if selected_big_m:
                    p.set_bounds(w, -self.M, self.M)
            elif state == FeatureState.Perspective:
                p.Cost[W] = 0.5
                p.add_cone(W, [w], [math.sqrt(2.0)], b=s)
                if perspective_big_m:
                    p.add_row([w, s], [1.0, -self.M], Sense.LE, 0.0)
                    p.add_row([w, s], [-1.0, -self.M], Sense.LE, 0.0)
            else:
                p.QDiag[w] = 1.0
                p.add_row([w, s], [1.0, -self.M], Sense.LE, 0.0)
                p.add_row([w, s], [-1.0, -self.M], Sense.LE, 0.0)

        # y_i (x_i'w + b) + xi_i >= 1
        X, Y = data.X, data.Y
        for i in range(m):
            nz = np.flatnonzero(X[i])
            cols = np.concatenate([self.WIdx[nz], [self.BIdx, self.XiIdx[i]]])
            vals = np.concatenate([Y[i] * X[i, nz], [Y[i], 1.0]])
            p.add_row(cols, vals, Sense.GE, 1.0)

        relaxed = [j for j, s in enumerate(states) if s in Relaxed]
        nsel = sum(1 for s in states if s == FeatureState.Selected)
        if B is not None:
            active = sum(1 for s in states if s != FeatureState.Deselected)
            self.Budget = min(int(B), active)
            p.add_row(self.SelIdx[relaxed], 1.0, Sense.EQ, self.Budget - nsel)
        if cover:
            cover = set(cover)
            cols = [j for j in relaxed if j in cover]
            fixed_in = sum(1 for j in cover if states[j] == FeatureState.Selected)
            p.add_row(self.SelIdx[cols], 1.0, Sense.GE, 1.0 - fixed_in)
        p.Cutoff = None if cutoff is None or not math.isfinite(cutoff) else float(cutoff)
        self.Program = p

    def __str__(self):
        counts = {}
        for s in self.States:
            counts[s.value] = counts.get(s.value, 0) + 1
        return f"SVMModel({self.Program.Name or '-'}: {counts}, B={self.B}, M={self.M})"

    def point(self, x, zero_tol=1e-6):
        return PrimalPoint.from_wb(x[self.WIdx], x[self.BIdx], self.Data, self.C, zero_tol)

    def selection(self, x):
        v = np.clip(x[self.SelIdx], 0.0, 1.0)
        for j, s in enumerate(self.States):
            if s == FeatureState.Selected:
                v[j] = 1.0
            elif s == FeatureState.Deselected:
                v[j] = 0.0
        return v

    def diag_w(self, x):
        w = x[self.WIdx]
        d = w * w
        for j, s in enumerate(self.States):
            if s == FeatureState.Perspective:
                d[j] = max(x[self.EpiIdx[j]], d[j])
            elif s == FeatureState.Deselected:
                d[j] = 0.0
        return d

    def relaxation(self, sol, kind=IndicatorKind.Deselect, int_tol=1e-5, zero_tol=1e-6, metadata=None):
        """
        Packs a solved program into a RelaxationSolution.
        """
        x = sol.X
        point = self.point(x, zero_tol)
        indicator = IndicatorVector(self.selection(x), IndicatorKind.Select, int_tol)
        if kind == IndicatorKind.Deselect:
            indicator = indicator.to_deselect()
        stats = dict(status=sol.Status.value, iterations=sol.Iterations, time_s=sol.Time,
            primal_obj=sol.PrimalObj, dual_obj=sol.DualObj, **sol.Residuals)
        return RelaxationSolution(point, indicator, self.diag_w(x), stats, metadata, lower_bound=sol.DualObj)

    def level_set_program(self, level, j, sign):
        """
        Program minimizing sign * w_j over the feasible set intersected with {objective <= level}.
        The objective must be linear (no Selected or Box features).
        """
        p = self.Program.copy()
        if np.any(p.QDiag != 0) or p.QFactor is not None:
            raise ValidationError("level-set programs need a linear objective")
        nz = np.flatnonzero(p.Cost)
        p.add_row(nz, p.Cost[nz], Sense.LE, level - p.Offset)
        p.Cost = np.zeros(p.NVar)
        p.Cost[self.WIdx[j]] = float(sign)
        p.Offset = 0.0
        p.Cutoff = None
        p.Name = f"{p.Name}:level[{j},{'+' if sign > 0 else '-'}]"
        return p
