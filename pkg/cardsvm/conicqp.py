"""
Canonical convex program: diagonal (plus optional Gram) quadratic cost, linear rows,
variable bounds and rotated second-order cones, solved by the interior-point engine
in :mod:`cardsvm.ipm`.
"""

import math, logging
from enum import Enum
import numpy as np
import scipy.sparse as sp
from .core import ValidationError
from .ipm import ConeDims, conelp
from .util import to_str

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

class Sense(Enum):
    LE = "<="
    EQ = "="
    GE = ">="

class ConicStatus(Enum):
    Optimal = "Optimal"
    Infeasible = "Infeasible"
    Unbounded = "Unbounded"
    IterLimit = "IterLimit"
    TimeLimit = "TimeLimit"
    Stalled = "Stalled"

_IPMStatus = {
    "optimal":              ConicStatus.Optimal,
    "primal_infeasible":    ConicStatus.Infeasible,
    "dual_infeasible":      ConicStatus.Unbounded,
    "iter_limit":           ConicStatus.IterLimit,
    "time_limit":           ConicStatus.TimeLimit,
    "stalled":              ConicStatus.Stalled
}

class RotatedCone(object):

    def __init__(self, a, xs, coefs=None, b=None, b_const=None):
        """
        Rotated cone 2 * x[a] * beta >= sum_k (coefs[k] * x[xs[k]])^2 where beta is x[b]
        or the constant b_const.
        """
        if (b is None) == (b_const is None):
            raise ValidationError("rotated cone needs exactly one of b and b_const")
        self.A = int(a)
        self.B = None if b is None else int(b)
        self.BConst = None if b_const is None else float(b_const)
        self.Xs = np.asarray(xs, dtype=int).ravel()
        self.Coefs = np.ones(len(self.Xs)) if coefs is None else np.asarray(coefs, dtype=float).ravel()
        if len(self.Coefs) != len(self.Xs):
            raise ValidationError("cone coefficient count does not match its variables")

    def beta(self, x):
        return self.BConst if self.B is None else x[self.B]

    def residual(self, x):
        """
        2 a beta - ||coefs * x||^2 evaluated at x.
        """
        v = self.Coefs * x[self.Xs]
        return 2.0 * x[self.A] * self.beta(x) - float(v @ v)


class ConicProgram(object):

    def __init__(self, name=""):
        self.Name = name
        self.NVar = 0
        self.Lo = np.zeros(0)
        self.Hi = np.zeros(0)
        self.Cost = np.zeros(0)
        self.QDiag = np.zeros(0)
        self.QFactor = None             # F with Q += F'F, as a (k x NVar) array
        self.Rows = []                  # (cols, vals, Sense, rhs)
        self.Cones = []
        self.Cutoff = None              # objective <= Cutoff
        self.Offset = 0.0

    def __str__(self):
        return f"ConicProgram({self.Name or '-'}: nvar={self.NVar}, rows={len(self.Rows)}, cones={len(self.Cones)})"

    def add_variables(self, count, lo=-np.inf, hi=np.inf, cost=0.0, q=0.0):
        """
        Appends count variables and returns their indices.

        :param lo: lower bound, scalar or array
        :param hi: upper bound, scalar or array
        :param cost: linear cost, scalar or array
        :param q: diagonal quadratic weight (objective term q/2 * x^2), scalar or array
        """
        idx = np.arange(self.NVar, self.NVar + count)
        grow = lambda arr, v: np.concatenate([arr, np.broadcast_to(np.asarray(v, dtype=float), (count,))])
        self.Lo = grow(self.Lo, lo)
        self.Hi = grow(self.Hi, hi)
        self.Cost = grow(self.Cost, cost)
        self.QDiag = grow(self.QDiag, q)
        if self.QFactor is not None:
            self.QFactor = np.hstack([self.QFactor, np.zeros((self.QFactor.shape[0], count))])
        self.NVar += count
        return idx

    def set_bounds(self, j, lo=None, hi=None):
        if lo is not None:
            self.Lo[j] = lo
        if hi is not None:
            self.Hi[j] = hi

    def fix(self, j, value):
        self.Lo[j] = self.Hi[j] = value

    def add_row(self, cols, vals, sense, rhs):
        cols = np.asarray(cols, dtype=int).ravel()
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape).copy()
        if not isinstance(sense, Sense):
            sense = Sense(sense)
        self.Rows.append((cols, vals, sense, float(rhs)))
        return len(self.Rows) - 1

    def add_cone(self, a, xs, coefs=None, b=None, b_const=None):
        self.Cones.append(RotatedCone(a, xs, coefs, b=b, b_const=b_const))
        return len(self.Cones) - 1

    def set_quadratic_factor(self, F):
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[1] != self.NVar:
            raise ValidationError("quadratic factor width does not match the number of variables")
        self.QFactor = F

    def copy(self):
        p = ConicProgram(self.Name)
        p.NVar = self.NVar
        p.Lo, p.Hi = self.Lo.copy(), self.Hi.copy()
        p.Cost, p.QDiag = self.Cost.copy(), self.QDiag.copy()
        p.QFactor = None if self.QFactor is None else self.QFactor.copy()
        p.Rows = list(self.Rows)
        p.Cones = list(self.Cones)
        p.Cutoff = self.Cutoff
        p.Offset = self.Offset
        return p

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        val = 0.5 * float(self.QDiag @ (x * x)) + float(self.Cost @ x) + self.Offset
        if self.QFactor is not None:
            fx = self.QFactor @ x
            val += 0.5 * float(fx @ fx)
        return val

    def validate(self):
        n = self.NVar
        for i, (cols, vals, sense, rhs) in enumerate(self.Rows):
            if len(cols) and (cols.min() < 0 or cols.max() >= n):
                raise ValidationError("row refers to a variable out of range", row=i)
        slots = set()
        for k, cone in enumerate(self.Cones):
            used = [cone.A] + ([] if cone.B is None else [cone.B])
            if any(j < 0 or j >= n for j in used) or (len(cone.Xs) and (cone.Xs.min() < 0 or cone.Xs.max() >= n)):
                raise ValidationError("cone refers to a variable out of range", cone=k)
            for j in used:
                if j in slots:
                    raise ValidationError("variable appears in the (a, b) slot of more than one cone", var=j)
                slots.add(j)
        if np.any(self.QDiag < 0):
            raise ValidationError("diagonal quadratic weights must be nonnegative")

    def compile(self):
        return CompiledProgram(self)

    def dump(self, out):
        """
        Writes a canonical plain-text listing of the program (sorted triplets).

        :param out: path or writable text stream
        """
        lines = [f"# program {self.Name or '-'}", f"nvar {self.NVar}", f"offset {self.Offset:.17g}"]
        if self.Cutoff is not None:
            lines.append(f"cutoff {self.Cutoff:.17g}")
        for j in range(self.NVar):
            lines.append(f"var {j} {self.Lo[j]:.17g} {self.Hi[j]:.17g} {self.Cost[j]:.17g} {self.QDiag[j]:.17g}")
        if self.QFactor is not None:
            for i, j in zip(*np.nonzero(self.QFactor)):
                lines.append(f"F {i} {j} {self.QFactor[i, j]:.17g}")
        for i, (cols, vals, sense, rhs) in enumerate(self.Rows):
            lines.append(f"row {i} {sense.value} {rhs:.17g}")
            for j, v in sorted(zip(cols.tolist(), vals.tolist())):
                lines.append(f"A {i} {j} {v:.17g}")
        for k, cone in enumerate(self.Cones):
            beta = f"x{cone.B}" if cone.B is not None else f"{cone.BConst:.17g}"
            lines.append(f"cone {k} x{cone.A} {beta}")
            for j, v in sorted(zip(cone.Xs.tolist(), cone.Coefs.tolist())):
                lines.append(f"K {k} {j} {v:.17g}")
        text = "\n".join(lines) + "\n"
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w") as f:
                f.write(text)
        return text


class _RowBuilder(object):

    def __init__(self):
        self.I, self.J, self.V, self.H = [], [], [], []

    def add(self, cols, vals, rhs):
        r = len(self.H)
        self.I.extend([r] * len(cols))
        self.J.extend(cols)
        self.V.extend(vals)
        self.H.append(rhs)
        return r

    def matrix(self, ncol):
        return sp.csr_matrix((self.V, (self.I, self.J)), shape=(len(self.H), ncol))


class CompiledProgram(object):

    def __init__(self, prog):
        """
        Standard form c'x s.t. Gx + s = h, Ax = b, s in orthant x SOC after removing
        fixed variables and lifting quadratic terms into epigraph cones.
        """
        prog.validate()
        self.Program = prog
        self.Infeasible = None
        n = prog.NVar
        lo, hi = prog.Lo, prog.Hi
        bad = np.flatnonzero(lo > hi + 1e-12 * (1.0 + np.abs(lo)))
        if len(bad):
            self.Infeasible = f"empty bound interval for variable {bad[0]}"
        fixed = lo >= hi
        self.XFix = np.where(fixed, lo, 0.0)
        self.Free = np.flatnonzero(~fixed)
        self.Col = np.full(n, -1)
        self.Col[self.Free] = np.arange(len(self.Free))
        nf = len(self.Free)
        self.NFree = nf

        qfree = self.Free[prog.QDiag[self.Free] > 0]
        self.EpiVars = qfree
        self.EpiCols = nf + np.arange(len(qfree))
        ncol = nf + len(qfree)
        self.FactorCol = None
        if prog.QFactor is not None:
            self.FactorCol = ncol
            ncol += 1
        self.NCol = ncol

        c = np.zeros(ncol)
        c[:nf] = prog.Cost[self.Free]
        c[self.EpiCols] = 1.0
        if self.FactorCol is not None:
            c[self.FactorCol] = 1.0
        self.c = c
        xf = self.XFix
        self.Const = prog.Offset + float(prog.Cost[fixed] @ xf[fixed]) \
            + 0.5 * float(prog.QDiag[fixed] @ (xf[fixed] ** 2))

        G, A = _RowBuilder(), _RowBuilder()
        self.RowMap = [None] * len(prog.Rows)
        for i, (cols, vals, sense, rhs) in enumerate(prog.Rows):
            k, v, c0 = self._affine(cols, vals)
            r = rhs - c0
            if not np.any(v != 0.0):
                tol = 1e-9 * (1.0 + abs(rhs))
                ok = (sense == Sense.LE and r >= -tol) or (sense == Sense.GE and r <= tol) \
                    or (sense == Sense.EQ and abs(r) <= tol)
                if not ok:
                    self.Infeasible = self.Infeasible or f"row {i} is violated by fixed variables"
                continue
            if sense == Sense.EQ:
                self.RowMap[i] = ("A", A.add(k, v, r), 1.0)
            elif sense == Sense.LE:
                self.RowMap[i] = ("G", G.add(k, v, r), 1.0)
            else:
                self.RowMap[i] = ("G", G.add(k, -v, -r), 1.0)

        self.CutoffRow = None
        if prog.Cutoff is not None:
            nz = np.flatnonzero(c)
            if len(nz):
                self.CutoffRow = G.add(nz, c[nz], prog.Cutoff - self.Const)
            elif self.Const > prog.Cutoff + 1e-9 * (1.0 + abs(prog.Cutoff)):
                self.Infeasible = self.Infeasible or "objective cutoff is violated by fixed variables"

        self.LowerRows = {}
        self.UpperRows = {}
        for j in self.Free:
            if np.isfinite(lo[j]):
                self.LowerRows[j] = G.add([self.Col[j]], [-1.0], -lo[j])
            if np.isfinite(hi[j]):
                self.UpperRows[j] = G.add([self.Col[j]], [1.0], hi[j])
        l = len(G.H)

        q = []
        self.ConeRows = [None] * len(prog.Cones)
        for k, cone in enumerate(prog.Cones):
            comps = self._cone_components(cone)
            if all(len(cols) == 0 for cols, _, _ in comps):
                vals = np.array([const for _, _, const in comps])
                if vals[0] < -1e-9 or vals[0] ** 2 - float(vals[1:] @ vals[1:]) < -1e-9 * (1.0 + vals[0] ** 2):
                    self.Infeasible = self.Infeasible or f"cone {k} is violated by fixed variables"
                continue
            self.ConeRows[k] = (len(G.H), len(comps))
            for cols, vals, const in comps:
                G.add(cols, [-x for x in vals], const)
            q.append(len(comps))

        for j, col in zip(qfree, self.EpiCols):
            comps = self._rotated([col], [1.0], 0.0, [], [], 1.0, [([self.Col[j]], [math.sqrt(prog.QDiag[j])], 0.0)])
            for cols, vals, const in comps:
                G.add(cols, [-x for x in vals], const)
            q.append(len(comps))

        if self.FactorCol is not None:
            F = prog.QFactor
            xs = []
            for row in F:
                nz = np.flatnonzero(row)
                k, v, c0 = self._affine(nz, row[nz])
                xs.append((list(k), list(v), c0))
            comps = self._rotated([self.FactorCol], [1.0], 0.0, [], [], 1.0, xs)
            for cols, vals, const in comps:
                G.add(cols, [-x for x in vals], const)
            q.append(len(comps))

        self.G = G.matrix(ncol)
        self.h = np.array(G.H, dtype=float)
        self.A = A.matrix(ncol)
        self.b = np.array(A.H, dtype=float)
        self.Dims = ConeDims(l, q)

    def _affine(self, cols, vals):
        cols = np.asarray(cols, dtype=int)
        vals = np.asarray(vals, dtype=float)
        k = self.Col[cols]
        free = k >= 0
        const = float(vals[~free] @ self.XFix[cols[~free]])
        return k[free], vals[free], const

    @staticmethod
    def _rotated(acols, avals, aconst, bcols, bvals, bconst, xs):
        """
        Components ((a+b)/sqrt2, (a-b)/sqrt2, x...) of a rotated cone, each as (cols, vals, const).
        """
        acc = {}
        for j, v in zip(acols, avals):
            acc[j] = acc.get(j, (0.0, 0.0))
            acc[j] = (acc[j][0] + v, acc[j][1] + v)
        for j, v in zip(bcols, bvals):
            acc[j] = acc.get(j, (0.0, 0.0))
            acc[j] = (acc[j][0] + v, acc[j][1] - v)
        plus = ([j for j in acc], [acc[j][0] / SQRT2 for j in acc], (aconst + bconst) / SQRT2)
        minus = ([j for j in acc], [acc[j][1] / SQRT2 for j in acc], (aconst - bconst) / SQRT2)
        return [plus, minus] + [(list(c), list(v), k) for c, v, k in xs]

    def _cone_components(self, cone):
        ka, va, ca = self._affine([cone.A], [1.0])
        if cone.B is None:
            kb, vb, cb = [], [], cone.BConst
        else:
            kb, vb, cb = self._affine([cone.B], [1.0])
        xs = []
        for j, coef in zip(cone.Xs, cone.Coefs):
            k, v, c0 = self._affine([j], [coef])
            xs.append((list(k), list(v), c0))
        return self._rotated(list(ka), list(va), ca, list(kb), list(vb), cb, xs)

    def lift(self, x):
        """
        Maps a point of the original program onto the compiled columns.
        """
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.NCol)
        out[:self.NFree] = x[self.Free]
        prog = self.Program
        out[self.EpiCols] = 0.5 * prog.QDiag[self.EpiVars] * x[self.EpiVars] ** 2
        if self.FactorCol is not None:
            fx = prog.QFactor @ x
            out[self.FactorCol] = 0.5 * float(fx @ fx)
        return out

    def recover(self, xc):
        x = self.XFix.copy()
        x[self.Free] = xc[:self.NFree]
        prog = self.Program
        return np.clip(x, prog.Lo, prog.Hi)

    def duals(self, y, z):
        prog = self.Program
        rows = np.full(len(prog.Rows), np.nan)
        for i, m in enumerate(self.RowMap):
            if m is not None:
                kind, r, sign = m
                rows[i] = sign * (y[r] if kind == "A" else z[r])
        lower = np.zeros(prog.NVar)
        upper = np.zeros(prog.NVar)
        for j, r in self.LowerRows.items():
            lower[j] = z[r]
        for j, r in self.UpperRows.items():
            upper[j] = z[r]
        cones = [None if cr is None else z[cr[0]:cr[0] + cr[1]].copy() for cr in self.ConeRows]
        return dict(rows=rows, lower=lower, upper=upper, cones=cones,
            cutoff=None if self.CutoffRow is None else float(z[self.CutoffRow]))


class ConicSolution(object):

    def __init__(self, status, x=None, duals=None, primal_obj=math.inf, dual_obj=-math.inf,
                residuals=None, iterations=0, time=0.0, certificate=None):
        self.Status = status
        self.X = x
        self.Duals = duals or {}
        self.PrimalObj = primal_obj
        self.DualObj = dual_obj
        self.Residuals = residuals or {}
        self.Iterations = iterations
        self.Time = time
        self.Certificate = certificate

    @property
    def usable(self):
        """
        True for Optimal, and for limit exits whose point is feasible and nearly optimal.
        """
        if self.Status == ConicStatus.Optimal:
            return True
        if self.Status in (ConicStatus.IterLimit, ConicStatus.TimeLimit, ConicStatus.Stalled) and self.X is not None:
            r = self.Residuals
            return r.get("pres", 1.0) <= 1e-6 and r.get("dres", 1.0) <= 1e-6 and r.get("rgap", 1.0) <= 1e-6
        return False

    def __str__(self):
        return f"ConicSolution({self.Status.value}, obj={self.PrimalObj:.10g}, dual={self.DualObj:.10g}, it={self.Iterations})"


def _run(cp, ipm_tol, max_iter, time_limit, start=None):
    prog = cp.Program
    if cp.Infeasible is not None:
        logger.debug("%s: infeasible in presolve: %s", prog.Name, cp.Infeasible)
        return ConicSolution(ConicStatus.Infeasible, certificate=0.0)
    if cp.NCol == 0:
        x = cp.recover(np.zeros(0))
        obj = prog.objective(x)
        return ConicSolution(ConicStatus.Optimal, x, cp.duals(np.zeros(0), np.zeros(0)), obj, obj,
            dict(pres=0.0, dres=0.0, gap=0.0, rgap=0.0))
    r = conelp(cp.c, cp.G, cp.h, cp.A, cp.b, cp.Dims, tol=ipm_tol, max_iter=max_iter,
        time_limit=time_limit, start=start)
    status = _IPMStatus[r.Status]
    residuals = dict(pres=r.PRes, dres=r.DRes, gap=r.Gap,
        rgap=abs(r.PCost - r.DCost) / (1.0 + abs(r.PCost)) if np.isfinite(r.PCost) else math.inf)
    if status in (ConicStatus.Infeasible, ConicStatus.Unbounded):
        return ConicSolution(status, None, cp.duals(r.Y, r.Z), residuals=residuals, iterations=r.Iterations,
            time=r.Elapsed, certificate=r.Certificate)
    x = cp.recover(r.X)
    sol = ConicSolution(status, x, cp.duals(r.Y, r.Z), prog.objective(x), r.DCost + cp.Const, residuals,
        r.Iterations, r.Elapsed)
    if status != ConicStatus.Optimal and sol.usable:
        logger.warning("%s: accepting reduced-accuracy solution at %s (pres=%.1e dres=%.1e)",
            prog.Name or "program", status.value, r.PRes, r.DRes)
    return sol

def solve(prog, ipm_tol=1e-8, max_iter=200, time_limit=None):
    """
    Solves the program from the default starting point.

    :param ConicProgram prog: program to solve
    :param float ipm_tol: feasibility and gap tolerance
    :param int max_iter: interior-point iteration limit
    :param time_limit: wall-clock limit in seconds, or None
    :return: ConicSolution
    :raises NumericalBreakdown: when the KKT system cannot be factored
    """
    sol = _run(prog.compile(), ipm_tol, max_iter, time_limit)
    logger.debug("%s: %s", prog.Name or "program", sol)
    return sol

def warm_start(prog, prior, ipm_tol=1e-8, max_iter=200, time_limit=None):
    """
    Solves prog starting from the primal point of a related program's solution.
    Falls back to a cold start when the prior does not fit or the warm run does not settle.
    """
    if prior is None or prior.X is None or len(prior.X) != prog.NVar:
        return solve(prog, ipm_tol, max_iter, time_limit)
    cp = prog.compile()
    if cp.Infeasible is not None or cp.NCol == 0:
        return _run(cp, ipm_tol, max_iter, time_limit)
    x0 = np.clip(prior.X, prog.Lo, prog.Hi)
    sol = _run(cp, ipm_tol, max_iter, time_limit, start=cp.lift(x0))
    if sol.Status in (ConicStatus.Optimal, ConicStatus.Infeasible):
        return sol
    logger.debug("%s: warm start ended with %s, solving cold", prog.Name or "program", sol.Status.value)
    return _run(cp, ipm_tol, max_iter, time_limit)

def read_dump(path):
    """
    Returns the text of a dump written by ConicProgram.dump, for golden-file comparisons.
    """
    with open(path, "rb") as f:
        return to_str(f.read())
