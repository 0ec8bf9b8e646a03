import math
from enum import Enum
import numpy as np

ZERO_TOL = 1e-6

class SVMError(Exception):

    def __init__(self, message, **details):
        self.Message = message
        self.Details = details

    def __str__(self):
        out = f"{self.__class__.__name__}: {self.Message}"
        if self.Details:
            out += " (" + ", ".join(f"{k}={v}" for k, v in self.Details.items()) + ")"
        return out

class ValidationError(SVMError):
    pass

class DimensionError(ValidationError):
    pass

class ParseError(SVMError):

    def __init__(self, message, row=None, col=None):
        SVMError.__init__(self, message, row=row, col=col)
        self.Row = row
        self.Col = col

class MissingValueError(ParseError):
    pass

class SingleClassError(SVMError):

    SingleClass = "SingleClass"
    NotBinary = "NotBinary"

    def __init__(self, message, kind="SingleClass"):
        SVMError.__init__(self, message, kind=kind)
        self.Kind = kind

class FeatureIndexError(SVMError, IndexError):
    pass

class TooFewSamples(SVMError):
    pass

class GuardExceeded(SVMError):
    pass

class NumericalBreakdown(SVMError):
    pass


class Dataset(object):

    def __init__(self, X, y, feature_names=None, provenance=None):
        """
        Immutable labelled sample matrix.

        :param X: m x n array of real features
        :param y: m labels, each exactly -1 or +1
        :param list feature_names: optional n identifiers
        :param dict provenance: source path and preprocessing record
        """
        X = np.array(X, dtype=float)
        y = np.array(y, dtype=float).ravel()
        if X.ndim != 2:
            raise DimensionError("X must be a 2-dimensional array", shape=X.shape)
        m, n = X.shape
        if m < 1 or n < 1:
            raise DimensionError("dataset needs at least one sample and one feature", shape=X.shape)
        if y.shape[0] != m:
            raise DimensionError("label vector length does not match the number of samples", m=m, labels=y.shape[0])
        if not np.all(np.isfinite(X)):
            raise ValidationError("X contains NaN or infinite entries")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValidationError("labels must be exactly -1 or +1")
        if not (np.any(y > 0) and np.any(y < 0)):
            raise SingleClassError("both classes must be present", SingleClassError.SingleClass)
        if feature_names is not None:
            feature_names = [str(f) for f in feature_names]
            if len(feature_names) != n:
                raise DimensionError("feature_names length does not match n", n=n, names=len(feature_names))
        X.setflags(write=False)
        y.setflags(write=False)
        self.X = X
        self.Y = y
        self.FeatureNames = feature_names
        self.Provenance = dict(provenance or {})

    def __str__(self):
        src = self.Provenance.get("source", "-")
        return f"Dataset(m={self.m}, n={self.n}, positives={self.positives}, source={src})"

    @property
    def m(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def positives(self):
        return int(np.sum(self.Y > 0))

    @property
    def negatives(self):
        return int(np.sum(self.Y < 0))

    def restrict(self, features):
        """
        Returns the dataset with only the listed feature columns, in the given order.
        """
        features = list(features)
        names = None if self.FeatureNames is None else [self.FeatureNames[j] for j in features]
        return Dataset(self.X[:, features].reshape(self.m, len(features)), self.Y, names,
            dict(self.Provenance, restricted_to=features))

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.X[rows], self.Y[rows], self.FeatureNames, self.Provenance)

    def with_labels(self, y):
        return Dataset(self.X, y, self.FeatureNames, self.Provenance)


class ProblemConfig(object):

    Defaults = dict(
        M = None,
        eps_feas = 1e-8,
        eps_rel_gap = 1e-6,
        mip_gap_stop = 0.01,            # percent
        time_limit_s = 3600.0,
        heur_k = 0,
        heur_rho = 10,
        exact_s = 1,
        sub_time_limit_s = 60.0,
        heur_time_limit_s = 600.0,
        sr_time_limit_s = 1800.0,
        global_time_limit_s = 3600.0,
        seed = 0,
        zero_tol = ZERO_TOL,
        int_tol = 1e-5,
        ipm_tol = 1e-8,
        ipm_max_iter = 200,
        max_nodes = None,
        bnb_guard = 64,
        threads = 1,
    )

    def __init__(self, C, B, **params):
        unknown = set(params) - set(self.Defaults)
        if unknown:
            raise ValidationError("unknown configuration parameters: " + ", ".join(sorted(unknown)))
        self.C = float(C)
        self.B = int(B)
        for name, value in self.Defaults.items():
            setattr(self, name, params.get(name, value))
        if self.M is not None:
            self.M = float(self.M)
        self.validate()

    def validate(self, n=None):
        if not (self.C > 0 and math.isfinite(self.C)):
            raise ValidationError("C must be a positive real", C=self.C)
        if self.B < 1:
            raise ValidationError("budget B must be at least 1", B=self.B)
        if self.M is not None and not self.M > 0:
            raise ValidationError("big-M must be positive", M=self.M)
        if not self.heur_rho >= 1:
            raise ValidationError("Kernel Search bucket size rho must be at least 1", rho=self.heur_rho)
        for name in ("eps_feas", "eps_rel_gap", "mip_gap_stop", "zero_tol", "int_tol", "ipm_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive", value=getattr(self, name))
        if n is not None:
            if self.B > n:
                raise ValidationError("budget B must not exceed the number of features", B=self.B, n=n)
            if not 0 <= self.heur_k <= n - self.B:
                raise ValidationError("Local Search excess k must be in [0, n-B]", k=self.heur_k, n=n, B=self.B)
            if not 1 <= self.exact_s <= n:
                raise ValidationError("exact procedure parameter s must be in [1, n]", s=self.exact_s, n=n)
        return self

    def replace(self, **params):
        d = self.to_dict()
        d.update(params)
        return ProblemConfig.from_dict(d)

    def to_dict(self):
        d = {"C": self.C, "B": self.B}
        for name in self.Defaults:
            d[name] = getattr(self, name)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        try:
            C, B = d.pop("C"), d.pop("B")
        except KeyError as e:
            raise ValidationError(f"configuration is missing {e.args[0]}")
        return ProblemConfig(C, B, **{k: v for k, v in d.items() if v is not None or k in ("M", "max_nodes")})

    def __str__(self):
        return f"ProblemConfig(C={self.C}, B={self.B}, M={self.M})"


class PrimalPoint(object):

    def __init__(self, w, b, xi, C, zero_tol=ZERO_TOL):
        """
        A hyperplane (w, b) with slacks xi and its penalized objective.

        :param w: n weights
        :param float b: intercept
        :param xi: m nonnegative slacks
        :param float C: misclassification weight the objective is evaluated with
        """
        w = np.array(w, dtype=float).ravel()
        xi = np.array(xi, dtype=float).ravel()
        if np.any(xi < 0):
            if np.min(xi) < -1e-12:
                raise ValidationError("slacks must be nonnegative", min_xi=float(np.min(xi)))
            xi = np.maximum(xi, 0.0)
        w.setflags(write=False)
        xi.setflags(write=False)
        self.W = w
        self.Bias = float(b)
        self.Xi = xi
        self.C = float(C)
        self.ZeroTol = zero_tol
        self.Objective = 0.5 * float(np.dot(w, w)) + self.C * float(np.sum(xi))
        self.Support = frozenset(int(j) for j in np.flatnonzero(np.abs(w) > zero_tol))

    @staticmethod
    def from_wb(w, b, data, C, zero_tol=ZERO_TOL):
        """
        Builds the point with the componentwise-minimal slacks for (w, b).
        """
        return PrimalPoint(w, b, min_slacks(w, b, data), C, zero_tol)

    def __str__(self):
        return f"PrimalPoint(obj={self.Objective:.8g}, support={sorted(self.Support)}, b={self.Bias:.6g})"

    @property
    def n(self):
        return len(self.W)

    def decision(self, X):
        return np.asarray(X, dtype=float) @ self.W + self.Bias


class IndicatorKind(Enum):
    Select = "v_select"
    Deselect = "u_deselect"


class IndicatorVector(object):

    def __init__(self, values, kind, int_tol=1e-5):
        values = np.clip(np.array(values, dtype=float).ravel(), 0.0, 1.0)
        values.setflags(write=False)
        if not isinstance(kind, IndicatorKind):
            kind = IndicatorKind(kind)
        self.Values = values
        self.Kind = kind
        self.IntTol = int_tol
        self.Integral = bool(np.all(np.minimum(values, 1.0 - values) <= int_tol))

    def to_select(self):
        if self.Kind == IndicatorKind.Select:
            return self
        return IndicatorVector(1.0 - self.Values, IndicatorKind.Select, self.IntTol)

    def to_deselect(self):
        if self.Kind == IndicatorKind.Deselect:
            return self
        return IndicatorVector(1.0 - self.Values, IndicatorKind.Deselect, self.IntTol)

    @property
    def u(self):
        return self.to_deselect().Values

    @property
    def v(self):
        return self.to_select().Values

    def __str__(self):
        return f"IndicatorVector({self.Kind.value}, sum={self.Values.sum():.6g}, integral={self.Integral})"


class RelaxationSolution(object):

    def __init__(self, point, indicator, diag_w, stats=None, metadata=None, lower_bound=None):
        """
        :param lower_bound: certified bound (the dual objective of the solved program); defaults to
            the value of the relaxed point
        """
        diag_w = np.maximum(np.array(diag_w, dtype=float).ravel(), 0.0)
        diag_w.setflags(write=False)
        self.Point = point
        self.Indicator = indicator
        self.DiagW = diag_w
        self.Stats = dict(stats or {})
        self.Metadata = dict(metadata or {})
        self.Value = 0.5 * float(np.sum(diag_w)) + point.C * float(np.sum(point.Xi))
        self.LowerBound = self.Value
        if lower_bound is not None and math.isfinite(lower_bound):
            self.LowerBound = min(float(lower_bound), self.Value)

    def __str__(self):
        return f"RelaxationSolution(lb={self.LowerBound:.8g}, {self.Indicator})"


class MipStatus(Enum):
    Optimal = "Optimal"
    TimeLimit = "TimeLimit"
    Infeasible = "Infeasible"
    GapStop = "GapStop"


class MipResult(object):

    def __init__(self, incumbent, assignment, lb, ub, status, nodes=0, metadata=None):
        self.Incumbent = incumbent
        self.Assignment = None if assignment is None else dict(assignment)
        self.LB = float(lb)
        self.UB = float(ub)
        self.Status = status
        self.Nodes = int(nodes)
        self.Metadata = dict(metadata or {})

    @property
    def gap(self):
        return relative_gap(self.UB, self.LB)

    @property
    def objective(self):
        return None if self.Incumbent is None else self.Incumbent.Objective

    @property
    def support(self):
        return frozenset() if self.Incumbent is None else self.Incumbent.Support

    def __str__(self):
        return f"MipResult(status={self.Status.value}, lb={self.LB:.8g}, ub={self.UB:.8g}, gap={self.gap:.3g}, nodes={self.Nodes})"


def relative_gap(ub, lb):
    if not math.isfinite(ub) or not math.isfinite(lb):
        return math.inf
    return max(ub - lb, 0.0) / max(abs(ub), 1e-12)

def ordering(key, descending=False, resolution=1e-7):
    """
    Feature order by key, ties (within resolution) broken by the smaller index.
    """
    key = np.asarray(key, dtype=float)
    q = np.round(key / resolution)
    if descending:
        q = -q
    return np.lexsort((np.arange(len(key)), q))

def _vector(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError(f"{name} must be a vector", shape=x.shape)
    return x

def objective(point, C, data=None):
    """
    Recomputes 1/2 ||w||^2 + C sum(xi) for the point.
    """
    w = _vector(point.W, "w")
    xi = _vector(point.Xi, "xi")
    if data is not None and (len(w) != data.n or len(xi) != data.m):
        raise DimensionError("point does not match the dataset", n=data.n, m=data.m, w=len(w), xi=len(xi))
    return 0.5 * float(np.dot(w, w)) + float(C) * float(np.sum(xi))

def min_slacks(w, b, data):
    w = _vector(w, "w")
    if len(w) != data.n:
        raise DimensionError("w does not match the number of features", n=data.n, w=len(w))
    return np.maximum(0.0, 1.0 - data.Y * (data.X @ w + float(b)))

def l0_norm(w, zero_tol=ZERO_TOL):
    if not zero_tol > 0:
        raise ValidationError("zero_tol must be positive", zero_tol=zero_tol)
    return int(np.sum(np.abs(_vector(w, "w")) > zero_tol))

def check_point(point, data, B=None, eps_feas=1e-8, zero_tol=ZERO_TOL):
    """
    Returns the list of violated properties of a candidate FS-SVM point (empty when the point is valid).
    """
    problems = []
    if len(point.W) != data.n or len(point.Xi) != data.m:
        return ["dimension mismatch"]
    if np.any(point.Xi < 0):
        problems.append("negative slack")
    margins = data.Y * (data.X @ point.W + point.Bias)
    if np.any(margins < 1.0 - point.Xi - eps_feas):
        problems.append(f"margin violation {float(np.max(1.0 - point.Xi - margins)):.3g}")
    if B is not None and l0_norm(point.W, zero_tol) > B:
        problems.append(f"cardinality {l0_norm(point.W, zero_tol)} > {B}")
    recomputed = objective(point, point.C)
    if abs(recomputed - point.Objective) > 1e-10 * max(1.0, abs(recomputed)):
        problems.append("objective mismatch")
    return problems
