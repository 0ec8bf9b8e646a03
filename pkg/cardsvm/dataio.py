import os, json, math, logging
import numpy as np
import pandas as pd
from .core import Dataset, ParseError, MissingValueError, SingleClassError, FeatureIndexError, TooFewSamples, \
    ValidationError, relative_gap
from .util import to_str

logger = logging.getLogger(__name__)

def _as_number(s):
    try:
        return float(s)
    except ValueError:
        return None

def _map_labels(values, positive_label, where):
    """
    Maps raw label strings onto +1/-1, positive_label becoming +1.
    """
    distinct = sorted(set(values))
    if len(distinct) > 2:
        raise SingleClassError(f"label {where} has {len(distinct)} distinct values: {distinct[:5]}", SingleClassError.NotBinary)
    if len(distinct) < 2:
        raise SingleClassError(f"label {where} has a single value {distinct}", SingleClassError.SingleClass)
    if positive_label is None:
        numeric = [_as_number(v) for v in distinct]
        if None in numeric:
            raise ValidationError("positive_label is required for non-numeric labels", labels=distinct)
        positive = distinct[int(np.argmax(numeric))]
    else:
        positive = str(positive_label).strip()
        if positive not in distinct:
            num = _as_number(positive)
            matches = [v for v in distinct if num is not None and _as_number(v) == num]
            if not matches:
                raise ValidationError("positive_label does not occur in the label column", positive_label=positive_label,
                    labels=distinct)
            positive = matches[0]
    return np.array([1.0 if v == positive else -1.0 for v in values]), positive

def load_csv(path, label_column=None, positive_label=None, feature_columns=None):
    """
    Loads a CSV file with a header row.

    :param label_column: column name or position of the labels, default the last column
    :param positive_label: label value mapped to +1
    :param feature_columns: optional list of feature column names, default all other columns
    :return: Dataset
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as e:
        raise ParseError(f"malformed CSV: {e}")
    except pd.errors.EmptyDataError:
        raise ParseError("empty CSV file", row=1)
    columns = list(df.columns)
    if label_column is None:
        label_column = columns[-1]
    elif not isinstance(label_column, str) or label_column not in columns:
        try:
            label_column = columns[int(label_column)]
        except (ValueError, IndexError):
            raise ValidationError("label column not found", label_column=label_column)
    features = [c for c in columns if c != label_column] if feature_columns is None else list(feature_columns)
    missing_cols = [c for c in features if c not in columns]
    if missing_cols:
        raise ValidationError("feature columns not found", columns=missing_cols)

    cells = df[features].apply(lambda col: col.str.strip())
    empty = cells == ""
    if empty.values.any():
        i, j = np.argwhere(empty.values)[0]
        raise MissingValueError("missing value", row=int(i) + 2, col=features[j])
    X = cells.apply(pd.to_numeric, errors="coerce")
    bad = X.isna().values
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ParseError(f"not a number: {cells.iat[i, j]!r}", row=int(i) + 2, col=features[j])

    labels = df[label_column].str.strip()
    if (labels == "").any():
        i = int(np.flatnonzero((labels == "").values)[0])
        raise MissingValueError("missing label", row=i + 2, col=label_column)
    y, positive = _map_labels(list(labels), positive_label, f"column {label_column!r}")
    logger.debug("loaded %s: %d rows, %d features, positive label %r", path, len(y), len(features), positive)
    return Dataset(X.values.astype(float), y, features,
        dict(source=str(path), format="csv", label_column=label_column, positive_label=positive))

def read_libsvm(path, n_hint=None):
    """
    Parses "<label> idx:val ..." lines with 1-based feature indices.

    :param n_hint: number of features; an index above it is an error
    :return: (list of raw label strings, dense m x n array)
    """
    with open(path, "rb") as f:
        text = to_str(f.read())
    labels, rows = [], []
    width = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        labels.append(parts[0])
        entries = {}
        for pos, token in enumerate(parts[1:], 2):
            idx, sep, val = token.partition(":")
            try:
                if not sep:
                    raise ValueError(token)
                j, v = int(idx), float(val)
            except ValueError:
                raise ParseError(f"bad feature entry {token!r}", row=lineno, col=pos)
            if j < 1:
                raise ParseError(f"feature index must be 1-based, got {j}", row=lineno, col=pos)
            if n_hint is not None and j > n_hint:
                raise FeatureIndexError(f"feature index {j} exceeds n={n_hint}", row=lineno, col=pos)
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {val!r}", row=lineno, col=pos)
            entries[j - 1] = v
            width = max(width, j)
        rows.append(entries)
    if not rows:
        raise ParseError("no samples in file", row=1)
    n = n_hint if n_hint is not None else max(width, 1)
    X = np.zeros((len(rows), n))
    for i, entries in enumerate(rows):
        for j, v in entries.items():
            X[i, j] = v
    return labels, X

def load_libsvm(path, n_hint=None, positive_label=None):
    """
    Loads a libsvm file into a dense Dataset. Labels in {-1, 0, +1} map by sign (0 is negative);
    other label strings need positive_label.
    """
    labels, X = read_libsvm(path, n_hint)
    numeric = [_as_number(s) for s in labels]
    if None not in numeric and set(numeric) <= {-1.0, 0.0, 1.0} and positive_label is None:
        y = np.where(np.array(numeric) > 0, 1.0, -1.0)
        if len(set(y)) < 2:
            raise SingleClassError("labels contain a single class", SingleClassError.SingleClass)
    else:
        y, positive_label = _map_labels(labels, positive_label, "field")
    return Dataset(X, y, None, dict(source=str(path), format="libsvm", n_hint=n_hint))


class ScalingRecord(object):

    def __init__(self, mean, scale, constant):
        self.Mean = np.asarray(mean, dtype=float)
        self.Scale = np.asarray(scale, dtype=float)
        self.Constant = np.asarray(constant, dtype=bool)

    def apply(self, data):
        """
        Applies the stored affine map to a Dataset (returns a Dataset) or a raw matrix.
        """
        X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
        if X.shape[1] != len(self.Mean):
            raise ValidationError("scaling record does not match the number of features", n=len(self.Mean), got=X.shape[1])
        Z = (X - self.Mean) / self.Scale
        Z[:, self.Constant] = 0.0
        if isinstance(data, Dataset):
            return Dataset(Z, data.Y, data.FeatureNames, dict(data.Provenance, standardized=True))
        return Z

    def to_dict(self):
        return dict(mean=self.Mean.tolist(), scale=self.Scale.tolist(), constant=np.flatnonzero(self.Constant).tolist())

def standardize(data):
    """
    Centers every column and divides by its population standard deviation.
    Constant columns become zeros and are flagged in the record.

    :return: (Dataset, ScalingRecord)
    """
    if data.m < 2:
        raise TooFewSamples("standardization needs at least two samples", m=data.m)
    mean = data.X.mean(axis=0)
    sd = data.X.std(axis=0)
    constant = sd <= 1e-12 * (1.0 + np.abs(mean))
    scale = np.where(constant, 1.0, sd)
    if np.any(constant):
        logger.info("constant columns mapped to zero: %s", np.flatnonzero(constant).tolist())
    record = ScalingRecord(mean, scale, constant)
    return record.apply(data), record


class FoldPlan(object):

    def __init__(self, k, assignments, seed, stratified=True):
        self.K = int(k)
        self.Assignments = np.asarray(assignments, dtype=int)
        self.Seed = seed
        self.Stratified = stratified

    def __str__(self):
        return f"FoldPlan(k={self.K}, m={len(self.Assignments)}, seed={self.Seed})"

    def indices(self, fold):
        """
        (train indices, validation indices) for the fold.
        """
        val = np.flatnonzero(self.Assignments == fold)
        train = np.flatnonzero(self.Assignments != fold)
        return train, val

    def split(self, data, fold):
        train, val = self.indices(fold)
        return data.subset(train), data.subset(val)

def stratified_folds(data, k, seed=0):
    """
    Assigns samples to k folds class by class: each class is shuffled with the seed and dealt
    round-robin, continuing the deal across classes.

    :return: FoldPlan
    """
    k = int(k)
    if k < 2 or k > data.m:
        raise TooFewSamples("number of folds must be in [2, m]", k=k, m=data.m)
    smallest = min(data.positives, data.negatives)
    if k > smallest:
        logger.warning("%d folds for a class of %d samples: some folds miss that class", k, smallest)
    rng = np.random.default_rng(seed)
    assignments = np.empty(data.m, dtype=int)
    offset = 0
    for label in (1.0, -1.0):
        idx = np.flatnonzero(data.Y == label)
        rng.shuffle(idx)
        assignments[idx] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    return FoldPlan(k, assignments, seed, True)


class ResultRecord(object):

    Schema = 1
    Fields = ["dataset", "method", "C", "B", "M", "obj", "lb", "ub", "gap", "time_s", "features",
        "acc_train", "acc_val", "schema"]

    def __init__(self, dataset, method, C, B, M=None, obj=None, lb=None, ub=None, time_s=None, features=(),
                acc_train=None, acc_val=None, config=None):
        self.Dataset = dataset
        self.Method = method
        self.C = C
        self.B = B
        self.M = M
        self.Obj = obj
        self.LB = lb
        self.UB = ub
        self.TimeS = time_s
        self.Features = sorted(int(j) for j in features)
        self.AccTrain = acc_train
        self.AccVal = acc_val
        self.Config = config

    @property
    def gap(self):
        if self.LB is None or self.UB is None:
            return None
        return relative_gap(self.UB, self.LB)

    def to_dict(self):
        clean = lambda v: None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v
        d = dict(dataset=self.Dataset, method=self.Method, C=self.C, B=self.B, M=clean(self.M), obj=clean(self.Obj),
            lb=clean(self.LB), ub=clean(self.UB), gap=clean(self.gap), time_s=self.TimeS, features=self.Features,
            acc_train=self.AccTrain, acc_val=self.AccVal, schema=self.Schema)
        if self.Config is not None:
            d["config"] = self.Config
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json() + "\n")

    def row(self):
        d = self.to_dict()
        d["features"] = ";".join(str(j) for j in self.Features)
        return {k: d[k] for k in self.Fields}

def append_csv(records, path):
    """
    Appends records to a CSV summary, writing the header when the file is new.
    """
    df = pd.DataFrame([r.row() for r in records], columns=ResultRecord.Fields)
    exists = os.path.exists(path) and os.path.getsize(path) > 0
    df.to_csv(path, mode="a", header=not exists, index=False)
