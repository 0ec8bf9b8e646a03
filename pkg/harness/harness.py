import sys, os, json, getopt, logging
import pandas as pd
import yaml

from cardsvm import ProblemConfig, MipStatus, SVMError, ValidationError, GuardExceeded, \
    load_csv, load_libsvm, standardize, stratified_folds, ResultRecord, append_csv, \
    solve_svm, brute_force_fs, accuracy, solve_boxmp, solve_dsmp, solve_dscop, solve_dscomp, theorem1_threshold, \
    solve_cop_full, solve_bigmp_full, Strategy, local_search, kernel_search, tighten_big_m, heuristic_procedure, \
    exact_procedure
from cardsvm.exact import MSource
from cardsvm.workers import run_parallel
from cardsvm.util import Deadline

logger = logging.getLogger(__name__)

Usage = """
Usage:
$ cardsvm <command> [options]

    commands:
        solve       run one method and write its result record
        relax       compare relaxation lower bounds with the SVM optimum
        cv          stratified k-fold accuracy grid over C and B
        oracle      compare every method with subset enumeration (n <= 20)

    options:
        -c <config.yaml>            if -c is missing environment variable CARDSVM_CFG will be used
        -v                          debug logging
        --dataset <path>
        --format csv|libsvm         default: guessed from the file extension
        --label-col <name|index>    CSV label column, default: last column
        --positive-label <value>    label mapped to +1
        --standardize               center and scale every feature
        --method <name>             svm, bigmp, cop, boxmp, dsmp, dscop, dscomp, local-search,
                                    kernel-search, heuristic, exact, oracle
        --strategy LS|KS            heuristic used by "heuristic" and "exact", default KS
        --B <budget> --C <weight> --M <big-M>
        --tighten                   derive M from a heuristic upper bound
        --k <excess> --rho <bucket size> --s <features added per iteration>
        --time-limit <seconds> --sub-time-limit <seconds> --gap-stop <percent>
        --folds <k> --C-grid <c,c,...> --B-grid <b,b,...> --seed <int>
        --threads <n>
        --out <path> --trace <path>
        --summary <path>            append the result and heuristic stage records to a CSV summary
"""

LongOptions = ["dataset=", "format=", "label-col=", "positive-label=", "standardize", "method=", "strategy=",
    "B=", "C=", "M=", "tighten", "k=", "rho=", "s=", "time-limit=", "sub-time-limit=", "gap-stop=",
    "folds=", "C-grid=", "B-grid=", "seed=", "threads=", "out=", "trace=", "summary=", "help"]

ConfigEnv = "CARDSVM_CFG"

ExitOK = 0
ExitTimeLimit = 2
ExitError = 3
ExitUsage = 64
ExitGuard = 65

FlagParams = {
    "--M":              ("M", float),
    "--k":              ("heur_k", int),
    "--rho":            ("heur_rho", int),
    "--s":              ("exact_s", int),
    "--sub-time-limit": ("sub_time_limit_s", float),
    "--gap-stop":       ("mip_gap_stop", float),
    "--seed":           ("seed", int),
    "--threads":        ("threads", int),
}

NeedM = ("bigmp", "boxmp", "dsmp", "dscomp")
FitMethods = ("svm", "bigmp", "cop", "local-search", "kernel-search", "heuristic", "exact", "oracle")
OracleTolerance = 1e-5


class UsageError(Exception):
    pass


class Outcome(object):

    def __init__(self, point=None, lb=None, ub=None, status=None, M=None, trace=None, records=None):
        self.Point = point
        self.LB = lb
        self.UB = ub
        self.Status = status
        self.M = M
        self.Trace = trace or []
        self.Records = list(records or [])

    @property
    def objective(self):
        if self.Point is None:
            return self.LB
        return self.Point.Objective

    def exit_code(self):
        if self.Status is None or self.Status in (MipStatus.Optimal, MipStatus.GapStop):
            return ExitOK
        if self.Status == MipStatus.TimeLimit and self.Point is not None:
            return ExitTimeLimit
        return ExitError


def _number(opts, flag, convert, default=None):
    value = opts.get(flag)
    if value is None:
        return default
    try:
        return convert(value)
    except (TypeError, ValueError):
        raise UsageError(f"{flag} expects a number, got {value!r}")

def _grid(opts, flag, convert, default):
    text = opts.get(flag)
    if text is None:
        return default
    try:
        values = [convert(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects a comma-separated list of numbers, got {text!r}")
    if not values:
        raise UsageError(f"{flag} is empty")
    return values

def parse(argv):
    """
    :return: (command or None for help, options dict, configuration dict from the YAML file)
    """
    try:
        opts, args = getopt.gnu_getopt(argv, "c:vh?", LongOptions)
    except getopt.GetoptError as e:
        raise UsageError(str(e))
    opts = dict(opts)
    if "-h" in opts or "-?" in opts or "--help" in opts:
        return None, opts, {}
    if not args:
        raise UsageError("command is missing")
    command = args[0]
    if command not in Commands:
        raise UsageError(f"unknown command {command!r}")
    if len(args) > 1:
        raise UsageError(f"unexpected arguments: {' '.join(args[1:])}")
    file_cfg = {}
    path = opts.get("-c") or os.environ.get(ConfigEnv)
    if path:
        if not os.path.isfile(path):
            raise UsageError(f"configuration file {path} not found")
        file_cfg = yaml.load(open(path, "r"), Loader=yaml.SafeLoader) or {}
        if not isinstance(file_cfg, dict):
            raise UsageError(f"configuration file {path} must hold a mapping")
    return command, opts, file_cfg

def setup_logging(opts, file_cfg):
    section = file_cfg.get("logging") or {}
    level = "DEBUG" if "-v" in opts else str(section.get("level", "WARNING")).upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
        format=section.get("format", "%(asctime)s %(name)s %(levelname)s: %(message)s"))
    logging.getLogger().setLevel(getattr(logging, level, logging.WARNING))

def output_path(opts, file_cfg, key):
    section = file_cfg.get("output") or {}
    return opts.get("--" + key) or section.get(key)

def load_dataset(opts, file_cfg):
    path = opts.get("--dataset") or file_cfg.get("dataset")
    if not path:
        raise UsageError("--dataset is required")
    if not os.path.isfile(path):
        raise UsageError(f"dataset {path} not found")
    fmt = opts.get("--format") or file_cfg.get("format")
    if fmt is None:
        fmt = "libsvm" if os.path.splitext(path)[1].lower() in (".libsvm", ".svm", ".txt") else "csv"
    positive = opts.get("--positive-label", file_cfg.get("positive_label"))
    if fmt == "csv":
        data = load_csv(path, opts.get("--label-col", file_cfg.get("label_column")), positive)
    elif fmt == "libsvm":
        data = load_libsvm(path, None, positive)
    else:
        raise UsageError(f"unknown dataset format {fmt!r}")
    if "--standardize" in opts or file_cfg.get("standardize"):
        data, _ = standardize(data)
    logger.info("dataset: %s", data)
    return data

def problem_config(opts, file_cfg, C, B):
    params = {}
    for key, value in file_cfg.items():
        if key in ProblemConfig.Defaults:
            params[key] = value
        elif key not in ("C", "B", "logging", "output", "dataset", "format", "label_column", "positive_label",
                    "standardize", "method", "strategy"):
            logger.warning("ignoring unknown configuration key %r", key)
    for flag, (name, convert) in FlagParams.items():
        value = _number(opts, flag, convert)
        if value is not None:
            params[name] = value
    limit = _number(opts, "--time-limit", float)
    if limit is not None:
        params["time_limit_s"] = limit
        params["global_time_limit_s"] = limit
        params["heur_time_limit_s"] = min(params.get("heur_time_limit_s", ProblemConfig.Defaults["heur_time_limit_s"]),
            limit)
    return ProblemConfig(C, B, **params)

def scalar_cb(opts, file_cfg):
    C = _number(opts, "--C", float, file_cfg.get("C"))
    B = _number(opts, "--B", int, file_cfg.get("B"))
    if C is None or B is None:
        raise UsageError("--C and --B are required")
    return C, B

def method_name(opts, file_cfg, default=None):
    method = opts.get("--method") or file_cfg.get("method") or default
    if method is None:
        raise UsageError("--method is required")
    if method not in Methods:
        raise UsageError(f"unknown method {method!r}")
    return method

def strategy(opts, file_cfg):
    try:
        return Strategy(opts.get("--strategy") or file_cfg.get("strategy") or "KS")
    except ValueError:
        raise UsageError("--strategy must be LS or KS")

def resolve_m(method, data, C, B, cfg, tighten, strat):
    """
    Big-M for the methods that need one: the configured value, or the one derived from a
    heuristic upper bound when tighten is set.
    """
    if cfg.M is not None:
        return cfg.M
    if tighten:
        heur = heuristic_procedure(data, C, B, strat, cfg, cfg.heur_time_limit_s)
        logger.info("M=%.8g derived from heuristic UB %.10g", heur.Metadata["M"], heur.UB)
        return heur.Metadata["M"]
    if method in NeedM:
        raise UsageError(f"method {method} needs --M or --tighten")
    return None


def run_svm(data, C, B, cfg, M, strat):
    point = solve_svm(data, C, None, cfg.ipm_tol, cfg.ipm_max_iter, zero_tol=cfg.zero_tol)
    return Outcome(point, point.Objective, point.Objective, MipStatus.Optimal)

def run_cop(data, C, B, cfg, M, strat):
    r = solve_cop_full(data, C, B, cfg.time_limit_s, cfg)
    return Outcome(r.Incumbent, r.LB, r.UB, r.Status)

def run_bigmp(data, C, B, cfg, M, strat):
    r = solve_bigmp_full(data, C, B, M, cfg.time_limit_s, cfg)
    return Outcome(r.Incumbent, r.LB, r.UB, r.Status, M)

def relaxation_runner(solver, with_m):
    def run_relaxation(data, C, B, cfg, M, strat):
        args = (data, C, B, M) if with_m else (data, C, B)
        r = solver(*args, ipm_tol=cfg.ipm_tol, max_iter=cfg.ipm_max_iter)
        return Outcome(None, r.LowerBound, None, None, M)
    return run_relaxation

def run_local_search(data, C, B, cfg, M, strat):
    h = local_search(data, C, B, cfg.heur_k, None, cfg, cfg.heur_time_limit_s)
    return Outcome(h.Point, None, h.UB, records=h.Records)

def run_kernel_search(data, C, B, cfg, M, strat):
    h = kernel_search(data, C, B, min(cfg.heur_rho, data.n), cfg.sub_time_limit_s, None, cfg, cfg.heur_time_limit_s)
    trace = [dict(bucket=i + 1, UB=ub) for i, ub in enumerate(h.Trace)]
    return Outcome(h.Point, None, h.UB, trace=trace, records=h.Records)

def run_heuristic(data, C, B, cfg, M, strat):
    h = heuristic_procedure(data, C, B, strat, cfg, cfg.heur_time_limit_s)
    trace = [dict(bucket=i + 1, UB=ub) for i, ub in enumerate(h.Trace)]
    return Outcome(h.Point, h.Metadata.get("relaxation_lb"), h.UB, M=h.Metadata["M"], trace=trace,
        records=h.Records)

def run_exact(data, C, B, cfg, M, strat):
    trace = []
    source = MSource.User if M is not None else MSource.Prop1
    r = exact_procedure(data, C, B, cfg.exact_s, strat, cfg, source, M, cfg.global_time_limit_s, trace)
    return Outcome(r.Incumbent, r.LB, r.UB, r.Status, r.Metadata["M"], trace, r.Metadata.get("stage_records"))

def run_enumeration(data, C, B, cfg, M, strat):
    _, point = brute_force_fs(data, C, B, nworkers=cfg.threads, ipm_tol=cfg.ipm_tol, max_iter=cfg.ipm_max_iter,
        zero_tol=cfg.zero_tol)
    return Outcome(point, point.Objective, point.Objective, MipStatus.Optimal)

Methods = {
    "svm":              run_svm,
    "cop":              run_cop,
    "bigmp":            run_bigmp,
    "boxmp":            relaxation_runner(solve_boxmp, True),
    "dsmp":             relaxation_runner(solve_dsmp, True),
    "dscop":            relaxation_runner(solve_dscop, False),
    "dscomp":           relaxation_runner(solve_dscomp, True),
    "local-search":     run_local_search,
    "kernel-search":    run_kernel_search,
    "heuristic":        run_heuristic,
    "exact":            run_exact,
    "oracle":           run_enumeration,
}

def run_method(method, data, C, B, cfg, tighten=False, strat=Strategy.KernelSearch):
    cfg.validate(data.n)
    if method in NeedM:
        M = resolve_m(method, data, C, B, cfg, tighten, strat)
    else:
        M = cfg.M if method == "exact" else None
    return Methods[method](data, C, B, cfg, M, strat)


def write_csv(df, path):
    if path:
        df.to_csv(path, index=False)
        logger.info("wrote %d rows to %s", len(df), path)
    else:
        df.to_csv(sys.stdout, index=False)

def cmd_solve(opts, file_cfg):
    method = method_name(opts, file_cfg)
    data = load_dataset(opts, file_cfg)
    C, B = scalar_cb(opts, file_cfg)
    cfg = problem_config(opts, file_cfg, C, B)
    deadline = Deadline()
    outcome = run_method(method, data, C, B, cfg, "--tighten" in opts, strategy(opts, file_cfg))
    point = outcome.Point
    record = ResultRecord(data.Provenance.get("source", ""), method, C, B, M=outcome.M, obj=outcome.objective,
        lb=outcome.LB, ub=outcome.UB, time_s=deadline.elapsed(),
        features=[] if point is None else sorted(point.Support),
        acc_train=None if point is None else accuracy(point, data), config=cfg.to_dict())
    out = output_path(opts, file_cfg, "out")
    if out:
        record.save(out)
    else:
        print(record.to_json())
    trace = output_path(opts, file_cfg, "trace")
    if trace:
        write_csv(pd.DataFrame(outcome.Trace), trace)
    summary = output_path(opts, file_cfg, "summary")
    if summary:
        append_csv(outcome.Records + [record], summary)
        logger.info("appended %d records to %s", len(outcome.Records) + 1, summary)
    code = outcome.exit_code()
    if code != ExitOK:
        logger.warning("%s finished with status %s", method, outcome.Status.value)
    return code

def cmd_relax(opts, file_cfg):
    data = load_dataset(opts, file_cfg)
    C, B = scalar_cb(opts, file_cfg)
    cfg = problem_config(opts, file_cfg, C, B)
    cfg.validate(data.n)
    solver_args = dict(ipm_tol=cfg.ipm_tol, max_iter=cfg.ipm_max_iter)
    M = resolve_m("relax", data, C, B, cfg, "--tighten" in opts, strategy(opts, file_cfg))
    table = {"SVM_opt": solve_svm(data, C, **solver_args).Objective}
    if M is not None:
        table["BoxMP"] = solve_boxmp(data, C, B, M, **solver_args).LowerBound
    table["DSCoP"] = solve_dscop(data, C, B, **solver_args).LowerBound
    if M is not None:
        table["DSCoMP"] = solve_dscomp(data, C, B, M, **solver_args).LowerBound
    table["theorem1_threshold"] = theorem1_threshold(data, C, B, **solver_args)
    out = output_path(opts, file_cfg, "out")
    if out and out.endswith(".csv"):
        write_csv(pd.DataFrame(list(table.items()), columns=["method", "bound"]), out)
        return ExitOK
    record = ResultRecord(data.Provenance.get("source", ""), "relax", C, B, M=M, lb=table["DSCoP"],
        config=cfg.to_dict())
    d = record.to_dict()
    d["bounds"] = table
    text = json.dumps(d, indent=2)
    if out:
        with open(out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    return ExitOK

def fit_row(method, train, val, fold, C, B, cfg, tighten, strat):
    deadline = Deadline()
    outcome = run_method(method, train, C, B, cfg, tighten, strat)
    point = outcome.Point
    return dict(fold=fold, C=C, B=B, acc_train=accuracy(point, train), acc_val=accuracy(point, val),
        obj=point.Objective, features=";".join(str(j) for j in sorted(point.Support)), time_s=deadline.elapsed())

def summarize(grid):
    """
    For every B, the C with the best validation accuracy averaged over folds.
    Ties go to the smallest C.
    """
    means = grid.groupby(["B", "C"], as_index=False)["acc_val"].mean()
    rows = []
    for B, group in means.groupby("B"):
        best = group.sort_values(["acc_val", "C"], ascending=[False, True]).iloc[0]
        rows.append(dict(B=int(B), best_C=float(best["C"]), mean_acc_val=float(best["acc_val"])))
    return pd.DataFrame(rows, columns=["B", "best_C", "mean_acc_val"])

def cmd_cv(opts, file_cfg):
    method = method_name(opts, file_cfg, "cop")
    if method not in FitMethods:
        raise UsageError(f"method {method} does not produce a classifier")
    data = load_dataset(opts, file_cfg)
    C_grid = _grid(opts, "--C-grid", float, [10.0 ** r for r in range(-3, 4)])
    B_default = [_number(opts, "--B", int, file_cfg.get("B"))]
    B_grid = _grid(opts, "--B-grid", int, None if B_default[0] is None else B_default)
    if B_grid is None:
        raise UsageError("--B-grid or --B is required")
    k = _number(opts, "--folds", int, 10)
    cfg = problem_config(opts, file_cfg, C_grid[0], B_grid[0])
    configs = {}
    for C in C_grid:
        for B in B_grid:
            configs[(C, B)] = cfg.replace(C=C, B=B).validate(data.n)
    if method in NeedM and cfg.M is None and "--tighten" not in opts:
        raise UsageError(f"method {method} needs --M or --tighten")
    if k > min(data.positives, data.negatives):
        raise ValidationError("every validation fold needs both classes: --folds must not exceed the smaller class",
            folds=k, positives=data.positives, negatives=data.negatives)
    plan = stratified_folds(data, k, cfg.seed)
    logger.info("cross-validation: %s, %d grid points", plan, len(configs))
    tighten, strat = "--tighten" in opts, strategy(opts, file_cfg)
    jobs = []
    for fold in range(plan.K):
        train, val = plan.split(data, fold)
        for (C, B), c in configs.items():
            jobs.append(lambda train=train, val=val, fold=fold, C=C, B=B, c=c:
                fit_row(method, train, val, fold, C, B, c, tighten, strat))
    grid = pd.DataFrame(run_parallel(jobs, cfg.threads))
    grid = grid.sort_values(["B", "C", "fold"]).reset_index(drop=True)
    summary = summarize(grid)
    out = output_path(opts, file_cfg, "out")
    if out:
        write_csv(grid, out)
        write_csv(summary, os.path.splitext(out)[0] + "_summary.csv")
    else:
        write_csv(grid, None)
        print()
        write_csv(summary, None)
    return ExitOK

def oracle_rows(data, C, B, cfg, strat):
    subset, opt = brute_force_fs(data, C, B, ipm_tol=cfg.ipm_tol, max_iter=cfg.ipm_max_iter, zero_tol=cfg.zero_tol)
    exact_cfg = cfg.replace(mip_gap_stop=min(cfg.mip_gap_stop, 1e-4))
    M = tighten_big_m(data, C, B, opt.Objective, cfg).M
    runs = [
        ("cop", True, lambda: run_cop(data, C, B, cfg, None, strat)),
        ("bigmp", True, lambda: run_bigmp(data, C, B, cfg, M, strat)),
        ("exact", True, lambda: run_exact(data, C, B, exact_cfg, None, strat)),
        ("local-search", False, lambda: run_local_search(data, C, B, cfg, None, strat)),
        ("kernel-search", False, lambda: run_kernel_search(data, C, B, cfg, None, strat)),
        ("heuristic", False, lambda: run_heuristic(data, C, B, cfg, None, strat)),
    ]
    scale = max(abs(opt.Objective), 1e-12)
    rows = []
    for name, exact, job in runs:
        outcome = job()
        obj = outcome.objective
        err = (obj - opt.Objective) / scale
        passed = abs(err) <= OracleTolerance if exact else err >= -OracleTolerance
        rows.append(dict(C=C, B=B, method=name, exact=exact, obj=obj, opt=opt.Objective, rel_err=err,
            passed=bool(passed), opt_features=";".join(str(j) for j in sorted(subset))))
    return rows

def cmd_oracle(opts, file_cfg):
    data = load_dataset(opts, file_cfg)
    if data.n > 20:
        raise GuardExceeded("oracle enumeration needs n <= 20", n=data.n)
    C_grid = _grid(opts, "--C-grid", float, None) or [_number(opts, "--C", float, file_cfg.get("C"))]
    B_grid = _grid(opts, "--B-grid", int, None) or [_number(opts, "--B", int, file_cfg.get("B"))]
    if None in C_grid or None in B_grid:
        raise UsageError("--C/--C-grid and --B/--B-grid are required")
    cfg = problem_config(opts, file_cfg, C_grid[0], B_grid[0])
    strat = strategy(opts, file_cfg)
    jobs = []
    for C in C_grid:
        for B in B_grid:
            c = cfg.replace(C=C, B=B).validate(data.n)
            jobs.append(lambda C=C, B=B, c=c: oracle_rows(data, C, B, c, strat))
    rows = [row for rows in run_parallel(jobs, cfg.threads) for row in rows]
    report = pd.DataFrame(rows, columns=["C", "B", "method", "exact", "obj", "opt", "rel_err", "passed",
        "opt_features"])
    write_csv(report, output_path(opts, file_cfg, "out"))
    failed = report[~report["passed"]]
    for _, row in failed.iterrows():
        logger.error("oracle mismatch: %s C=%g B=%d obj=%.10g opt=%.10g", row["method"], row["C"], row["B"],
            row["obj"], row["opt"])
    return ExitOK if failed.empty else ExitError

Commands = {
    "solve":    cmd_solve,
    "relax":    cmd_relax,
    "cv":       cmd_cv,
    "oracle":   cmd_oracle,
}

def run(argv=None):
    """
    Runs one harness command and returns its exit code.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, opts, file_cfg = parse(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        print(Usage, file=sys.stderr)
        return ExitUsage
    if command is None:
        print(Usage)
        return ExitOK
    setup_logging(opts, file_cfg)
    try:
        return Commands[command](opts, file_cfg)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return ExitUsage
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return ExitUsage
    except GuardExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return ExitGuard
    except SVMError as e:
        logger.error("%s failed: %s", command, e)
        print(f"error: {e}", file=sys.stderr)
        return ExitError

def main():
    sys.exit(run())

if __name__ == "__main__":
    main()
