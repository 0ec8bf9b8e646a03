from .core import Dataset, ProblemConfig, PrimalPoint, IndicatorVector, IndicatorKind, RelaxationSolution, \
    MipResult, MipStatus, SVMError, ValidationError, DimensionError, ParseError, MissingValueError, \
    SingleClassError, FeatureIndexError, TooFewSamples, GuardExceeded, NumericalBreakdown, \
    objective, min_slacks, l0_norm, check_point, relative_gap
from .dataio import load_csv, load_libsvm, standardize, stratified_folds, FoldPlan, ScalingRecord, ResultRecord, \
    append_csv
from .conicqp import ConicProgram, ConicSolution, ConicStatus, Sense, solve, warm_start
from .svm import solve_svm, brute_force_fs, accuracy
from .relaxations import solve_boxmp, solve_dsmp, solve_dscop, solve_dscomp, psd3_membership, \
    theorem1_threshold, bound_m_range
from .mip import BranchSpec, Formulation, solve_cop_restricted, solve_sr_dlmp, solve_cop_full, solve_bigmp_full
from .heuristics import Strategy, local_search, kernel_search, tighten_big_m, heuristic_procedure
from .exact import exact_procedure

from .version import Version

__version__ = Version
