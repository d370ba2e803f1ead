"""certvote: black-box ensembling of certifiably robust classifiers.

Constituent classifiers answer (label, cert) pairs; this package combines
them by cascading (fast, but its certificate can lie), by uniform/weighted
voting (certificate provably sound given sound constituents), or by a
cascade-over-all-orderings rule, learns voting weights from records, scores
certified robust accuracy, and refutes unsound certificates on 2D toy grids.
"""

from .core import (
    NORM_L2,
    NORM_LINF,
    NORMS,
    VOTE_EPS,
    CertOutput,
    DataError,
    DimensionError,
    GuardError,
    Label,
    PredictionRecord,
    RecordSet,
    VoteTally,
    WeightVector,
    argmax_label,
    infer_num_classes,
    tally,
)
from .ensemble import (
    ENSEMBLER_KINDS,
    CascadeEnsemble,
    PermutationCascadeEnsemble,
    UniformVotingEnsemble,
    WeightedVotingEnsemble,
    apply_ensembler,
    cascade,
    make_ensembler,
    permutation_cascade,
    permutation_cascade_bruteforce,
    uniform_vote,
    weighted_vote,
)
from .io_jsonl import (
    RecordFormatError,
    load_records,
    load_weights,
    save_predictions,
    save_records,
    save_trace_csv,
    save_weights,
)
from .learning import (
    LearnerConfig,
    LearnerTrace,
    exact_objective,
    learn,
    margin,
    objective,
    project_simplex,
    sigma_t,
)
from .metrics import EvalReport, EvalRow, OverlapStats, accuracy, cra, evaluate_all, overlap
from .toy import (
    SCENARIOS,
    LinearClassifier,
    RegionalRho,
    ToyGrid,
    Violation,
    build_example1_fixture,
    certify_linear,
    export_figure,
    find_violations,
    find_violations_from_outputs,
    gen_toy,
    read_grid_csv,
    write_grid_csv,
    write_violations_csv,
)

__version__ = "0.1.0"

__all__ = [
    "NORM_L2",
    "NORM_LINF",
    "NORMS",
    "VOTE_EPS",
    "CertOutput",
    "DataError",
    "DimensionError",
    "GuardError",
    "Label",
    "PredictionRecord",
    "RecordSet",
    "VoteTally",
    "WeightVector",
    "argmax_label",
    "infer_num_classes",
    "tally",
    "ENSEMBLER_KINDS",
    "CascadeEnsemble",
    "PermutationCascadeEnsemble",
    "UniformVotingEnsemble",
    "WeightedVotingEnsemble",
    "apply_ensembler",
    "cascade",
    "make_ensembler",
    "permutation_cascade",
    "permutation_cascade_bruteforce",
    "uniform_vote",
    "weighted_vote",
    "RecordFormatError",
    "load_records",
    "load_weights",
    "save_predictions",
    "save_trace_csv",
    "save_records",
    "save_weights",
    "LearnerConfig",
    "LearnerTrace",
    "exact_objective",
    "learn",
    "margin",
    "objective",
    "project_simplex",
    "sigma_t",
    "EvalReport",
    "EvalRow",
    "OverlapStats",
    "accuracy",
    "cra",
    "evaluate_all",
    "overlap",
    "SCENARIOS",
    "LinearClassifier",
    "RegionalRho",
    "ToyGrid",
    "Violation",
    "build_example1_fixture",
    "certify_linear",
    "export_figure",
    "find_violations",
    "find_violations_from_outputs",
    "gen_toy",
    "read_grid_csv",
    "write_grid_csv",
    "write_violations_csv",
    "__version__",
]
