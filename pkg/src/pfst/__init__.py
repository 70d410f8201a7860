"""Feature selection for classification on the trace criterion ``trace(Sw^-1 Sb)``.

The main entry points are :func:`pfst_select` (parallel forward with early
dropping, re-forward, and backward stages) and the sequential baselines
:func:`forward_select`, :func:`backward_select` and :func:`stepwise_select`.
"""

__version__ = "0.1.0"

from .engine import PfstConfig, pfst_select
from .errors import (
    ConfigError,
    DataError,
    InvalidDataset,
    NoAdmissibleFeature,
    NumericalError,
    PfstError,
    SingularScatter,
    SingularUpdate,
)
from .evaluation import CvResult, LdaModel, kfold_cv, lda_fit, lda_predict
from .greedy import StopRule, backward_select, forward_select, stepwise_select
from .io import load_csv, standardize, write_csv
from .report import SelectionReport
from .scatter import ClassStats, Dataset, compute_class_stats, trace_criterion_direct

__all__ = [
    "ClassStats", "ConfigError", "CvResult", "DataError", "Dataset", "InvalidDataset", "LdaModel",
    "NoAdmissibleFeature", "NumericalError", "PfstConfig", "PfstError", "SelectionReport",
    "SingularScatter", "SingularUpdate", "StopRule", "backward_select", "compute_class_stats",
    "forward_select", "kfold_cv", "lda_fit", "lda_predict", "load_csv", "pfst_select",
    "standardize", "stepwise_select", "trace_criterion_direct", "write_csv",
]
