"""POD-compressed Gaussian-process surrogates for uncertainty quantification."""

__version__ = "0.1.0"

from .design import (
    DesignMatrix,
    Parameter,
    ParameterSpace,
    SaltelliDesign,
    isr3d_space,
    load_space,
    normalize_to_unit,
    saltelli_design,
    scale_to_space,
    sobol_points,
)
from .gp import GaussianProcess, Hyperparameters, fit_gp
from .pod import PODBasis, compute_pod
from .models import Dataset, generate_dataset, get_builtin, load_dataset, save_dataset
from .sensitivity import SobolIndices, estimate_sobol, replicated_sobol
from .surrogate import PodGpSurrogate, load_model, save_model, train_surrogate
from .uqstats import UqSummary, empirical_pdf, exceedance, summarize
from .validation import CvReport, cross_validate, pod_snapshot_sweep

__all__ = [
    "DesignMatrix",
    "Parameter",
    "ParameterSpace",
    "SaltelliDesign",
    "isr3d_space",
    "load_space",
    "normalize_to_unit",
    "saltelli_design",
    "scale_to_space",
    "sobol_points",
    "GaussianProcess",
    "Hyperparameters",
    "fit_gp",
    "PODBasis",
    "compute_pod",
    "PodGpSurrogate",
    "load_model",
    "save_model",
    "train_surrogate",
    "Dataset",
    "generate_dataset",
    "get_builtin",
    "load_dataset",
    "save_dataset",
    "SobolIndices",
    "estimate_sobol",
    "replicated_sobol",
    "UqSummary",
    "empirical_pdf",
    "exceedance",
    "summarize",
    "CvReport",
    "cross_validate",
    "pod_snapshot_sweep",
]
