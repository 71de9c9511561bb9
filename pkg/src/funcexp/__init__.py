"""Space-filling designs and Gaussian-process surrogates for experiments
with scalar and functional (curve-valued) inputs."""

from .bspline import BSplineBasis, FunctionalCurve, basis_matrix, eval_basis, eval_curve, gram_matrix, make_basis
from .design import Design, SaConfig, candidate_set, free_maximin_demo, generalized_lhd, lhd, phi_q, phi_qc
from .errors import DegenerateDesignError, FuncexpError, IllConditionedError
from .gpmodel import ExperimentRecord, GpModel, GpParams, KernelSpec, fit, log_likelihood
from .metric import RunPoint, RunSet, WeightMatrix, combined_dist, functional_dist, weighted_functional_dist
from .testbed import branin, g1, g2

__version__ = "0.1.0"

__all__ = [
    "BSplineBasis", "FunctionalCurve", "basis_matrix", "eval_basis", "eval_curve", "gram_matrix", "make_basis",
    "Design", "SaConfig", "candidate_set", "free_maximin_demo", "generalized_lhd", "lhd", "phi_q", "phi_qc",
    "DegenerateDesignError", "FuncexpError", "IllConditionedError",
    "ExperimentRecord", "GpModel", "GpParams", "KernelSpec", "fit", "log_likelihood",
    "RunPoint", "RunSet", "WeightMatrix", "combined_dist", "functional_dist", "weighted_functional_dist",
    "branin", "g1", "g2",
]
