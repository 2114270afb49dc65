"""Decision-aware active learning with Gaussian-process outcome models.

K independent GP regressors (one per decision), a posterior over which
decision is optimal at a target point, an acquisition criterion minimizing the
expected entropy of that posterior, baselines, and a replication harness.
"""

from ._kernels import BACKEND, USING_NUMBA
from .acquisition import (STRATEGIES, AcquisitionScores, Candidate, DEigConfig,
                          Pool, score_deig, score_dus, score_eig_us, score_teig,
                          select, select_random)
from .decision import (DecisionPosterior, PiConfig, TargetPosterior,
                       bayes_decision, compute_pi_quadrature, decision_entropy,
                       estimate_pi_mc)
from .experiment import (GpConfig, MetricTrace, PotentialOutcomesDataset, Split,
                         SplitSpec, StudyResult, SyntheticConfig,
                         aggregate_traces, generate_synthetic, run_replication,
                         run_study, split_dataset)
from .gp import (ArdSeKernel, GpModel, LatentPosterior, TargetView,
                 fantasy_posterior_at, fit, optimize_hyperparameters,
                 target_view, with_observation)
from .mathcore import (CholeskyFactor, QuadratureRule, cholesky,
                       discrete_entropy, expect_gaussian, gauss_hermite,
                       gaussian_cdf, gaussian_entropy)

__version__ = "0.1.0"
