"""Value of information analysis for decision models: EVPI, EVPPI, EVSI
(regression, importance sampling, Gaussian approximation, moment
matching and a nested Monte Carlo oracle), prior effective sample size
and the expected net benefit of sampling."""

__version__ = "0.1.0"

from .distributions import ParameterSpec
from .enbs import CostModel, EnbsCurve, PopulationSpec, enbs_curve, population_scale
from .errors import (DataError, DegeneracyError, DiagnosticsError, DimensionError, DomainError,
                     EstimationError, FormatError, MethodError, ModelError, NoConjugateUpdate,
                     NumericError, ParseError, SchemaError, VoiError)
from .ess import EssEstimate, ess_direct, ess_from_posterior_means, ess_from_summary
from .estimate import VoiEstimate, expected_max_gain
from .evppi import estimate_evppi
from .evsi import (MmVarianceLedger, PosteriorMeanMatrix, evsi_from_posterior_means, evsi_ga, evsi_is,
                   evsi_mm, evsi_oracle, evsi_rb)
from .metamodel import Metamodel, fit_metamodel, predict, residual_diagnostics
from .model import (DecisionModel, FutureDataset, Outcome, StudyDesign, SummaryStatistic,
                    conjugate_update, log_likelihood, run_psa, simulate_future_dataset,
                    summarize_dataset)
from .psa import (AugmentedPsaDataset, DecisionUncertaintyCurves, IncrementalNetBenefitMatrix,
                  NetBenefitMatrix, PsaDataset, Strategy, WtpThreshold, compute_incremental_net_benefit,
                  compute_net_benefit, decision_uncertainty_curves, evpi, load_psa_dataset,
                  save_psa_dataset)
