"""Nonparametric two-sample tests for transition probabilities of
nonhomogeneous Markov multistate processes."""

__version__ = "0.1.0"

from .errors import (ComparisonError, DegenerateVarianceError, EstimationError,
                     TransprobError, ValidationError)
from .estimation import (CumulativeIntensityMatrix, MissingnessModel,
                         TransitionProbabilityCurve, aalen_johansen,
                         fit_logistic_missingness, landmark_aalen_johansen,
                         landmark_intensities, nelson_aalen, npmple_intensities,
                         state_occupation)
from .history import (ABSORBED_UNKNOWN, CountingProcessSet, EventGrid,
                      EventHistorySample, StateSpace, SubjectRecord, at_risk_total,
                      build_counting_processes, pooled_event_grid)
from .influence import (InfluenceCurveSet, MartingaleResidualSet, influence_curves,
                        martingale_residuals)
from .simulation import (IllnessDeathConfig, RejectionRateTable, ScenarioConfig,
                         run_scenario, simulate_illness_death, true_p12)
from .twosample import (DifferenceProcess, TestResult, WeightSpec, compare, fit_group,
                        l2_statistic, ks_statistic, linear_statistic, linear_test,
                        multiplier_null_sample, omnibus_test, variance_estimate,
                        weighted_difference)
