"""Monte-Carlo simulator of multi-reader image grading workflows with AI readers."""

__version__ = "0.1.0"

from .analysis import (ArmSummary, EcdfCurve, WelchResult, ecdf, framework_consistency_report, progression_rate,
                       summarize_arms, welch_from_summary, welch_test, worsening_histogram)
from .cohort import PRESETS, Arm, PatientTruth, PopulationSpec, ProgressionSpec, calibrate_population, sample_cohort
from .economics import CostParams, CostReport, cost_sweep, crossover_ratio, expected_cost
from .readers import AIModelSpec, HumanReaderParams, balanced_accuracy, calibrate_human_noise, read_ai, read_human
from .rng import RngStream
from .scoring import Percentile, PoolingPolicy, Threshold, is_disagreement, pool_consensus, total_score, worsening
from .workflow import (FrameworkKind, WorkflowConfig, WorkflowOutcome, escalation_rates, run_ai_ir, run_ai_sr,
                       run_hdr, run_trial)
