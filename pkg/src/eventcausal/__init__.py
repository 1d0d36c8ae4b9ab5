"""Causal event-study toolkit: simulation, counterfactual estimators and inference."""
from .dgp import Assignment, FileFactors, SimDesign, SimTruth, SyntheticFatTail, Timing, generate
from .effects import (
    BiasDecomposition,
    EffectSeries,
    aggregate_event_time,
    analytic_bias,
    geometric_att,
    geometric_correction,
    long_run_drift,
)
from .estimators import CohortEffect, EstimatorSpec, estimate
from .inference import IntervalEstimate, bootstrap_se_gsynth, coverage, placebo_se, ttest_se
from .montecarlo import McReport, bias_scatter, run_design, run_table
from .panel import CohortWeights, EventSchedule, FactorSeries, ReturnsPanel, to_excess

__all__ = [
    "Assignment", "BiasDecomposition", "CohortEffect", "CohortWeights", "EffectSeries", "EstimatorSpec",
    "EventSchedule", "FactorSeries", "FileFactors", "IntervalEstimate", "McReport", "ReturnsPanel",
    "SimDesign", "SimTruth", "SyntheticFatTail", "Timing", "aggregate_event_time", "analytic_bias",
    "bias_scatter", "bootstrap_se_gsynth", "coverage", "estimate", "generate", "geometric_att",
    "geometric_correction", "long_run_drift", "placebo_se", "run_design", "run_table", "to_excess", "ttest_se",
]
