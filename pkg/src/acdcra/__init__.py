"""Admission-controlled, delay-constrained random access: simulator,
estimators, tree resolution and closed-form dimensioning."""

from .admission import (AdmissionDecision, CapacityLedger, QoSClass, decide,
                        decide_buffered, release)
from .analytics import (MultiplicityDistribution, RaqModel,
                        activation_probability, collision_probability,
                        expected_parallelization, markov_steady_state,
                        multiplicity_distribution, poisson_adjusted_pc,
                        raq_blocking)
from .channel import (COLLISION, IDLE, SINGLETON, ResourceGrid,
                      TernaryOutcomeVector, contend, observe)
from .estimator import (EstimationError, SelectionProfile, apply_pessimism,
                        ccp_expected_draws, heuristic_partition, ml_partition,
                        mle_stirling, mle_zanella, pessimism_factor,
                        solve_power_profile)
from .harness import (ExperimentConfig, MetricsReport, aggregate,
                      estimator_benchmark, load_config, run_one)
from .protocol import AcdcWorld, DabWorld, acdc_slot, dab_slot, run_scenario
from .traffic import TrafficModel, arrivals
from .tree import (ParallelizationLUT, ResolutionJob, build_lut, bundled_table,
                   lut_query, run_to_completion)

__version__ = "0.1.0"
