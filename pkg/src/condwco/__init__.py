"""Conditional weighted composition operators on finite atomic measure spaces."""
from . import kernels
from .conditional import CEReport, cond_exp, verify_ce_axioms
from .dynamics import (
    CriterionSchedule,
    DecayReport,
    KitaiReport,
    direct_sum,
    kitai_check,
    necessary_quantities,
    orbit,
    periodic_orbit_bound,
    sufficient_quantities,
    topmix_quantities,
    transitivity_witness,
)
from .errors import (
    CapExceeded,
    ConfigurationError,
    DivisionDomainError,
    DomainError,
    HypothesisNotMet,
    IntegrityError,
    InvalidInput,
    UnsupportedOperation,
)
from .measure_space import FiniteMeasureSpace, Partition, lp_norm, simple_net
from .operators import ConditionalWCO, T_power, cocycle, iterate, right_inverse_D
from .scenarios import LineExampleParams, ScenarioSpec, build_line_example, run_scenario
from .transform import BackwardMap, Transformation

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
