"""Deterministic discrete-velocity simulator of the hard-sphere Boltzmann
equation in bounded convex domains with specular reflection."""

from .velocity import (Field, Moments, VelocityGrid, build_grid, bracket,
                       load_field, maxwellian, maxwellian_field, moments,
                       save_field, tail_mass, weight, weighted_sup_norm)
from .collision import (AngularQuadrature, CollisionOperator, CollisionParams,
                        build_angular, default_operator, post_collision,
                        symmetry_reduction)
from .geometry import (Domain, ball, build_cycle, certify_axis,
                       certify_convexity, ellipsoid, make_domain, normal,
                       specular_reflect, superquadric)
from .homogeneous import (HomogeneousTrajectory, bimodal_radial,
                          h_functional, radial_symmetrize, solve_homogeneous)
from .transport import (CycleCache, NonContractionError, PhaseGrid,
                        PicardResult, build_cycle_cache, mild_step,
                        picard_local_solve, weighted_norm)
from .linearized import (AdmissibilityError, ConservationBasis,
                         InstabilityError, SplitState,
                         check_conservation_constraints,
                         enforce_conservation, estimate_decay_rate,
                         project_P, solve_perturbation, solve_unsplit,
                         step_split)
from .diagnostics import (DecayReport, IncomparableBaselineError,
                          build_report, compare_regression,
                          freeze_regression, make_fingerprint,
                          refinement_sweep)
from .pipeline import (RunReport, ScenarioConfig, list_scenarios,
                       run_named_scenario, run_weakly_inhomogeneous,
                       stock_config)

__all__ = [
    "Field", "Moments", "VelocityGrid", "build_grid", "bracket",
    "load_field", "maxwellian", "maxwellian_field", "moments", "save_field",
    "tail_mass", "weight", "weighted_sup_norm",
    "AngularQuadrature", "CollisionOperator", "CollisionParams",
    "build_angular", "default_operator", "post_collision",
    "symmetry_reduction",
    "Domain", "ball", "build_cycle", "certify_axis", "certify_convexity",
    "ellipsoid", "make_domain", "normal", "specular_reflect", "superquadric",
    "HomogeneousTrajectory", "bimodal_radial", "h_functional",
    "radial_symmetrize", "solve_homogeneous",
    "CycleCache", "NonContractionError", "PhaseGrid", "PicardResult",
    "build_cycle_cache", "mild_step", "picard_local_solve", "weighted_norm",
    "AdmissibilityError", "ConservationBasis", "InstabilityError",
    "SplitState", "check_conservation_constraints", "enforce_conservation",
    "estimate_decay_rate", "project_P", "solve_perturbation",
    "solve_unsplit", "step_split",
    "DecayReport", "IncomparableBaselineError", "build_report",
    "compare_regression", "freeze_regression", "make_fingerprint",
    "refinement_sweep",
    "RunReport", "ScenarioConfig", "list_scenarios", "run_named_scenario",
    "run_weakly_inhomogeneous", "stock_config",
]

__version__ = "0.1.0"
