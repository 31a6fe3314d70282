"""Poincare inequalities, maximal functions and curve connectivity on finite metric measure spaces."""
from .connectivity import (AlphaProfile, AlphaRow, ObstacleFunction, SearchConfig,
                           alpha_estimate, alpha_given_g, alpha_profile,
                           ap_connectivity_constant, definition_ap_constant, exhaustive_alpha,
                           make_obstacle, scale_to_admissible, sublinearity_check)
from .curves import (CurvePath, curve_integral, curve_length, enumerate_paths_oracle,
                     min_obstruction_cost, min_obstruction_path, pareto_frontier,
                     upper_gradient_check)
from .errors import *  # noqa: F401,F403
from .gallery import (make_complete, make_grid, make_path, make_theta, make_weighted_line,
                      power_weight_line, snowflake_view)
from .maximal import max_max_margin, maximal_function, weak_type_margin
from .poincare import (PIReport, analyze, characterization_consistency, lip_field, pi_constant,
                       pi_ratio, pointwise_pi_margin)
from .selfimprove import (IterationParams, crucial_inequality_check, default_params,
                          iteration_step, kz_empirical_scan, kz_epsilon_bound,
                          kz_epsilon_from_CA, level_decomposition, select_level)
from .space import (Ball, MetricMeasureSpace, ball, build_space, doubling_constant, load_csv,
                    load_json, quasiconvexity_constant, save_csv, save_json)
from .weights import (WeightedLine, ap_integral_constant, average_bound_margin,
                      maximal_bound_ratio, set_bound_constant)

__version__ = "0.1.0"
