"""Locality-sensitive hashing toolkit and a data-aware two-level near-neighbor index."""

from .ball_carving import (AnalyticBounds, BallCarvingFamily, BallCarvingFunction, BallCarvingParams,
                           L_bound, U_bound, default_t, sample_ball_carving)
from .classic import ClassicIndex, classic_build, classic_query
from .families import (OVERFLOW, CollisionEstimate, HashFunction, LshFamily, TensoredFamily,
                       TensoredFunction, estimate_collision, gaussian_tail, gaussian_tail_bounds,
                       is_overflow, rho_from_probs, tensor)
from .gaussian_lsh import (SphericalFamily, SphericalFunction, SphericalParams, ideal_collision_probability,
                           orthant_prob, predicted_log_inv_p, predicted_rho, sample_spherical,
                           tan_sq_half_angle)
from .geometry import (Ball, Dataset, JlMap, apply_jl, diameter, distance, jl_target_dim, jung_radius_bound,
                       normalize_to_radius, normalized_distance_sq, sample_jl, smallest_enclosing_ball)
from .two_level import (InfeasibleParameters, ParamMode, QEstimate, QueryResult, TwoLevelIndex,
                        TwoLevelParams, Variant, build, choose_k, choose_k_l, choose_T, choose_T_pivot,
                        estimate_Q, load_index, optimal_tau, pivot_rho_bound, query, rho_two_level,
                        save_index)

__version__ = "0.1.0"
