"""Stokes geometry, large-t transfer asymptotics, and building-map data for
the cyclic equation y^(n) + t w(z) y = 0."""

from .ndiff import (NDifferential, PlanePath, SheetAssignment, continue_roots,
                    find_zeros, flat_length, natural_coord, natural_coords_all,
                    roots_at)
from .odeint import (ScaledMatrix, TransferResult, companion_system,
                     e_correction, exact_constant_transfer, integrate_transfer)
from .jets import Jet, composed_automorphy, m1_matrix, m2_matrix
from .stokesgeo import (PathDecomposition, StokesGraph, StokesRay, build_graph,
                        decompose_path, local_ray_directions, trace_level_arc,
                        trace_ray)
from .wkb import (AsymptoticReport, StokesFactor, WKBFrame, circle_path,
                  corrected_holonomy, e_factor, fit_stokes_factor, frame,
                  growth_exponent, loop_holonomy_exact, model_zero_basis,
                  predicted_transfer, theorem1_residual, zero_rescaling)
from .conemap import (ApartmentVector, ConePoint, SymPoint, apartment_coords,
                      cone_point, ep_t, injectivity_probe, pair_distance,
                      rescaled_distance, route_path, sym_distance)
from .config import ExperimentConfig, Tolerances, load_config

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
