"""Long-term propagation of resonant asteroids through planet orbit crossings."""

__version__ = "0.1.0"

from .errors import (BifurcationNearby, Collision, ConfigError, CrossingDegenerate, DegenerateConfig,
                     Divergent, EphemerisParseError, EventAccumulation, NumericalFailure, OutOfRange,
                     RescrossError, SmoothingFails)
from .kepler import (DAYS_PER_YEAR, GAUSS_K, DelaunayElements, KeplerianElements, PhysicalConstants,
                     ResonanceSpec, ResonantState, cartesian_state, delaunay_to_keplerian,
                     delaunay_to_resonant, keplerian_to_delaunay, resonant_to_delaunay, solve_kepler)
from .ephemeris import (EphemerisTable, FrozenEphemeris, QuasiPeriodicModel, default_model, load_table,
                        planet_elements)
from .geometry import (MinimumPoint, TwoOrbitConfig, a_matrix, critical_points, delta_h,
                       geometry_gradients, local_minima, min_distance, signed_distance)
from .quadrature import QuadratureConfig
from .hamiltonian import (NormalFormConfig, PlanetContext, averaged_term, dirichlet_kernel,
                          gradient_extended, gradient_regular, h0_value_and_gradient, hamiltonian,
                          jump_nonresonant, jump_resonant, resonant_coeffs)
from .propagator import (CrossingEvent, GeneralizedSolution, IntegratorConfig, SecularField,
                         distance_history, propagate_generalized, propagate_plain, rkg_step)
from .nbody import (EnsembleSpec, ensemble_shifts, ensemble_stats, integrate_ensemble, integrate_full)
from .diagnostics import UnimodularChart, k_partial, kbar, procedure_one, procedure_two

__all__ = [name for name in dir() if not name.startswith("_")]
