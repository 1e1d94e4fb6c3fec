"""Minimax estimation of linear functionals of exterior Helmholtz Neumann solutions."""
from .errors import (ConfigError, DomainError, MinimaxError, NearFieldError, NegativeSigmaSquared,
                     RegionViolation, SeparationViolation, SingularSystem)
from .geometry import (AnnulusSpec, RegionSpec, arc_grid, curve_grid, make_arc, make_curve, min_separation,
                       winding_number)
from .potentials import assemble_boundary_ops, eval_layer, layer_matrix
from .forward import solve_annulus_dtn, solve_exterior_neumann, solve_exterior_neumann_adjoint
from .minimax_subdomain import SubdomainObservation, SubdomainSetup, estimate_value, solve_zp
from .minimax_surface import ArcObservation, SurfaceObservationSetup, solve_surface_system, surface_estimate
from .minimax_point import PointFunctional, PointObservationSetup, point_estimate, solve_point_system
from .monte_carlo import monte_carlo

__version__ = "0.1.0"
