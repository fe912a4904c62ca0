"""Charged-particle point source in a uniform magnetic field.

Exact (Landau-channel) and closed-orbit descriptions of the density and
current emitted by an isotropic, monoenergetic point source, with tools to
render maps and profiles of both.
"""

from .errors import (CausticDivergence, ContractViolation, DomainError, InvalidParameterError,
                     MagsourceError, NotApplicableError, SlowConvergenceError, ThresholdError)
from .scaling import PhysicalParams, ScaledPoint, ScalingContext, build_context, to_scaled, from_scaled
from .quantum import (current, density, free_reference, green, landau_state, source_limit_current,
                      total_current)
from .semiclassical import (SummationPolicy, sc_current, sc_density, uniform_pair, wavefunction,
                            periodic_zeta_partial)
from .fieldmaps import GridSpec, Field2D, sample_map, sample_profile

__version__ = "1.0.0"
