"""Geometrized Newtonian gravity laboratory.

Classical (Newton-Cartan) spacetimes in adapted charts, the two-way
dictionary between Newtonian potentials and curved derivative operators,
dust bodies transported by their congruences, slice integrals for momentum
and centers of mass, and the experiment harness tying them together.
"""

from .tensor import (
    DIM,
    Box,
    Tensor,
    TensorField,
    GridField,
    constant_field,
    sobol_events,
)
from .spacetime import (
    ClassicalSpacetime,
    DerivativeOperator,
    CurvatureReport,
    adapted_flat_spacetime,
    coordinate_operator,
    compose_operators,
    covariant_derivative,
    riemann,
    riemann_components,
    classify_vector,
)
from .trautman import (
    NewtonianModel,
    GeometrizedModel,
    PoissonMismatchError,
    RecoveryError,
    geometrize,
    recover,
    flat_operator_on_curve,
    harmonic_trap_model,
    point_mass_model,
    uniform_field_model,
    vacuum_model,
)
from .geodesics import (
    WorldLine,
    integrate_geodesic,
    integrate_forced,
    geodesic_residual,
    reparametrize_by_time,
)
from .matter import (
    CausticError,
    RadialBumpProfile,
    TubeDescriptor,
    DustCongruence,
    MassMomentumField,
    build_dust_body,
    mass_density,
    check_conditions,
)
from .flux import (
    SliceError,
    Hypersurface,
    VolumeElement,
    FlatFrame,
    ConstantCobasis,
    PositionField,
    frame_for,
    body_frame,
    slice_through,
    momentum_flux,
    angular_momentum_flux,
    total_mass,
    center_of_mass,
    com_worldline,
    check_J_derivative,
    in_support_hull,
    slice_report,
    write_slice_csv,
)

__version__ = "0.1.0"
