"""Shared fixtures.

The expensive dust bodies are session-scoped: one conserved drifting body
and one static body on the flat chart, plus one orbiting body in the
point-source geometry.  Module tests that only need qualitative behavior
build their own small bodies instead of these.
"""

import numpy as np
import pytest

from nclab import (
    Box,
    adapted_flat_spacetime,
    build_dust_body,
    flat_operator_on_curve,
    geometrize,
    harmonic_trap_model,
    integrate_geodesic,
    point_mass_model,
)

BOX = Box([-2.0] * 4, [2.0] * 4)
POINT_BOX = Box([-2.0] * 4, [2.0] * 4, exclude_radius=0.3)

ODE_TOL = 1e-10


@pytest.fixture(scope="session")
def flat_st():
    return adapted_flat_spacetime(BOX)


@pytest.fixture(scope="session")
def harmonic_geo():
    return geometrize(harmonic_trap_model(0.15, BOX))


@pytest.fixture(scope="session")
def point_geo():
    return geometrize(point_mass_model(1.0, POINT_BOX))


@pytest.fixture(scope="session")
def drift_body(flat_st):
    """Conserved body drifting at unit speed on the flat chart."""
    line = integrate_geodesic(flat_st.op, [-0.3, 1.0, 0.0, 0.0],
                              [1.0, 0.0, 1.0, 0.0], 0.6, ODE_TOL)
    return build_dust_body(flat_st, line, 0.2, nodes_across=24)


@pytest.fixture(scope="session")
def static_body(flat_st):
    """Conserved body at rest on the flat chart."""
    line = integrate_geodesic(flat_st.op, [-0.3, 0.4, 0.3, 0.0],
                              [1.0, 0.0, 0.0, 0.0], 0.6, ODE_TOL)
    return build_dust_body(flat_st, line, 0.2, nodes_across=24)


@pytest.fixture(scope="session")
def orbit_curve(point_geo):
    """Circular-orbit geodesic of the point-source geometry."""
    st = point_geo.spacetime
    return integrate_geodesic(st.op, [-0.3, 1.0, 0.0, 0.0],
                              [1.0, 0.0, 1.0, 0.0], 0.6, ODE_TOL)


@pytest.fixture(scope="session")
def orbit_body(point_geo, orbit_curve):
    return build_dust_body(point_geo.spacetime, orbit_curve, 0.2,
                           nodes_across=24)


@pytest.fixture(scope="session")
def orbit_cop(point_geo, orbit_curve):
    """Flat operator agreeing with the curved one along the orbit."""
    return flat_operator_on_curve(point_geo.spacetime, orbit_curve)


def pick_slices(m, count=5, margin=0.08):
    """Evenly thinned stored level times, trimmed by a window fraction."""
    times = m.level_times
    window = float(times[-1] - times[0])
    inner = times[(times >= times[0] + margin * window)
                  & (times <= times[-1] - margin * window)]
    idx = np.unique(np.round(np.linspace(0, len(inner) - 1, count)).astype(int))
    return inner[idx]
