"""Classical spacetimes: metric health, operators, and curvature."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nclab import (
    Box,
    adapted_flat_spacetime,
    classify_vector,
    compose_operators,
    constant_field,
    coordinate_operator,
    covariant_derivative,
    riemann,
    riemann_components,
    sobol_events,
)

BOX = Box([-2.0] * 4, [2.0] * 4)


class TestAdaptedChart:
    def test_flat_metric_residuals_vanish(self, flat_st):
        res = flat_st.metric_residuals(n=300)
        assert res["orthogonality"] == 0.0
        assert res["signature_kernel"] == 0.0
        assert res["signature_positive"] == pytest.approx(1.0)
        assert res["temporal_compatibility"] == 0.0
        assert res["spatial_compatibility"] == 0.0

    def test_metric_components(self, flat_st):
        ev = sobol_events(BOX, 16)
        t = flat_st.temporal.sample(ev)
        h = flat_st.spatial.sample(ev)
        assert np.allclose(t, [1.0, 0.0, 0.0, 0.0])
        assert np.allclose(h, np.diag([0.0, 1.0, 1.0, 1.0]))

    def test_with_operator_keeps_metrics(self, flat_st, point_geo):
        swapped = flat_st.with_operator(point_geo.spacetime.op)
        assert swapped.temporal is flat_st.temporal
        assert swapped.op is point_geo.spacetime.op


class TestClassifyVector:
    def test_timelike(self, flat_st):
        c = classify_vector(flat_st, [0.0, 0.5, 0.0, 0.0], [1.0, 3.0, 0.0, 0.0])
        assert c.kind == "timelike"
        assert c.temporal_length == pytest.approx(1.0)

    def test_spacelike_length(self, flat_st):
        c = classify_vector(flat_st, [0.0] * 4, [0.0, 3.0, 4.0, 0.0])
        assert c.kind == "spacelike"
        assert c.spatial_length == pytest.approx(5.0)

    @given(scale=st.floats(min_value=0.1, max_value=10.0, allow_nan=False))
    @settings(max_examples=20, deadline=None)
    def test_spacelike_length_is_homogeneous(self, flat_st, scale):
        v = np.array([0.0, 1.0, -2.0, 2.0])
        base = classify_vector(flat_st, [0.0] * 4, v)
        scaled = classify_vector(flat_st, [0.0] * 4, scale * v)
        assert scaled.spatial_length == pytest.approx(scale * base.spatial_length)


class TestOperators:
    def test_coordinate_operator_is_trivial(self):
        op = coordinate_operator(BOX)
        ev = sobol_events(BOX, 8)
        assert np.allclose(op.coefficients(ev), 0.0)
        assert op.spatially_trivial()

    def test_compose_adds_differences(self, point_geo):
        base = coordinate_operator(POINT_BOX := point_geo.spacetime.box)
        curved = compose_operators(base, point_geo.spacetime.op.difference)
        ev = sobol_events(POINT_BOX, 32, margin=0.1)
        assert np.allclose(curved.coefficients(ev),
                           point_geo.spacetime.op.coefficients(ev))

    def test_compose_rejects_asymmetric_difference(self):
        comp = np.zeros((4, 4, 4))
        comp[1, 0, 2] = 1.0  # not symmetric in the two covariant slots
        bad = constant_field((1, 2), comp, BOX)
        with pytest.raises(ValueError):
            compose_operators(coordinate_operator(BOX), bad)

    def test_acceleration_contracts_velocity(self, point_geo):
        op = point_geo.spacetime.op
        ev = sobol_events(point_geo.spacetime.box, 8, margin=0.2)
        v = np.tile([1.0, 0.1, 0.0, 0.0], (8, 1))
        acc = op.acceleration(ev, v)
        C = op.coefficients(ev)
        expect = np.einsum("qanm,qn,qm->qa", C, v, v)
        assert np.allclose(acc, expect)


class TestCompatibility:
    def test_metrics_parallel_under_both_operators(self, flat_st, point_geo):
        st_curved = point_geo.spacetime
        for st_ in (flat_st, st_curved):
            ev = sobol_events(st_.box, 100, margin=0.1)
            dt = covariant_derivative(st_.op, st_.temporal).sample(ev)
            dh = covariant_derivative(st_.op, st_.spatial).sample(ev)
            assert np.max(np.abs(dt)) < 1e-12
            assert np.max(np.abs(dh)) < 1e-12

    def test_curved_spacetime_metric_residuals(self, point_geo, harmonic_geo):
        for geo in (point_geo, harmonic_geo):
            res = geo.spacetime.metric_residuals(n=300)
            for key in ("orthogonality", "signature_kernel",
                        "temporal_compatibility", "spatial_compatibility"):
                assert res[key] < 1e-6, key
            assert abs(res["signature_positive"] - 1.0) < 1e-6


class TestCurvature:
    def test_flat_operator_riemann_vanishes(self, flat_st):
        ev = sobol_events(BOX, 50)
        assert np.max(np.abs(riemann_components(flat_st.op, ev))) == 0.0

    def test_point_source_curvature_structure(self, point_geo):
        st_ = point_geo.spacetime
        ev = sobol_events(st_.box, 150, margin=0.1)
        rep = riemann(st_.op, st_, ev)
        # vacuum region: trace-free Ricci and the recoverability symmetries
        assert np.max(np.abs(rep.ricci())) < 1e-8
        assert rep.residuals["pair_symmetry"] < 1e-8
        assert rep.residuals["mixed_flatness"] < 1e-8
        assert rep.residuals["first_bianchi"] < 1e-8
        # but genuinely curved
        assert rep.residuals["flatness"] > 1e-2

    def test_harmonic_ricci_matches_source(self, harmonic_geo):
        st_ = harmonic_geo.spacetime
        ev = sobol_events(st_.box, 150, margin=0.1)
        rep = riemann(st_.op, st_, ev)
        rho = harmonic_geo.density.sample(ev)
        t = st_.temporal.sample(ev)
        target = 4.0 * np.pi * rho[:, None, None] * np.einsum("qa,qb->qab", t, t)
        assert np.max(np.abs(rep.ricci() - target)) < 1e-8
