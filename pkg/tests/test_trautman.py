"""Geometrization, recovery, and on-curve flat operators."""

import numpy as np
import pytest

from nclab import (
    Box,
    GeometrizedModel,
    NewtonianModel,
    PoissonMismatchError,
    RecoveryError,
    WorldLine,
    adapted_flat_spacetime,
    constant_field,
    flat_operator_on_curve,
    geometrize,
    harmonic_trap_model,
    integrate_geodesic,
    point_mass_model,
    recover,
    riemann,
    sobol_events,
    uniform_field_model,
    vacuum_model,
)
from nclab.spacetime import covariant_derivative
from nclab.tensor import TensorField

BOX = Box([-2.0] * 4, [2.0] * 4)


class TestGeometrize:
    def test_vacuum_geometrizes_to_coordinate_operator(self):
        geo = geometrize(vacuum_model(BOX))
        ev = sobol_events(BOX, 16)
        assert np.allclose(geo.spacetime.op.coefficients(ev), 0.0)

    def test_condition_residuals(self, harmonic_geo, point_geo):
        for geo in (harmonic_geo, point_geo):
            res = geo.condition_residuals(n=300)
            assert res["ricci_source"] < 1e-6
            assert res["pair_symmetry"] < 1e-6
            assert res["mixed_flatness"] < 1e-6

    def test_rest_acceleration_is_minus_gradient(self):
        for model in (harmonic_trap_model(0.4, BOX),
                      uniform_field_model(0.7, BOX),
                      point_mass_model(1.0, Box([-2.0] * 4, [2.0] * 4,
                                                exclude_radius=0.3))):
            geo = geometrize(model)
            st = geo.spacetime
            ev = sobol_events(st.box, 64, margin=0.15)
            rest = np.tile([1.0, 0.0, 0.0, 0.0], (64, 1))
            acc = st.op.acceleration(ev, rest)
            h = st.spatial.sample(ev)
            grad = np.einsum("qab,qb->qa", h, model.potential.partial(ev))
            assert np.max(np.abs(acc + grad)) < 1e-9

    def test_poisson_mismatch_rejected(self, flat_st):
        phi = constant_field((0, 0), 0.0, BOX)
        rho = constant_field((0, 0), 1.0, BOX)
        with pytest.raises(PoissonMismatchError):
            geometrize(NewtonianModel(flat_st, phi, rho))

    def test_operator_is_curved_but_compatible(self, harmonic_geo):
        st = harmonic_geo.spacetime
        ev = sobol_events(st.box, 50, margin=0.1)
        assert np.max(np.abs(st.op.coefficients(ev))) > 1e-3
        dt = covariant_derivative(st.op, st.temporal).sample(ev)
        assert np.max(np.abs(dt)) < 1e-12


class TestRecover:
    def test_harmonic_round_trip(self, harmonic_geo):
        anchor = [0.0, 0.4, -0.2, 0.1]
        model = harmonic_trap_model(0.15, BOX)
        rec = recover(harmonic_geo, anchor)
        assert abs(rec.potential.sample(np.array([anchor]))[0]) < 1e-12
        ev = sobol_events(BOX, 200, margin=0.1)
        phi_in = model.potential.sample(ev)
        phi_anchor = model.potential.sample(np.array([anchor]))[0]
        diff = rec.potential.sample(ev) - (phi_in - phi_anchor)
        assert np.max(np.abs(diff)) < 1e-9

    def test_point_source_paths_clear_excluded_ball(self, point_geo):
        # targets on the far side of the ball from the anchor: a straight
        # axis staircase would cross the singular region
        anchor = [0.0, 1.0, 0.0, 0.0]
        model = point_mass_model(1.0, point_geo.box)
        rec = recover(point_geo, anchor)
        targets = np.array([
            [0.1, -1.4, 0.05, 0.02],
            [-0.2, -0.9, 0.0, 0.0],
            [0.0, -0.5, -0.01, 0.6],
            [0.3, 0.02, -1.2, 0.01],
        ])
        phi_in = model.potential.sample(targets)
        phi_anchor = model.potential.sample(np.array([anchor]))[0]
        diff = rec.potential.sample(targets) - (phi_in - phi_anchor)
        assert np.max(np.abs(diff)) < 1e-8

    def test_anchor_outside_region_rejected(self, point_geo):
        with pytest.raises(ValueError):
            recover(point_geo, [0.0, 3.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            recover(point_geo, [0.0, 0.1, 0.0, 0.0])  # inside the ball

    def test_rotational_field_rejected(self, flat_st):
        # C^a_bc = -t_b t_c A^a with A = (0, -y, x, 0): not a gradient
        def diff_sampler(ev):
            out = np.zeros((ev.shape[0], 4, 4, 4))
            out[:, 1, 0, 0] = ev[:, 2]
            out[:, 2, 0, 0] = -ev[:, 1]
            return out

        diff = TensorField((1, 2), diff_sampler, BOX)
        from nclab.spacetime import compose_operators, coordinate_operator
        op = compose_operators(coordinate_operator(BOX), diff)
        bad = GeometrizedModel(flat_st.with_operator(op),
                               constant_field((0, 0), 0.0, BOX))
        with pytest.raises(RecoveryError):
            recover(bad, [0.0, 0.0, 0.0, 0.0])


class TestFlatOperatorOnCurve:
    def test_agrees_on_curve_flat_and_compatible(self, harmonic_geo):
        st = harmonic_geo.spacetime
        line = integrate_geodesic(st.op, [-0.4, 0.6, 0.0, 0.0],
                                  [1.0, 0.0, 0.2, 0.0], 0.8, 1e-10)
        cop = flat_operator_on_curve(st, line)
        ev = sobol_events(st.box, 150, margin=0.1)
        rep = riemann(cop, st, ev)
        assert rep.residuals["flatness"] < 1e-6
        res = st.with_operator(cop).metric_residuals(n=200)
        assert res["temporal_compatibility"] < 1e-6
        assert res["spatial_compatibility"] < 1e-6
        on_curve = np.max(np.abs(cop.coefficients(line.events)
                                 - st.op.coefficients(line.events)))
        assert on_curve < 1e-6

    def test_rejects_non_timelike_curve(self, harmonic_geo):
        params = np.linspace(0.0, 1.0, 8)
        events = np.zeros((8, 4))
        events[:, 1] = params
        tangents = np.tile([0.0, 1.0, 0.0, 0.0], (8, 1))
        bad = WorldLine(params, events, tangents, "affine")
        with pytest.raises(ValueError):
            flat_operator_on_curve(harmonic_geo.spacetime, bad)
