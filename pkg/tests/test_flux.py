"""Slice integrals: momentum, angular momentum, centers of mass, frames,
and the volume-element identities."""

import numpy as np
import pytest

from nclab import (
    ConstantCobasis,
    Hypersurface,
    PositionField,
    SliceError,
    VolumeElement,
    angular_momentum_flux,
    body_frame,
    center_of_mass,
    check_J_derivative,
    com_worldline,
    frame_for,
    in_support_hull,
    momentum_flux,
    slice_report,
    slice_through,
    sobol_events,
    total_mass,
    write_slice_csv,
)
from nclab.flux import SLICE_CSV_COLUMNS, _reduce, _slice_plan

from conftest import pick_slices


class TestConservedFluxes:
    def test_momentum_invariant_across_slices(self, flat_st, drift_body):
        m = drift_body
        surfs = [slice_through(m, float(t)) for t in pick_slices(m)]
        ps = np.stack([momentum_flux(m, s, flat_st.op).components
                       for s in surfs])
        spread = np.max(np.abs(ps[:, None] - ps[None, :]))
        assert spread < 1e-4

    def test_momentum_time_component_is_mass(self, flat_st, drift_body):
        s = slice_through(drift_body, 0.0)
        P = momentum_flux(drift_body, s, flat_st.op).components
        assert P[0] == total_mass(drift_body, s, flat_st.op)
        assert abs(P[0] - 1.0) < 1e-3

    def test_angular_momentum_invariant(self, flat_st, drift_body):
        m = drift_body
        times = pick_slices(m)
        base = center_of_mass(m, slice_through(m, float(times[0])), flat_st.op)
        js = np.stack([
            angular_momentum_flux(m, slice_through(m, float(t)), base,
                                  flat_st.op).components for t in times])
        spread = np.max(np.abs(js[:, None] - js[None, :]))
        assert spread < 1e-4
        assert np.max(np.abs(js[0] + js[0].T)) < 1e-15  # antisymmetry

    def test_angular_momentum_derivative(self, flat_st, drift_body):
        rep = check_J_derivative(drift_body, flat_st.op, step=0.1)
        assert rep["j_derivative"] < 1e-4
        assert rep["p_constancy"] < 1e-4

    def test_static_body_momentum_is_pure_mass(self, flat_st, static_body):
        s = slice_through(static_body, 0.0)
        P = momentum_flux(static_body, s, flat_st.op).components
        assert abs(P[0] - 1.0) < 1e-3
        assert np.max(np.abs(P[1:])) < 1e-6


class TestCenterOfMass:
    def test_origin_independent(self, flat_st, drift_body):
        m = drift_body
        s = slice_through(m, 0.0)
        lo, hi = m.support_box(0.0)
        mid = 0.5 * (lo + hi)
        qs = []
        for off in ([0.0, 0.0, 0.0], [0.1, 0.0, -0.05], [-0.08, 0.12, 0.02]):
            origin = np.concatenate([[0.0], mid + off])
            qs.append(center_of_mass(m, s, flat_st.op, origin=origin))
        qs = np.stack(qs)
        assert np.max(np.abs(qs - qs[0])) < 1e-9

    def test_lies_in_support_hull(self, flat_st, drift_body):
        s = slice_through(drift_body, 0.0)
        q = center_of_mass(drift_body, s, flat_st.op)
        assert in_support_hull(drift_body, s, q)
        outside = q + np.array([0.0, 1.0, 0.0, 0.0])
        assert not in_support_hull(drift_body, s, outside)

    def test_track_follows_drift(self, flat_st, drift_body):
        times = pick_slices(drift_body)
        track = com_worldline(drift_body, times, flat_st.op)
        assert track.parametrization == "time"
        assert np.allclose(track.times, times)
        assert np.allclose(track.tangents[:, 0], 1.0)
        # unit-speed drift along y: COM moves with it
        dy = np.diff(track.events[:, 2]) / np.diff(track.times)
        assert np.max(np.abs(dy - 1.0)) < 1e-3


class TestFrames:
    def test_adapted_coordinates_vanish_at_anchor(self, flat_st):
        anchor = np.array([0.1, 0.4, -0.2, 0.3])
        frame = frame_for(flat_st.op, anchor)
        assert np.max(np.abs(frame.adapted(anchor[None]))) < 1e-12

    def test_component_round_trip(self, flat_st):
        frame = frame_for(flat_st.op, [0.0, 0.1, 0.2, 0.3])
        ev = sobol_events(flat_st.box, 16, margin=0.3)
        rng = np.random.default_rng(3)
        v = rng.normal(size=(16, 4))
        back = frame.chart_components(ev, frame.frame_components(ev, v))
        assert np.max(np.abs(back - v)) < 1e-12

    def test_event_from_adapted_batch(self, flat_st):
        frame = frame_for(flat_st.op, [0.0, 0.5, 0.0, -0.2])
        ev = sobol_events(flat_st.box, 12, margin=0.4)
        again = frame.event_from_adapted(frame.adapted(ev))
        assert again.shape == ev.shape
        assert np.max(np.abs(again - ev)) < 1e-10

    def test_body_frame_anchor_on_first_level(self, flat_st, drift_body):
        frame = body_frame(drift_body, flat_st.op)
        assert frame.anchor[0] == pytest.approx(float(drift_body.level_times[0]))

    def test_position_field(self, flat_st):
        frame = frame_for(flat_st.op, [0.0, 0.0, 0.0, 0.0])
        base = np.array([0.0, 0.3, -0.1, 0.2])
        chi = PositionField(frame, base)
        assert np.max(np.abs(chi.components(base[None]))) < 1e-12
        ev = sobol_events(flat_st.box, 32, margin=0.4)
        assert chi.gradient_residual(ev) < 1e-9

    def test_constant_cobasis(self, flat_st):
        frame = frame_for(flat_st.op, [0.0, 0.0, 0.0, 0.0])
        cob = ConstantCobasis(frame)
        ev = sobol_events(flat_st.box, 24, margin=0.3)
        assert cob.independence_residual(ev) > 1e-6
        assert cob.constancy_residual(ev) < 1e-9
        with pytest.raises(ValueError):
            ConstantCobasis(frame, np.zeros((4, 4)))


class TestVolumeElement:
    def test_orientation_checked(self):
        with pytest.raises(ValueError):
            VolumeElement("sideways")

    def test_normalization_against_flat_metric(self):
        h = np.tile(np.diag([0.0, 1.0, 1.0, 1.0]), (5, 1, 1))
        for orient in ("future", "past"):
            assert VolumeElement(orient).normalization_residual(h) < 1e-14

    def test_factorization_exact(self):
        assert VolumeElement().factorization_residual() == 0.0
        assert VolumeElement("past").factorization_residual() == 0.0

    def test_quarter_rule_matches_pullback(self):
        rng = np.random.default_rng(5)
        beta = rng.normal(size=(64, 4))
        for orient in ("future", "past"):
            vol = VolumeElement(orient)
            assert np.allclose(vol.pullback_integrand(beta),
                               vol.quarter_rule_integrand(beta), atol=1e-15)

    def test_quarter_rule_integrates_on_slice(self, flat_st, drift_body):
        surf = slice_through(drift_body, 0.0)
        events, w = _slice_plan(drift_body, surf)
        beta = np.stack([
            1.0 + events[:, 1] ** 2,
            events[:, 2],
            events[:, 1] * events[:, 3],
            np.ones(events.shape[0]),
        ], axis=1)
        vol = VolumeElement()
        lhs = _reduce(vol.pullback_integrand(beta), w)
        rhs = _reduce(vol.quarter_rule_integrand(beta), w)
        assert abs(lhs - rhs) < 1e-12


class TestSlices:
    def test_slice_region_contains_support(self, drift_body):
        surf = slice_through(drift_body, 0.0)
        lo, hi = drift_body.support_box(0.0)
        assert surf.contains_region(lo, hi)
        assert surf.normal()[0] == 1.0
        assert Hypersurface(0.0, lo, hi, "past").normal()[0] == -1.0

    def test_degenerate_region_rejected(self):
        with pytest.raises(ValueError):
            Hypersurface(0.0, [0.0, 0.0, 0.0], [1.0, 0.0, 1.0])

    def test_leaking_support_rejected(self, flat_st, drift_body):
        tight = Hypersurface(0.0, [-0.05, 0.95, -0.05], [0.05, 1.05, 0.05])
        with pytest.raises(SliceError):
            momentum_flux(drift_body, tight, flat_st.op)

    def test_slice_report_and_csv(self, flat_st, drift_body, tmp_path):
        times = pick_slices(drift_body, count=3)
        rows = slice_report(drift_body, flat_st.op, times)
        assert len(rows) == 3
        assert set(rows[0]) == set(SLICE_CSV_COLUMNS)
        path = tmp_path / "slices.csv"
        write_slice_csv(path, drift_body, flat_st.op, times)
        text = path.read_text()
        assert text.splitlines()[0].split(",") == SLICE_CSV_COLUMNS
        write_slice_csv(path, drift_body, flat_st.op, times)
        assert path.read_text() == text  # deterministic rewrite
