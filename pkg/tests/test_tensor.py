"""Dense tensors, fields over a box, and the sampling plans."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nclab import Box, Tensor, TensorField, GridField, constant_field, sobol_events
from nclab.tensor import antisymmetrize, contract, outer

BOX = Box([-2.0] * 4, [2.0] * 4)

coeff = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


def wave_field(box=BOX):
    k = np.array([1.0, 2.0, -1.0, 0.5])

    def sampler(ev):
        return np.sin(ev @ k)

    return TensorField((0, 0), sampler, box), k


class TestTensor:
    def test_component_shape_enforced(self):
        with pytest.raises(ValueError):
            Tensor((1, 0), np.zeros((4, 4)))
        with pytest.raises(ValueError):
            Tensor((0, 0), np.zeros(4))

    def test_algebra(self):
        a = Tensor((1, 0), [1.0, 2.0, 0.0, -1.0])
        b = Tensor((1, 0), [0.5, 0.0, 1.0, 1.0])
        assert np.allclose((a + b).components, [1.5, 2.0, 1.0, 0.0])
        assert np.allclose((a - b).components, [0.5, 2.0, -1.0, -2.0])
        assert np.allclose((2.0 * a).components, (a * 2.0).components)
        with pytest.raises(ValueError):
            a + Tensor((0, 1), [0.0] * 4)

    def test_outer_contract_roundtrip(self):
        rng = np.random.default_rng(7)
        v = Tensor((1, 0), rng.normal(size=4))
        w = Tensor((0, 1), rng.normal(size=4))
        prod = outer(v, w)
        assert prod.valence == (1, 1)
        tr = contract(prod, 0, 0)
        assert tr.valence == (0, 0)
        assert np.isclose(tr.components, v.components @ w.components)

    def test_antisymmetrize(self):
        rng = np.random.default_rng(8)
        t = Tensor((0, 2), rng.normal(size=(4, 4)))
        alt = antisymmetrize(t, (0, 1))
        assert np.allclose(alt.components, -alt.components.T)
        assert np.allclose(
            alt.components, 0.5 * (t.components - t.components.T))
        sym = Tensor((0, 2), np.eye(4))
        assert np.allclose(antisymmetrize(sym, (0, 1)).components, 0.0)

    def test_antisymmetrize_rejects_mixed_blocks(self):
        t = Tensor((1, 1), np.eye(4))
        with pytest.raises(ValueError):
            antisymmetrize(t, (0, 1))


class TestBox:
    def test_contains(self):
        box = Box([-1.0] * 4, [1.0] * 4)
        inside = np.array([[0.0, 0.5, -0.5, 0.0]])
        outside = np.array([[0.0, 1.5, 0.0, 0.0]])
        assert box.contains(inside)[0]
        assert not box.contains(outside)[0]

    def test_excluded_ball(self):
        box = Box([-1.0] * 4, [1.0] * 4, exclude_radius=0.3)
        assert not box.contains(np.array([[0.0, 0.1, 0.1, 0.0]]))[0]
        assert box.contains(np.array([[0.0, 0.5, 0.0, 0.0]]))[0]

    def test_sobol_plan_is_deterministic(self):
        a = sobol_events(BOX, 100, margin=0.1)
        b = sobol_events(BOX, 100, margin=0.1)
        assert np.array_equal(a, b)
        assert BOX.contains(a).all()

    def test_sobol_respects_excluded_ball(self):
        box = Box([-1.0] * 4, [1.0] * 4, exclude_radius=0.4)
        ev = sobol_events(box, 200)
        assert np.all(np.linalg.norm(ev[:, 1:], axis=1) >= 0.4)


class TestTensorField:
    def test_analytic_derivative_preferred(self):
        k = np.array([0.3, -0.7, 0.2, 1.1])

        def sampler(ev):
            return ev @ k

        def deriv(ev):
            return np.broadcast_to(k, (ev.shape[0], 4)).copy()

        f = TensorField((0, 0), sampler, BOX, derivative=deriv)
        ev = sobol_events(BOX, 32, margin=0.5)
        assert np.allclose(f.partial(ev), deriv(ev))

    def test_stencil_matches_analytic(self):
        f, k = wave_field()
        ev = sobol_events(BOX, 64, margin=0.6)
        exact = np.cos(ev @ k)[:, None] * k[None, :]
        assert np.max(np.abs(f.partial(ev) - exact)) < 1e-8

    def test_stencil_is_fourth_order(self):
        f, k = wave_field()
        ev = sobol_events(BOX, 32, margin=0.8)
        exact = np.cos(ev @ k)[:, None] * k[None, :]
        errs = [np.max(np.abs(f.partial(ev, step=h) - exact))
                for h in (0.2, 0.1)]
        assert errs[0] / errs[1] >= 12.0

    @given(a=coeff, b=coeff)
    @settings(max_examples=25, deadline=None)
    def test_partial_is_linear(self, a, b):
        f, kf = wave_field()

        def g_sampler(ev):
            return ev @ np.array([0.5, 1.0, -0.5, 0.25])

        g = TensorField((0, 0), g_sampler, BOX)

        def combo(ev):
            return a * f.sample(ev) + b * g.sample(ev)

        h = TensorField((0, 0), combo, BOX)
        ev = sobol_events(BOX, 16, margin=0.8)
        lhs = h.partial(ev)
        rhs = a * f.partial(ev) + b * g.partial(ev)
        assert np.max(np.abs(lhs - rhs)) < 1e-7 * (1.0 + abs(a) + abs(b))

    def test_constant_field(self):
        c = constant_field((1, 0), [1.0, 0.0, 2.0, 0.0], BOX)
        ev = sobol_events(BOX, 8)
        vals = c.sample(ev)
        assert vals.shape == (8, 4)
        assert np.allclose(vals, [1.0, 0.0, 2.0, 0.0])
        assert np.allclose(c.partial(ev), 0.0)


class TestGridField:
    def test_reproduces_node_values_and_gradient(self):
        origin = np.array([-1.0, -1.0, -1.0, -1.0])
        spacing = np.full(4, 0.125)
        axes = [origin[i] + spacing[i] * np.arange(17) for i in range(4)]
        mesh = np.meshgrid(*axes, indexing="ij")
        k = np.array([0.4, 0.3, -0.2, 0.1])
        values = sum(ki * mi for ki, mi in zip(k, mesh))

        g = GridField((0, 0), origin, spacing, values)
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)[::97]
        assert np.max(np.abs(g.sample(nodes) - nodes @ k)) < 1e-9

        rng = np.random.default_rng(11)
        probe = rng.uniform(-0.2, 0.2, size=(6, 4))
        assert np.max(np.abs(g.sample(probe) - probe @ k)) < 1e-7
        assert np.max(np.abs(g.partial(probe) - k)) < 1e-6

    def test_rejects_bad_spacing(self):
        with pytest.raises(ValueError):
            GridField((0, 0), np.zeros(4), np.zeros(4), np.zeros((4, 4, 4, 4)))
