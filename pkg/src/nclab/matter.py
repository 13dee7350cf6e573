"""Dust bodies: conserved mass-momentum fields supported in tubes.

A body is pressureless dust, T^{ab} = rho u^a u^b.  The four-velocity
congruence is launched from an initial constant-time slice (every particle
starts with the central curve's velocity) and evolved by free fall; the
density solves the continuity equation in Lagrangian form, rho times the
flow Jacobian being constant along flow lines.  Both fields are sampled on
a uniform tube-covering lattice and interpolated with cubic splines, so a
finished body is cheap to evaluate anywhere in its tube.

The square root of the density is what the lattice stores.  Squaring the
interpolant keeps rho nonnegative everywhere and kills spline overshoot
outside the support, which would otherwise leak tiny negative densities
into the conservation and support checks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, ndimage

from .geodesics import WorldLine, geodesic_residual
from .spacetime import (
    ClassicalSpacetime,
    TEMPORAL_COMPONENTS,
    covariant_derivative,
)
from .tensor import DIM, Box, GridField, TensorField, as_event, sobol_events

__all__ = [
    "CausticError",
    "RadialBumpProfile",
    "TubeDescriptor",
    "DustCongruence",
    "MassMomentumField",
    "build_dust_body",
    "mass_density",
    "check_conditions",
]

GEODESIC_PRECONDITION_TOL = 1e-6
CAUSTIC_THRESHOLD = 1e-6
CONSERVATION_TOL = 1e-4


class CausticError(ValueError):
    """The dust congruence focuses inside the requested time window."""


def _unit_bump_integral() -> float:
    """Integral of exp(1/(r^2-1)) over the unit ball (cached)."""
    global _BUMP_INTEGRAL
    if _BUMP_INTEGRAL is None:
        val, _ = integrate.quad(
            lambda r: 4.0 * math.pi * r * r * math.exp(1.0 / (r * r - 1.0)),
            0.0,
            1.0,
            epsabs=1e-14,
            epsrel=1e-13,
        )
        _BUMP_INTEGRAL = val
    return _BUMP_INTEGRAL


_BUMP_INTEGRAL: float | None = None


@dataclass(frozen=True)
class RadialBumpProfile:
    """Smooth compactly supported radial density profile.

    rho0(r) = A exp(1/((r/radius)^2 - 1)) for r < radius and 0 outside,
    with A fixed so the profile integrates to `mass` over the slice.
    """

    mass: float = 1.0

    def amplitude(self, radius: float) -> float:
        return self.mass / (_unit_bump_integral() * radius**3)

    def peak(self, radius: float) -> float:
        return self.amplitude(radius) * math.exp(-1.0)

    def density(self, r: np.ndarray, radius: float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        s = r / radius
        out = np.zeros_like(s)
        inside = s < 1.0
        with np.errstate(divide="ignore", over="ignore"):
            out[inside] = self.amplitude(radius) * np.exp(1.0 / (s[inside] ** 2 - 1.0))
        return out


@dataclass(frozen=True)
class TubeDescriptor:
    """Where a body lives: a spatial ball of fixed radius carried along a
    central worldline over a time window."""

    curve: WorldLine
    radius: float
    window: tuple[float, float]

    def center(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.curve.at_time(t)[0][:, 1:]

    def distance(self, events: np.ndarray) -> np.ndarray:
        """Spatial distance from the central curve at each event's time."""
        centers = self.center(events[:, 0])
        return np.linalg.norm(events[:, 1:] - centers, axis=1)


@dataclass(frozen=True)
class DustCongruence:
    """The u field and its density, as interpolating fields on the tube."""

    velocity: TensorField
    density: TensorField
    step: float

    def residuals(self, st: ClassicalSpacetime, events: np.ndarray) -> dict:
        """Geodesic residual sup|u^n grad_n u^a| and continuity residual
        sup|grad_a (rho u^a)| over the given events."""
        du = covariant_derivative(st.op, self.velocity, step=self.step)
        u = self.velocity.sample(events)
        geo = np.einsum("qan,qn->qa", du.sample(events), u)

        rho = self.density

        def current(ev):
            return rho.sample(ev)[:, None] * self.velocity.sample(ev)

        j = TensorField((1, 0), current, self.velocity.box, backend="grid")
        dj = covariant_derivative(st.op, j, step=self.step)
        cont = np.einsum("qaa->q", dj.sample(events))
        return {
            "geodesic": float(np.max(np.abs(geo))),
            "continuity": float(np.max(np.abs(cont))),
        }


@dataclass(frozen=True)
class MassMomentumField:
    """A symmetric (2,0) stress field with tube support and grid backend.

    `scale` and `leak_rate` exist for deliberately broken fixtures: scale
    multiplies T (scale=-1 violates the mass condition), leak_rate feeds a
    spurious factor 1 + leak_rate*(t - t0) into the density (violating
    conservation without touching anything else).
    """

    stress: TensorField
    support: TubeDescriptor
    congruence: DustCongruence
    sqrt_density_grid: GridField
    velocity_grid: GridField
    profile: RadialBumpProfile
    profile_radius: float
    level_times: np.ndarray
    support_boxes: np.ndarray  # (levels, 2, 3): lo/hi per stored level
    peak_density: float
    scale: float = 1.0
    leak_rate: float = 0.0
    newton_failures: int = 0

    @property
    def mass(self) -> float:
        return self.scale * self.profile.mass

    @property
    def tube_box(self) -> Box:
        return self.stress.box

    def _factor(self, t: np.ndarray) -> np.ndarray:
        if self.leak_rate == 0.0:
            return np.full(np.shape(t), self.scale)
        return self.scale * (1.0 + self.leak_rate * (t - self.support.window[0]))

    def density_at(self, events) -> np.ndarray:
        ev = np.atleast_2d(np.asarray(events, dtype=float))
        raw = self.sqrt_density_grid.sample(ev).reshape(ev.shape[0])
        return self._factor(ev[:, 0]) * raw**2

    def velocity_at(self, events) -> np.ndarray:
        ev = np.atleast_2d(np.asarray(events, dtype=float))
        return self.velocity_grid.sample(ev)

    def support_box(self, t: float, pad_cells: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Spatial bounding box of the support at time t (interpolated
        between stored levels), optionally padded by grid cells."""
        times = self.level_times
        t = float(np.clip(t, times[0], times[-1]))
        k = int(np.searchsorted(times, t, side="right") - 1)
        k = min(max(k, 0), len(times) - 2)
        # union of the bracketing levels is a conservative bound
        lo = np.minimum(self.support_boxes[k, 0], self.support_boxes[k + 1, 0])
        hi = np.maximum(self.support_boxes[k, 1], self.support_boxes[k + 1, 1])
        pad = pad_cells * self.sqrt_density_grid.spacing[1:]
        return lo - pad, hi + pad

    def interior_events(self, n: int, min_density_fraction: float = 1e-3) -> np.ndarray:
        """Sampling plan restricted to the body interior, where the congruence
        is physically meaningful."""
        inside, _ = _sampling_plan(self, 4 * n)
        rho = self.density_at(inside)
        keep = inside[rho >= min_density_fraction * abs(self.scale) * self.peak_density]
        return keep[:n]

    def scaled(self, factor: float) -> "MassMomentumField":
        return _with_sampler_params(self, scale=self.scale * float(factor))

    def with_mass_leak(self, rate: float) -> "MassMomentumField":
        return _with_sampler_params(self, leak_rate=float(rate))

    def with_hard_cutoff(self, fraction: float = 0.3) -> "MassMomentumField":
        """Zero the stored density below fraction*peak.  The resulting jump
        at the cut is a deliberate conservation defect."""
        cut = math.sqrt(fraction * self.peak_density)
        vals = self.sqrt_density_grid.values.copy()
        vals[vals < cut] = 0.0
        grid = GridField(
            (0, 0),
            self.sqrt_density_grid.origin,
            self.sqrt_density_grid.spacing,
            vals,
            fill="zero",
        )
        return _with_sampler_params(self, sqrt_density_grid=grid)

    def descriptor(self) -> dict:
        """Plain-type summary, suitable for the harness config format."""
        return {
            "mass": float(self.mass),
            "profile_radius": float(self.profile_radius),
            "tube_radius": float(self.support.radius),
            "window": [float(self.support.window[0]), float(self.support.window[1])],
            "peak_density": float(self.peak_density),
            "grid_shape": [int(n) for n in self.sqrt_density_grid.grid_shape],
            "grid_spacing": [float(s) for s in self.sqrt_density_grid.spacing],
            "levels": int(len(self.level_times)),
            "scale": float(self.scale),
            "leak_rate": float(self.leak_rate),
        }

    def export_grid_csv(self, path, support_only: bool = True) -> None:
        g = self.sqrt_density_grid
        axes = [g.origin[i] + g.spacing[i] * np.arange(g.grid_shape[i]) for i in range(DIM)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "z", "rho", "u0", "u1", "u2", "u3"])
            for it, t in enumerate(axes[0]):
                rho = self._factor(t) * g.values[it] ** 2
                u = self.velocity_grid.values[it]
                for ix, x in enumerate(axes[1]):
                    for iy, y in enumerate(axes[2]):
                        for iz, z in enumerate(axes[3]):
                            if support_only and rho[ix, iy, iz] == 0.0:
                                continue
                            w.writerow(
                                [f"{v:.12g}" for v in (t, x, y, z, rho[ix, iy, iz], *u[ix, iy, iz])]
                            )


def _with_sampler_params(m: MassMomentumField, **changes) -> MassMomentumField:
    """Rebuild the derived sampler fields after changing stored state."""
    out = replace(m, **changes)
    stress = _stress_field(out.sqrt_density_grid, out.velocity_grid, out._factor)
    density = TensorField(
        (0, 0), lambda ev, _m=None: out.density_at(ev), out.sqrt_density_grid.box, backend="grid"
    )
    congruence = DustCongruence(out.velocity_grid, density, out.congruence.step)
    return replace(out, stress=stress, congruence=congruence)


def _stress_field(sqrt_rho: GridField, velocity: GridField, factor) -> TensorField:
    def sampler(ev):
        rho = factor(ev[:, 0]) * sqrt_rho.sample(ev).reshape(ev.shape[0]) ** 2
        u = velocity.sample(ev)
        return rho[:, None, None] * u[:, :, None] * u[:, None, :]

    return TensorField((2, 0), sampler, sqrt_rho.box, backend="grid")


def _flow_rhs(op, t, x, v, dx, dv):
    """Time derivative of (x, v, Dx, Dv) for the free-fall flow."""
    n = x.shape[0]
    ev = np.concatenate([np.full((n, 1), t), x], axis=1)
    xdot4 = np.concatenate([np.ones((n, 1)), v], axis=1)
    C = op.coefficients(ev)
    acc = np.einsum("qanm,qn,qm->qa", C, xdot4, xdot4, optimize=True)
    dC = op.coefficient_partials(ev)  # (q, a, d, b, c) = partial_d C^a_bc
    da_dx = np.einsum("qadnm,qn,qm->qad", dC, xdot4, xdot4, optimize=True)[:, 1:, 1:]
    da_dv = 2.0 * np.einsum("qajm,qm->qaj", C, xdot4, optimize=True)[:, 1:, 1:]
    ddx = dv
    ddv = np.einsum("qij,qjk->qik", da_dx, dx) + np.einsum("qij,qjk->qik", da_dv, dv)
    return v, acc[:, 1:], ddx, ddv


def _rk4_flow(op, t0, t1, steps, x, v, dx, dv):
    h = (t1 - t0) / steps
    for k in range(steps):
        t = t0 + k * h
        k1 = _flow_rhs(op, t, x, v, dx, dv)
        k2 = _flow_rhs(op, t + h / 2, *(a + h / 2 * b for a, b in zip((x, v, dx, dv), k1)))
        k3 = _flow_rhs(op, t + h / 2, *(a + h / 2 * b for a, b in zip((x, v, dx, dv), k2)))
        k4 = _flow_rhs(op, t + h, *(a + h * b for a, b in zip((x, v, dx, dv), k3)))
        x, v, dx, dv = (
            a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
            for a, b1, b2, b3, b4 in zip((x, v, dx, dv), k1, k2, k3, k4)
        )
    return x, v, dx, dv


def _spline_coeffs(grids: np.ndarray) -> np.ndarray:
    """Per-component mirror-mode cubic spline coefficients on a 3D lattice."""
    flat = grids.reshape(grids.shape[:3] + (-1,))
    return np.stack(
        [ndimage.spline_filter(flat[..., k], order=3, mode="mirror") for k in range(flat.shape[-1])],
        axis=-1,
    )


def _interp3(coeffs: np.ndarray, origin, spacing, pts: np.ndarray) -> np.ndarray:
    idx = ((pts - origin) / spacing).T
    out = np.empty((pts.shape[0], coeffs.shape[-1]))
    for k in range(coeffs.shape[-1]):
        out[:, k] = ndimage.map_coordinates(
            coeffs[..., k], idx, order=3, prefilter=False, mode="mirror"
        )
    return out


def build_dust_body(
    st: ClassicalSpacetime,
    gamma: WorldLine,
    eps: float,
    profile: RadialBumpProfile | None = None,
    *,
    nodes_across: int = 24,
    seed_nodes: int = 19,
    max_step: float = 0.02,
    newton_tol: float = 1e-12,
) -> MassMomentumField:
    """Build a conserved dust body of support radius `eps` around `gamma`.

    The congruence is launched from gamma's first time slice with gamma's
    own (time-normalized) velocity everywhere on the slice, so the body
    initially moves as a rigid cloud.  The density starts as the bump
    profile centered on the curve and is transported by the flow.
    """
    if profile is None:
        profile = RadialBumpProfile()
    if eps <= 0.0:
        raise ValueError("support radius must be positive")
    res = geodesic_residual(st.op, gamma)
    if res["reparam"] > GEODESIC_PRECONDITION_TOL:
        raise ValueError(
            f"central curve is not a geodesic of the operator "
            f"(residual {res['reparam']:.3g})"
        )
    gamma_t = gamma if gamma.parametrization == "time" else _time_view(gamma)
    t0, t1 = gamma_t.time_range()
    if t1 <= t0:
        raise ValueError("central curve must span a positive time window")

    e0, xi0 = gamma_t.at_time(t0)
    c0 = e0[1:]
    v0 = xi0[1:] / xi0[0]

    # lattice geometry: spatial spacing from the requested resolution across
    # the tube diameter, time spacing to match, two extra levels on each end
    # so stencils stay on the lattice over the whole declared window
    h_x = 2.0 * eps / (nodes_across - 1)
    n_window = max(5, int(math.ceil((t1 - t0) / h_x)) + 1)
    h_t = (t1 - t0) / (n_window - 1)
    times = t0 + h_t * np.arange(-2, n_window + 2)

    # seed lattice on the initial slice: the support ball plus enough rim
    # that spline-filter boundary effects (two cells) never reach seeds the
    # support can map to
    seed_half = 1.35 * eps
    axis = np.linspace(-seed_half, seed_half, seed_nodes)
    sx, sy, sz = np.meshgrid(axis, axis, axis, indexing="ij")
    seeds = c0 + np.stack([sx, sy, sz], axis=-1).reshape(-1, 3)
    n_seeds = seeds.shape[0]
    seed_r = np.linalg.norm(seeds - c0, axis=1)
    in_support = seed_r < eps

    # integrate the flow with its variational equations through every level
    def flow_through(level_times):
        x = seeds.copy()
        v = np.tile(v0, (n_seeds, 1))
        dx = np.tile(np.eye(3), (n_seeds, 1, 1))
        dv = np.zeros((n_seeds, 3, 3))
        out = {}
        t_prev = t0
        for t in level_times:
            steps = max(1, int(math.ceil(abs(t - t_prev) / max_step)))
            if t != t_prev:
                x, v, dx, dv = _rk4_flow(st.op, t_prev, t, steps, x, v, dx, dv)
            out[t] = (x.copy(), v.copy(), dx.copy(), dv.copy())
            t_prev = t
        return out

    forward = [t for t in times if t >= t0]
    backward = [t for t in times if t < t0][::-1]
    levels = flow_through(forward)
    levels.update(flow_through(backward))

    # caustics matter only where the body carries density: the support ball
    # plus a rim of interpolation stencil width (padding seeds may shear
    # freely without corrupting the stored field)
    guard = seed_r <= eps + 2.0 * (axis[1] - axis[0])
    dets = {t: np.linalg.det(levels[t][2]) for t in times}
    worst = min(dets[t][guard].min() for t in times)
    if worst < CAUSTIC_THRESHOLD:
        raise CausticError(
            f"flow Jacobian drops to {worst:.3g} on the dust inside the "
            "window; use a smaller support radius or a shorter time window"
        )

    # tube radius and per-level support boxes from the pushed support seeds
    window_times = [t for t in times if t0 - 1e-9 * h_t <= t <= t1 + 1e-9 * h_t]
    reach = 0.0
    for t in window_times:
        ct = gamma_t.at_time(t)[0][1:]
        reach = max(reach, np.linalg.norm(levels[t][0][in_support] - ct, axis=1).max())
    tube_radius = reach + 2.0 * h_x

    support_boxes = np.empty((len(times), 2, 3))
    for k, t in enumerate(times):
        pts = levels[t][0][in_support]
        support_boxes[k, 0] = pts.min(axis=0)
        support_boxes[k, 1] = pts.max(axis=0)

    # spatial lattice covering every level's support, padded three cells and
    # anchored so the initial bump center is exactly a node (symmetric bodies
    # then store symmetric node values, and centered moments cancel exactly)
    lo3 = support_boxes[:, 0].min(axis=0) - 3.0 * h_x
    hi3 = support_boxes[:, 1].max(axis=0) + 3.0 * h_x
    n_lo = np.ceil((c0 - lo3) / h_x - 1e-9).astype(int)
    n_hi = np.ceil((hi3 - c0) / h_x - 1e-9).astype(int)
    lo3 = c0 - h_x * n_lo
    n_sp = np.maximum(4, n_lo + n_hi + 1)
    grid_axes = [lo3[i] + h_x * np.arange(n_sp[i]) for i in range(3)]
    gx, gy, gz = np.meshgrid(*grid_axes, indexing="ij")
    nodes = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)

    tube_lo = np.concatenate([[times[0]], lo3])
    tube_hi = np.concatenate([[times[-1]], hi3])
    if not (st.box.contains(tube_lo) and st.box.contains(tube_hi)):
        raise ValueError("dust tube leaves the spacetime working region")
    if st.box.exclude_radius > 0.0:
        nearest = np.maximum(np.maximum(lo3, -hi3), 0.0)
        if np.linalg.norm(nearest) < st.box.exclude_radius:
            raise ValueError("dust tube overlaps the excluded region of the chart")

    # invert the flow at every lattice node by Newton iteration against the
    # spline-interpolated map, warm-started from the previous level
    seed_origin = seeds[0]
    seed_spacing = np.full(3, axis[1] - axis[0])
    seed_top = seed_origin + seed_spacing * (seed_nodes - 1)
    sqrt_vals = np.empty((len(times),) + tuple(n_sp))
    vel_vals = np.empty((len(times),) + tuple(n_sp) + (DIM,))
    vel_vals[..., 0] = 1.0
    guess = nodes.copy()
    failures = 0
    shape3 = tuple(n_sp)

    # anchor zone for evaluations: two cells inside the cube, where the
    # mirror-mode spline coefficients are unpolluted by the boundary
    clean_lo = seed_origin + 2.0 * seed_spacing
    clean_hi = seed_top - 2.0 * seed_spacing

    def extended(base_coeffs, slope_coeffs, pts):
        """Evaluate a lattice field and its derivative at pts, continued
        once-differentiably beyond the clean zone along the tangent plane
        (exact for flows that are affine in the seed)."""
        yc = np.clip(pts, clean_lo, clean_hi)
        base = _interp3(base_coeffs, seed_origin, seed_spacing, yc)
        slope = _interp3(slope_coeffs, seed_origin, seed_spacing, yc).reshape(-1, 3, 3)
        return base + np.einsum("qij,qj->qi", slope, pts - yc), slope

    for k, t in enumerate(times):
        x_t, v_t, dx_t, dv_t = levels[t]
        seed_shape = (seed_nodes, seed_nodes, seed_nodes)
        map_coeffs = _spline_coeffs(x_t.reshape(seed_shape + (3,)))
        jac_coeffs = _spline_coeffs(dx_t.reshape(seed_shape + (9,)))
        vel_coeffs = _spline_coeffs(v_t.reshape(seed_shape + (3,)))
        dvel_coeffs = _spline_coeffs(dv_t.reshape(seed_shape + (9,)))

        # only nodes near this level's support can carry density; the rest
        # just need a smooth velocity value far from the body
        near = np.all(
            (nodes >= support_boxes[k, 0] - 5.0 * h_x)
            & (nodes <= support_boxes[k, 1] + 5.0 * h_x),
            axis=1,
        )
        y = guess.copy()
        active = near.copy()
        prev_gap = np.full(len(nodes), np.inf)
        for _ in range(12):
            if not active.any():
                break
            phi, jac = extended(map_coeffs, jac_coeffs, y[active])
            gap = np.linalg.norm(phi - nodes[active], axis=1)
            done = gap < newton_tol
            diverging = gap >= prev_gap[active]
            idx = np.where(active)[0]
            prev_gap[idx] = gap
            bad = np.abs(np.linalg.det(jac)) < 1e-12
            jac[bad] = np.eye(3)
            step = np.linalg.solve(jac, (phi - nodes[active])[:, :, None])[:, :, 0]
            upd = y[active]
            move = ~(done | diverging)
            upd[move] -= step[move]
            y[active] = upd
            active[idx[done | diverging]] = False
        ok = np.zeros(len(nodes), dtype=bool)
        ok[near] = prev_gap[near] < 1e-8
        in_level_support = np.all(
            (nodes >= support_boxes[k, 0]) & (nodes <= support_boxes[k, 1]), axis=1
        )
        failures += int(np.sum(~ok & in_level_support))

        r0 = np.linalg.norm(y - c0, axis=1)
        rho0 = profile.density(r0, eps)
        rho0[~ok] = 0.0
        _, jac_final = extended(map_coeffs, jac_coeffs, y)
        det = np.maximum(np.linalg.det(jac_final), CAUSTIC_THRESHOLD)
        sqrt_vals[k] = np.sqrt(rho0 / det).reshape(shape3)
        vel, _ = extended(vel_coeffs, dvel_coeffs, y)
        vel_vals[k, ..., 1:] = vel.reshape(shape3 + (3,))
        guess = y

    # final support boxes read off the stored lattice, so downstream
    # node-aligned quadrature meshes cover the support exactly
    for k in range(len(times)):
        mask = sqrt_vals[k] > 0.0
        if mask.any():
            for i in range(3):
                proj = mask.any(axis=tuple(j for j in range(3) if j != i))
                hit = np.where(proj)[0]
                support_boxes[k, 0, i] = grid_axes[i][hit[0]]
                support_boxes[k, 1, i] = grid_axes[i][hit[-1]]
        else:
            down = np.floor((support_boxes[k, 0] - lo3) / h_x)
            up = np.ceil((support_boxes[k, 1] - lo3) / h_x)
            support_boxes[k, 0] = lo3 + h_x * down
            support_boxes[k, 1] = lo3 + h_x * up

    origin = np.concatenate([[times[0]], lo3])
    spacing = np.concatenate([[h_t], np.full(3, h_x)])
    sqrt_grid = GridField((0, 0), origin, spacing, sqrt_vals, fill="zero")
    vel_grid = GridField((1, 0), origin, spacing, vel_vals, fill="clamp")

    tube = TubeDescriptor(gamma_t, float(tube_radius), (float(t0), float(t1)))
    body = MassMomentumField(
        stress=_stress_field(sqrt_grid, vel_grid, lambda t: np.ones(np.shape(t))),
        support=tube,
        congruence=DustCongruence(vel_grid, sqrt_grid, 0.5 * float(min(spacing))),
        sqrt_density_grid=sqrt_grid,
        velocity_grid=vel_grid,
        profile=profile,
        profile_radius=float(eps),
        level_times=times,
        support_boxes=support_boxes,
        peak_density=profile.peak(eps),
        newton_failures=failures,
    )
    return _with_sampler_params(body)


def _time_view(gamma: WorldLine) -> WorldLine:
    from .geodesics import reparametrize_by_time

    return reparametrize_by_time(gamma)


def mass_density(m: MassMomentumField, e) -> float:
    """rho = t_a t_b T^{ab} at one event."""
    ev = as_event(e)[None, :]
    t = np.asarray(TEMPORAL_COMPONENTS, dtype=float)
    return float(np.einsum("ab,a,b->", m.stress.sample(ev)[0], t, t))


def _sampling_plan(m: MassMomentumField, n: int, margin_steps: float = 2.5):
    """Sobol events inside the tube plus a shell just outside it.

    The plan stays `margin_steps` stencil steps away from the lattice
    boundary in time so derivative probes remain on the lattice.
    """
    t0, t1 = m.support.window
    spacing = m.sqrt_density_grid.spacing
    pad = margin_steps * 0.5 * spacing
    box = m.tube_box
    plan_box = Box(
        np.concatenate([[max(t0, box.lo[0] + pad[0])], box.lo[1:] + pad[1:]]),
        np.concatenate([[min(t1, box.hi[0] - pad[0])], box.hi[1:] - pad[1:]]),
    )
    ev = sobol_events(plan_box, 4 * n)
    d = m.support.distance(ev)
    inside = ev[d <= m.support.radius][:n]
    shell = ev[(d > m.support.radius) & (d <= m.support.radius + 4 * m.sqrt_density_grid.spacing[1])][:n]
    return inside, shell


def check_conditions(
    st: ClassicalSpacetime,
    m: MassMomentumField,
    n: int = 300,
) -> dict:
    """Residual report {mass, conservation, symmetry, support, ...}.

    conservation is the scaled residual sup|div T| / (sup|T| / radius); the
    raw sup norm is reported alongside.  mass is the worst negative mass
    density over the plan (0 when the mass condition holds), support the
    largest |T| component outside the declared tube.
    """
    inside, shell = _sampling_plan(m, n)
    vals = m.stress.sample(inside)
    sup_T = float(np.max(np.abs(vals)))
    symmetry = float(np.max(np.abs(vals - np.swapaxes(vals, 1, 2))))

    t = np.asarray(TEMPORAL_COMPONENTS, dtype=float)
    rho = np.einsum("qab,a,b->q", vals, t, t)
    active = np.max(np.abs(vals), axis=(1, 2)) > 1e-12 * max(sup_T, 1e-300)
    neg = float(max(0.0, -(rho[active].min() if active.any() else 0.0)))
    violation_fraction = float(np.mean(rho[active] <= 0.0)) if active.any() else 0.0

    step = m.congruence.step
    div_field = covariant_derivative(st.op, m.stress, step=step)
    div = np.einsum("qaba->qb", div_field.sample(inside))
    raw = float(np.max(np.abs(div)))
    scale = sup_T / m.profile_radius
    conservation = raw / scale if scale > 0 else raw

    support = float(np.max(np.abs(m.stress.sample(shell)))) if len(shell) else 0.0

    return {
        "mass": neg,
        "conservation": conservation,
        "symmetry": symmetry,
        "support": support,
        "conservation_raw": raw,
        "mass_violation_fraction": violation_fraction,
        "nontriviality": sup_T,
    }
