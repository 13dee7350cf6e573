"""Slice integrals over dust bodies.

This module turns a mass-momentum field into the handful of numbers the
classical conservation statements are about: momentum flux through a
constant-time slice, angular momentum about a base point, total mass, and
the center of mass.  Everything is taken relative to a *flat* compatible
derivative operator, whose adapted coordinates give meaning to "constant
vector" and "position vector" in a frame-independent way.

The pieces:

- ``Hypersurface``: a constant-time slice with a bounded spatial region and
  an orientation.  Spacelike by construction (its normal is a multiple of
  the clock form), so the only precondition worth checking is that a body's
  support stays inside the region.
- ``VolumeElement``: the alternating four-form, its normalization against
  the spatial metric, and its factorization into slice normal times an
  induced three-form.
- ``FlatFrame``: adapted coordinates of a flat operator, built by
  transporting a coframe from an anchor event.  The transported coframe is
  closed (the connection is symmetric), so its path integrals are honest
  coordinate functions; position fields and constant cobases reduce to
  arithmetic in those coordinates.
- quadrature helpers and the flux operations themselves.

Vector-valued integrals are reported in frame components, i.e. against the
constant cobasis of the given flat operator.  The zeroth component is the
contraction with the clock form (the time leg of any compatible frame is
the clock form itself), so masses read off the same in every frame.
"""

from __future__ import annotations

import csv
import itertools
import weakref
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import ConvexHull

from .tensor import (
    DIM,
    Box,
    Tensor,
    TensorField,
    as_event,
    as_events,
    sobol_events,
)
from .spacetime import (
    TEMPORAL_COMPONENTS,
    DerivativeOperator,
    covariant_derivative,
    riemann_components,
)
from .geodesics import WorldLine
from .matter import MassMomentumField

__all__ = [
    "SliceError",
    "Hypersurface",
    "VolumeElement",
    "FlatFrame",
    "ConstantCobasis",
    "PositionField",
    "frame_for",
    "body_frame",
    "slice_through",
    "slice_quadrature",
    "momentum_flux",
    "angular_momentum_flux",
    "total_mass",
    "center_of_mass",
    "com_worldline",
    "check_J_derivative",
    "support_points",
    "in_support_hull",
    "slice_report",
    "write_slice_csv",
    "SLICE_CSV_COLUMNS",
]

# flatness / compatibility gate for frames built on an operator
FRAME_FLATNESS_TOL = 1e-6
# tolerance for "constant relative to the flat operator" checks
FRAME_CONSTANCY_TOL = 1e-6
# center-of-mass residual: |J(q)t| < COM_RESIDUAL_SCALE * (region diameter)
COM_RESIDUAL_SCALE = 1e-5
# signed-distance tolerance for convex-hull membership
HULL_MEMBERSHIP_TOL = 1e-9

SLICE_CSV_COLUMNS = [
    "t", "P0", "P1", "P2", "P3", "mass",
    "com_x", "com_y", "com_z", "j_residual",
]


class SliceError(ValueError):
    """A slice fails its support condition, or a slice-integral
    postcondition cannot be met."""


# --- slices -----------------------------------------------------------------


@dataclass(frozen=True)
class Hypersurface:
    """Constant-time slice t = time over a bounded spatial region.

    Spacelike by construction: the normal covector is ±(1,0,0,0) in the
    adapted chart, future for orientation "future".  The region must
    contain the support of any body integrated over the slice.
    """

    time: float
    lo: np.ndarray
    hi: np.ndarray
    orientation: str = "future"

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(hi <= lo):
            raise ValueError("slice region must have positive extent")
        if self.orientation not in ("future", "past"):
            raise ValueError("orientation must be 'future' or 'past'")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def normal_sign(self) -> float:
        return 1.0 if self.orientation == "future" else -1.0

    def normal(self) -> np.ndarray:
        """Normal covector n_a (equal to ± the clock form)."""
        return self.normal_sign * TEMPORAL_COMPONENTS

    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains_region(self, lo, hi, tol: float = 1e-9) -> bool:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return bool(np.all(lo >= self.lo - tol) and np.all(hi <= self.hi + tol))


def slice_through(m: MassMomentumField, t: float, pad_cells: float = 4.0,
                  orientation: str = "future") -> Hypersurface:
    """Slice at time t whose region is the body's support box padded by a
    few grid cells (enough to contain the quadrature region)."""
    lo, hi = m.support_box(t, pad_cells=pad_cells)
    return Hypersurface(float(t), lo, hi, orientation)


# --- volume element ----------------------------------------------------------


def _alternating_symbol() -> np.ndarray:
    eps = np.zeros((DIM,) * 4)
    for perm in itertools.permutations(range(DIM)):
        sign = 1.0
        p = list(perm)
        for i in range(DIM):
            for j in range(i + 1, DIM):
                if p[i] > p[j]:
                    sign = -sign
        eps[perm] = sign
    return eps


_EPS4 = _alternating_symbol()
# spatial alternating symbol embedded in chart indices (zero off the block)
_EPS3 = np.zeros((DIM, DIM, DIM))
for _p in itertools.permutations((1, 2, 3)):
    _EPS3[_p] = _EPS4[(0,) + _p]


class VolumeElement:
    """The alternating volume element ε_abcd with a chosen orientation,
    together with its factorization across a slice.

    The factorization ε_abcd = n_[a ω_bcd] (antisymmetrization weight
    1/4!) fixes the induced slice element ω at ω_123 = 4; reversing the
    orientation flips ε and n while ω is unchanged.  Flux integrals use the unit Euclidean slice measure,
    which equals ω/4 contracted into a coordinate frame; the class exposes
    both so the factorization can be checked literally.
    """

    def __init__(self, orientation: str = "future"):
        if orientation not in ("future", "past"):
            raise ValueError("orientation must be 'future' or 'past'")
        self.orientation = orientation
        self.sign = 1.0 if orientation == "future" else -1.0

    def normal(self) -> np.ndarray:
        return self.sign * TEMPORAL_COMPONENTS

    def components(self, events=None) -> np.ndarray:
        """ε_abcd, broadcast over an event batch when one is given."""
        eps = self.sign * _EPS4
        if events is None:
            return eps
        ev = as_events(events)
        return np.broadcast_to(eps, (ev.shape[0],) + eps.shape).copy()

    def slice_element(self) -> np.ndarray:
        """The induced three-form ω_bcd with ω_123 = 4.

        Reversing the orientation flips ε and the normal together, so ω
        keeps the fixed spatial orientation of the chart.
        """
        return 4.0 * _EPS3

    def slice_measure(self) -> float:
        """Scalar density against dx dy dz used by the flux integrals."""
        return 1.0

    def normalization_residual(self, spatial_values) -> float:
        """sup |ε_abcd ε_efgh h^{bf} h^{cg} h^{dh} − 6 t_a t_e| over a batch
        of spatial-metric values (N,4,4)."""
        h = np.asarray(spatial_values, dtype=float)
        if h.ndim == 2:
            h = h[None]
        eps = self.sign * _EPS4
        lhs = np.einsum("abcd,efgh,qbf,qcg,qdh->qae", eps, eps,
                        h, h, h, optimize=True)
        rhs = 6.0 * np.einsum("a,e->ae", TEMPORAL_COMPONENTS, TEMPORAL_COMPONENTS)
        return float(np.max(np.abs(lhs - rhs[None])))

    def factorization_residual(self) -> float:
        """sup |ε_abcd − n_[a ω_bcd]|; zero by construction."""
        n = self.normal()
        w = self.slice_element()
        built = 0.25 * (
            np.einsum("a,bcd->abcd", n, w)
            - np.einsum("b,acd->abcd", n, w)
            + np.einsum("c,abd->abcd", n, w)
            - np.einsum("d,abc->abcd", n, w)
        )
        return float(np.max(np.abs(built - self.sign * _EPS4)))

    def pullback_integrand(self, vectors) -> np.ndarray:
        """Integrand of the slice pullback of β^a ε_abcd against the
        coordinate triple (x, y, z): β^a ε_{a123}."""
        beta = np.asarray(vectors, dtype=float)
        return beta @ (self.sign * _EPS4[:, 1, 2, 3])

    def quarter_rule_integrand(self, vectors) -> np.ndarray:
        """¼ (β^a n_a) ω_123 — the factorized form of the same integrand."""
        beta = np.asarray(vectors, dtype=float)
        return 0.25 * (beta @ self.normal()) * self.slice_element()[1, 2, 3]


# --- adapted frames of flat operators ----------------------------------------


class FlatFrame:
    """Adapted coordinates of a flat compatible operator.

    A coframe σ^μ_a is transported from an anchor event (where it is the
    coordinate coframe) along a time leg through the anchor and straight
    spatial rays off that leg; symmetry of the connection makes each
    transported covector closed, so the accumulated line integrals y^μ are
    coordinate functions with dy^μ = σ^μ.  In these coordinates the
    operator is the coordinate operator, which is what makes "constant
    cobasis" and "position vector" well defined.

    Operators whose difference field annihilates spatial directions have
    slice-constant coframes; for those the spatial rays are skipped and
    evaluation is closed-form off the time leg.
    """

    def __init__(self, op: DerivativeOperator, anchor, box: Box | None = None,
                 time_steps: int = 512, ray_steps: int = 32, check: bool = True):
        self.op = op
        self.box = op.box if box is None else box
        self.anchor = as_event(anchor)
        self.ray_steps = int(ray_steps)
        if check:
            self._check_operator()
        self._fast = op.spatially_trivial()
        self._build_time_leg(int(time_steps))

    def _check_operator(self) -> None:
        margin = 0.03 * float(np.max(self.box.extent))
        probe = sobol_events(self.box, 64, margin=margin)
        flat = float(np.max(np.abs(riemann_components(self.op, probe))))
        if flat > FRAME_FLATNESS_TOL:
            raise ValueError(
                f"operator is not flat (curvature residual {flat:.3e}); "
                "adapted coordinates need a flat operator")
        C = self.op.coefficients(probe)
        clock = float(np.max(np.abs(C[:, 0])))
        if clock > FRAME_FLATNESS_TOL:
            raise ValueError(
                f"operator does not preserve the clock form (residual {clock:.3e})")

    # -- time leg --------------------------------------------------------

    def _transport_rhs(self, events, direction, sigma):
        """dσ^μ_c along ẋ = direction: −σ^μ_n ẋ^b C^n_bc, batched."""
        C = self.op.coefficients(events)
        Cdir = np.einsum("qnbc,qb->qnc", C, direction)
        return -np.einsum("qmn,qnc->qmc", sigma, Cdir)

    def _build_time_leg(self, n_steps: int) -> None:
        t_lo = float(self.box.lo[0])
        t_hi = float(self.box.hi[0])
        t0 = float(self.anchor[0])
        if not (t_lo <= t0 <= t_hi):
            raise ValueError("anchor lies outside the operator's box")
        knots = [t0]
        sigmas = [np.eye(DIM)]
        ys = [np.zeros(DIM)]
        e_time = np.array([[1.0, 0.0, 0.0, 0.0]])

        def leg_rhs(t, state):
            sig = state[:16].reshape(1, DIM, DIM)
            ev = np.array([[t, *self.anchor[1:]]])
            dsig = self._transport_rhs(ev, e_time, sig)[0]
            dy = sig[0, :, 0]
            return np.concatenate([dsig.ravel(), dy])

        for stop in (t_hi, t_lo):
            span = stop - t0
            n = max(2, int(round(n_steps * abs(span) / max(t_hi - t_lo, 1e-12))))
            h = span / n
            state = np.concatenate([np.eye(DIM).ravel(), np.zeros(DIM)])
            t = t0
            side_knots, side_sig, side_y = [], [], []
            for _ in range(n):
                k1 = leg_rhs(t, state)
                k2 = leg_rhs(t + 0.5 * h, state + 0.5 * h * k1)
                k3 = leg_rhs(t + 0.5 * h, state + 0.5 * h * k2)
                k4 = leg_rhs(t + h, state + h * k3)
                state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                t += h
                side_knots.append(t)
                side_sig.append(state[:16].reshape(DIM, DIM).copy())
                side_y.append(state[16:].copy())
            if stop >= t0:
                knots = knots + side_knots
                sigmas = sigmas + side_sig
                ys = ys + side_y
            else:
                knots = side_knots[::-1] + knots
                sigmas = side_sig[::-1] + sigmas
                ys = side_y[::-1] + ys

        ts = np.asarray(knots)
        order = np.argsort(ts)
        ts = ts[order]
        sig = np.asarray(sigmas)[order]
        y = np.asarray(ys)[order]
        keep = np.concatenate([[True], np.diff(ts) > 1e-14])
        self._leg_sigma = CubicSpline(ts[keep], sig[keep], axis=0)
        self._leg_y = CubicSpline(ts[keep], y[keep], axis=0)

    # -- evaluation ------------------------------------------------------

    def _ray(self, events):
        """Transport σ and accumulate y from the time leg out to each
        event along a straight spatial ray (batched fixed-step RK4)."""
        ev = as_events(events)
        t = ev[:, 0]
        sigma = self._leg_sigma(t)
        y = self._leg_y(t)
        delta = np.zeros_like(ev)
        delta[:, 1:] = ev[:, 1:] - self.anchor[1:]
        if self._fast:
            y = y + np.einsum("qmj,qj->qm", sigma[:, :, 1:], ev[:, 1:] - self.anchor[1:])
            return sigma, y
        n = self.ray_steps
        h = 1.0 / n
        base = ev.copy()
        base[:, 1:] = self.anchor[1:]
        state_sig = sigma
        state_y = y

        def rhs(s, sig, yy):
            pts = base + s * delta
            dsig = self._transport_rhs(pts, delta, sig)
            dy = np.einsum("qmb,qb->qm", sig, delta)
            return dsig, dy

        s = 0.0
        for _ in range(n):
            k1s, k1y = rhs(s, state_sig, state_y)
            k2s, k2y = rhs(s + 0.5 * h, state_sig + 0.5 * h * k1s, state_y + 0.5 * h * k1y)
            k3s, k3y = rhs(s + 0.5 * h, state_sig + 0.5 * h * k2s, state_y + 0.5 * h * k2y)
            k4s, k4y = rhs(s + h, state_sig + h * k3s, state_y + h * k3y)
            state_sig = state_sig + (h / 6.0) * (k1s + 2 * k2s + 2 * k3s + k4s)
            state_y = state_y + (h / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
            s += h
        return state_sig, state_y

    def coframe(self, events) -> np.ndarray:
        """σ^μ_a at a batch of events, shape (N, 4, 4), rows indexed by μ."""
        sigma, _ = self._ray(events)
        return sigma

    def adapted(self, events) -> np.ndarray:
        """Adapted coordinates y^μ (zero at the anchor), shape (N, 4)."""
        _, y = self._ray(events)
        return y

    def chart_frame(self, events) -> np.ndarray:
        """Inverse coframe (∂x^a/∂y^μ), shape (N, 4, 4), columns by μ."""
        return np.linalg.inv(self.coframe(events))

    def frame_components(self, events, chart_vectors) -> np.ndarray:
        v = np.asarray(chart_vectors, dtype=float)
        return np.einsum("qma,qa->qm", self.coframe(events), v)

    def chart_components(self, events, frame_vectors) -> np.ndarray:
        v = np.asarray(frame_vectors, dtype=float)
        return np.einsum("qam,qm->qa", self.chart_frame(events), v)

    def event_from_adapted(self, coords) -> np.ndarray:
        """Invert y^μ(x) by Newton iteration; exact for affine frames."""
        coords = np.asarray(coords, dtype=float)
        y_target = np.atleast_2d(coords)
        x = self.anchor[None] + y_target  # exact when the frame is trivial
        scale = float(np.max(self.box.extent))
        for _ in range(20):
            resid = y_target - self.adapted(x)
            if float(np.max(np.abs(resid))) < 1e-13 * scale:
                break
            x = x + np.linalg.solve(self.coframe(x), resid[..., None])[..., 0]
        return x if coords.ndim == 2 else x[0]


_FRAMES: "weakref.WeakKeyDictionary[DerivativeOperator, dict]" = weakref.WeakKeyDictionary()


def frame_for(op: DerivativeOperator, anchor, box: Box | None = None) -> FlatFrame:
    """FlatFrame for (op, anchor), cached per operator."""
    anchor = as_event(anchor)
    key = tuple(np.round(anchor, 12))
    per_op = _FRAMES.setdefault(op, {})
    frame = per_op.get(key)
    if frame is None:
        frame = FlatFrame(op, anchor, box)
        per_op[key] = frame
    return frame


def body_frame(m: MassMomentumField, flat: DerivativeOperator) -> FlatFrame:
    """Frame anchored at the body's first support-box center."""
    center = 0.5 * (m.support_boxes[0, 0] + m.support_boxes[0, 1])
    anchor = np.concatenate([[m.level_times[0]], center])
    return frame_for(flat, anchor)


@dataclass(frozen=True)
class PositionField:
    """χ^a relative to a base point: the identity-gradient vector field of
    a flat operator, realized as adapted-coordinate differences."""

    frame: FlatFrame
    base: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", as_event(self.base))

    def components(self, events) -> np.ndarray:
        """Frame components y^μ(e) − y^μ(base), shape (N, 4)."""
        y0 = self.frame.adapted(self.base[None])[0]
        return self.frame.adapted(events) - y0[None]

    def chart_components(self, events) -> np.ndarray:
        return self.frame.chart_components(events, self.components(events))

    def as_field(self) -> TensorField:
        return TensorField((1, 0), self.chart_components, self.frame.box)

    def gradient_residual(self, events, step: float | None = None) -> float:
        """sup |∇_a χ^b − δ_a^b| over the batch (flat-operator derivative)."""
        ev = as_events(events)
        grad = covariant_derivative(self.frame.op, self.as_field(), step).sample(ev)
        return float(np.max(np.abs(grad - np.eye(DIM)[None])))


class ConstantCobasis:
    """Four covector fields constant relative to a flat operator: the rows
    of a frame's coframe, optionally mixed by a constant matrix."""

    def __init__(self, frame: FlatFrame, matrix=None):
        self.frame = frame
        self.matrix = np.eye(DIM) if matrix is None else np.asarray(matrix, dtype=float)
        if abs(np.linalg.det(self.matrix)) < 1e-12:
            raise ValueError("cobasis mixing matrix must be invertible")

    def covectors(self, events) -> np.ndarray:
        """σ^i_a, shape (N, 4, 4), first tensor axis indexing the cobasis."""
        return np.einsum("im,qma->qia", self.matrix, self.frame.coframe(events))

    def rotated(self, matrix) -> "ConstantCobasis":
        return ConstantCobasis(self.frame, np.asarray(matrix, dtype=float) @ self.matrix)

    def independence_residual(self, events) -> float:
        """Smallest |det| over the batch; positive means independent."""
        return float(np.min(np.abs(np.linalg.det(self.covectors(events)))))

    def constancy_residual(self, events, step: float | None = None) -> float:
        """sup |∇f_a σ^i_b| over the batch and all four covectors."""
        worst = 0.0
        for i in range(DIM):
            fld = TensorField((0, 1), lambda ev, i=i: self.covectors(ev)[:, i, :],
                              self.frame.box)
            grad = covariant_derivative(self.frame.op, fld, step).sample(events)
            worst = max(worst, float(np.max(np.abs(grad))))
        return worst


# --- quadrature ---------------------------------------------------------------


def _simpson_axis(lo: float, hi: float, h: float):
    n = max(2, int(round((hi - lo) / h)))
    if n % 2:
        n += 1
    # keep the requested spacing; the endpoint moves by at most one cell
    nodes = lo + h * np.arange(n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return nodes, w * (h / 3.0)


def slice_quadrature(lo, hi, spacing):
    """Composite-Simpson tensor mesh over a spatial box: (points, weights).

    Points are (N, 3); the node count per axis is forced even-intervaled,
    extending the upper boundary by at most one cell.
    """
    lo = np.asarray(lo, dtype=float).reshape(3)
    hi = np.asarray(hi, dtype=float).reshape(3)
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (3,))
    axes, weights = zip(*(_simpson_axis(lo[i], hi[i], spacing[i]) for i in range(3)))
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    w = np.einsum("i,j,k->ijk", *weights).ravel()
    return pts, w


def _slice_plan(m: MassMomentumField, surf: Hypersurface, refine: int = 1):
    """Quadrature events and weights on a slice: the body's support box
    padded by two cells, meshed at the body's own grid spacing so stored
    node values are hit exactly."""
    g = m.sqrt_density_grid
    lo, hi = m.support_box(surf.time, pad_cells=2.0)
    if not surf.contains_region(lo, hi):
        raise SliceError(
            f"support box [{lo}, {hi}] leaks out of the slice region "
            f"[{surf.lo}, {surf.hi}] at t = {surf.time:g}")
    h3 = g.spacing[1:] / int(refine)
    # snap the lower corner onto the body's node lattice
    idx = np.round((lo - g.origin[1:]) / h3)
    lo = g.origin[1:] + idx * h3
    pts, w = slice_quadrature(lo, hi, h3)
    events = np.concatenate(
        [np.full((pts.shape[0], 1), surf.time), pts], axis=1)
    return events, w


def _flux_density(m: MassMomentumField, frame: FlatFrame, events) -> np.ndarray:
    """Frame components of T^{ab} t_b over the batch, shape (N, 4)."""
    T = m.stress.sample(events)
    return np.einsum("qma,qa->qm", frame.coframe(events), T[:, :, 0])


def _reduce(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted reduction with a fixed (pairwise) summation order so
    results do not depend on thread count."""
    if values.ndim == 1:
        return np.sum(values * weights, axis=0)
    return np.sum(values * weights[:, None], axis=0)


# --- flux operations ----------------------------------------------------------


def momentum_flux(m: MassMomentumField, surf: Hypersurface,
                  flat: DerivativeOperator) -> Tensor:
    """Momentum P^a carried through the slice, in frame components of the
    flat operator's constant cobasis.  P^0 is the contraction with the
    clock form (the total mass) for any compatible frame."""
    frame = body_frame(m, flat)
    events, w = _slice_plan(m, surf)
    dens = _flux_density(m, frame, events)
    P = surf.normal_sign * _reduce(dens, w)
    return Tensor((1, 0), P)


def angular_momentum_flux(m: MassMomentumField, surf: Hypersurface, p,
                          flat: DerivativeOperator) -> Tensor:
    """Angular momentum J^{ab} about base point p through the slice, in
    frame components; antisymmetric by construction."""
    frame = body_frame(m, flat)
    events, w = _slice_plan(m, surf)
    dens = _flux_density(m, frame, events)
    chi = PositionField(frame, p).components(events)
    pair = np.einsum("qa,qb->qab", chi, dens)
    J = surf.normal_sign * 0.5 * _reduce(
        (pair - np.swapaxes(pair, 1, 2)).reshape(events.shape[0], -1), w)
    return Tensor((2, 0), J.reshape(DIM, DIM))


def total_mass(m: MassMomentumField, surf: Hypersurface,
               flat: DerivativeOperator) -> float:
    """t_a P^a(Σ): the frame-independent time component of the momentum."""
    return float(momentum_flux(m, surf, flat).components[0])


def center_of_mass(m: MassMomentumField, surf: Hypersurface,
                   flat: DerivativeOperator, origin=None,
                   validate: bool = True) -> np.ndarray:
    """The unique event q on the slice where J^{ab}(Σ, q) t_b vanishes.

    Constructed as o + R with R^a the mass-weighted mean position vector
    about an arbitrary origin o on the slice; the residual |J(q) t| is
    checked against τ = 1e-5 × (region diameter) unless validate=False.
    """
    frame = body_frame(m, flat)
    events, w = _slice_plan(m, surf)
    T = m.stress.sample(events)
    rho = T[:, 0, 0]
    M = surf.normal_sign * _reduce(rho, w)
    if M <= 0:
        raise SliceError("slice carries no positive mass")
    if origin is None:
        lo, hi = m.support_box(surf.time)
        origin = np.concatenate([[surf.time], 0.5 * (lo + hi)])
    origin = as_event(origin)
    chi = PositionField(frame, origin).components(events)
    R = surf.normal_sign * _reduce(chi, w * rho) / M
    q_adapted = frame.adapted(origin[None])[0] + R
    q = frame.event_from_adapted(q_adapted[None])[0]
    if validate:
        Jq = angular_momentum_flux(m, surf, q, flat).components
        resid = float(np.max(np.abs(Jq[:, 0])))
        tol = COM_RESIDUAL_SCALE * surf.diameter()
        if resid > tol:
            raise SliceError(
                f"center-of-mass residual |J(q)t| = {resid:.3e} exceeds {tol:.3e}")
    return q


def support_points(m: MassMomentumField, surf: Hypersurface,
                   min_density_fraction: float = 1e-9) -> np.ndarray:
    """Spatial coordinates of slice quadrature nodes carrying density."""
    events, _ = _slice_plan(m, surf)
    rho = m.density_at(events)
    cut = min_density_fraction * abs(m.scale) * m.peak_density
    pts = events[rho > cut][:, 1:]
    if pts.shape[0] < 4:
        raise SliceError("slice meets too little of the support for a hull")
    return pts


def in_support_hull(m: MassMomentumField, surf: Hypersurface, point,
                    tol: float = HULL_MEMBERSHIP_TOL) -> bool:
    """Exact point-in-hull test: signed distance to every hull face."""
    pts = support_points(m, surf)
    hull = ConvexHull(pts)
    p = np.asarray(point, dtype=float).reshape(-1)[-3:]
    dist = hull.equations[:, :3] @ p + hull.equations[:, 3]
    return bool(np.max(dist) <= tol)


def com_worldline(m: MassMomentumField, slice_plan, flat: DerivativeOperator,
                  region=None) -> WorldLine:
    """Center-of-mass track over a plan of slices.

    slice_plan is either a sequence of times or of Hypersurfaces.  Tangents
    are finite differences of the COM events against slice time, so the
    result is time-parametrized (ξ^0 = 1 at every sample).
    """
    slices = []
    for item in slice_plan:
        if isinstance(item, Hypersurface):
            slices.append(item)
        else:
            t = float(item)
            if region is None:
                slices.append(slice_through(m, t))
            else:
                slices.append(Hypersurface(t, region[0], region[1]))
    if len(slices) < 2:
        raise ValueError("slice plan needs at least two slices")
    times = np.array([s.time for s in slices])
    if np.any(np.diff(times) <= 0):
        raise ValueError("slice plan must be strictly increasing in time")
    events = np.stack([center_of_mass(m, s, flat) for s in slices])
    tangents = np.gradient(events, times, axis=0)
    return WorldLine(times, events, tangents, parametrization="time")


def check_J_derivative(m: MassMomentumField, flat: DerivativeOperator,
                       events=None, step: float | None = None) -> dict:
    """Finite-difference check of the angular-momentum field's derivative.

    J^{ab}(x) is the angular momentum about x through the slice at x's
    time.  Its frame-coordinate derivative should be −δ_ν^{[μ} P^{κ]};
    spatial directions probe quadrature consistency (J is linear in the
    base point), the time direction honestly includes slice invariance.
    Also reports the worst pairwise momentum difference over the probed
    slices (zero is the conserved-body expectation).
    """
    frame = body_frame(m, flat)
    g = m.sqrt_density_grid
    times = m.level_times
    if step is None:
        step = min(2.0 * float(np.max(g.spacing)),
                   float(times[-1] - times[0]) / 6.0)
    if events is None:
        # probe points whose time offsets stay inside the stored window
        inner = times[(times >= times[0] + step) & (times <= times[-1] - step)]
        ks = np.unique(np.linspace(0, len(inner) - 1, 3).astype(int))
        events = []
        for t in inner[ks]:
            lo, hi = m.support_box(float(t))
            events.append(np.concatenate([[t], 0.5 * (lo + hi)]))
        events = np.stack(events)
    events = as_events(events)

    def J_at(x):
        surf = slice_through(m, float(x[0]))
        return angular_momentum_flux(m, surf, x, flat).components

    momenta = []
    worst = 0.0
    eye = np.eye(DIM)
    for e in events:
        surf = slice_through(m, float(e[0]))
        momenta.append(momentum_flux(m, surf, flat).components)
        P = momenta[-1]
        target = -0.5 * (np.einsum("nm,k->nmk", eye, P)
                         - np.einsum("nk,m->nmk", eye, P))
        y0 = frame.adapted(e[None])[0]
        for nu in range(DIM):
            plus = frame.event_from_adapted((y0 + step * eye[nu])[None])[0]
            minus = frame.event_from_adapted((y0 - step * eye[nu])[None])[0]
            deriv = (J_at(plus) - J_at(minus)) / (2.0 * step)
            worst = max(worst, float(np.max(np.abs(deriv - target[nu]))))
    momenta = np.stack(momenta)
    p_const = 0.0
    for i in range(len(momenta)):
        for j in range(i + 1, len(momenta)):
            p_const = max(p_const, float(np.max(np.abs(momenta[i] - momenta[j]))))
    return {"j_derivative": worst, "p_constancy": p_const}


# --- reporting ----------------------------------------------------------------


def slice_report(m: MassMomentumField, flat: DerivativeOperator, times,
                 region=None) -> list[dict]:
    """Per-slice summary rows: momentum components, mass, center of mass,
    and the COM angular-momentum residual."""
    rows = []
    for t in np.asarray(times, dtype=float):
        if region is None:
            surf = slice_through(m, float(t))
        else:
            surf = Hypersurface(float(t), region[0], region[1])
        P = momentum_flux(m, surf, flat).components
        q = center_of_mass(m, surf, flat, validate=False)
        Jq = angular_momentum_flux(m, surf, q, flat).components
        rows.append({
            "t": float(t),
            "P0": float(P[0]), "P1": float(P[1]),
            "P2": float(P[2]), "P3": float(P[3]),
            "mass": float(P[0]),
            "com_x": float(q[1]), "com_y": float(q[2]), "com_z": float(q[3]),
            "j_residual": float(np.max(np.abs(Jq[:, 0]))),
        })
    return rows


def write_slice_csv(path, m: MassMomentumField, flat: DerivativeOperator,
                    times, region=None) -> list[dict]:
    """Write the slice summary as CSV (fixed column set, %.12g formatting);
    returns the rows for reuse."""
    rows = slice_report(m, flat, times, region)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SLICE_CSV_COLUMNS)
        for row in rows:
            w.writerow([f"{row[c]:.12g}" for c in SLICE_CSV_COLUMNS])
    return rows
