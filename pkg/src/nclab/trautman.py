"""Geometrization and recovery maps between Newtonian gravitation models
and curved classical spacetimes, plus the flat-operator-on-a-curve
construction used by the centre-of-mass experiments.

A Newtonian model is a flat classical spacetime with a potential phi and
source density rho satisfying the Poisson equation.  Geometrization folds
the force into the derivative operator via the difference field

    C^a_bc = -t_b t_c grad^a(phi),        grad^a = h^an d_n

after which free fall along the curved operator reproduces forced motion
along the flat one.  Recovery inverts this: it reads the acceleration
field of the adapted rest congruence off the curved operator, checks that
it is curl-free, and line-integrates it back to a potential gauged to
vanish at the anchor event.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .tensor import (
    DIM,
    Box,
    TensorField,
    add_fields,
    as_event,
    as_events,
    constant_field,
    sobol_events,
)
from .spacetime import (
    SPATIAL_COMPONENTS,
    SPATIAL_PROJECTION,
    TEMPORAL_COMPONENTS,
    ClassicalSpacetime,
    DerivativeOperator,
    adapted_flat_spacetime,
    compose_operators,
    riemann,
)
from .geodesics import WorldLine, reparametrize_by_time

__all__ = [
    "NewtonianModel",
    "GeometrizedModel",
    "geometrize",
    "recover",
    "flat_operator_on_curve",
    "harmonic_trap_model",
    "point_mass_model",
    "uniform_field_model",
    "vacuum_model",
    "PoissonMismatchError",
    "RecoveryError",
]

FOUR_PI = 4.0 * np.pi


class PoissonMismatchError(ValueError):
    """Potential and density do not satisfy the Poisson equation."""


class RecoveryError(ValueError):
    """Curved operator is not of gravitational (recoverable) type."""


@dataclass(frozen=True)
class NewtonianModel:
    """Flat classical spacetime + potential + source density."""

    spacetime: ClassicalSpacetime
    potential: TensorField  # scalar
    density: TensorField    # scalar

    @property
    def box(self) -> Box:
        return self.spacetime.box

    def spatial_gradient(self) -> TensorField:
        """grad^a(phi) = h^ab d_b phi as a vector field, with an exact
        derivative closure when the potential carries second derivatives."""
        h_field = self.spacetime.spatial
        phi = self.potential

        def sampler(ev):
            g = phi.partial(ev)            # (N, 4)
            h = h_field.sample(ev)
            return np.einsum("qab,qb->qa", h, g)

        deriv = None
        if phi._second_derivative is not None:
            second = phi._second_derivative

            def deriv(ev):
                hess = second(ev)          # (N, 4, 4), axes (d, m) = d_d d_m phi
                h = h_field.sample(ev)
                # d_d grad^a = h^am d_d d_m phi; derivative axis first covariant
                return np.einsum("qam,qdm->qad", h, hess)

        return TensorField((1, 0), sampler, phi.box, derivative=deriv,
                           backend=phi.backend)

    def poisson_residual(self, events=None, n: int = 400) -> float:
        """sup |div grad(phi) - 4 pi rho| over a sampling plan."""
        if events is None:
            margin = 0.02 * float(np.max(self.box.extent))
            events = sobol_events(self.box, n, margin=margin)
        ev = as_events(events)
        grad = self.spatial_gradient()
        div = np.einsum("qaa->q", grad.partial(ev))
        rho = self.density.sample(ev)
        return float(np.max(np.abs(div - FOUR_PI * rho)))


@dataclass(frozen=True)
class GeometrizedModel:
    """Curved classical spacetime + the source density it geometrizes."""

    spacetime: ClassicalSpacetime
    density: TensorField

    @property
    def box(self) -> Box:
        return self.spacetime.box

    def condition_residuals(self, events=None, n: int = 500) -> dict:
        """Residuals of the geometrization conditions over a sampling plan:

        ricci_source     sup |R_bc - 4 pi rho t_b t_c|
        pair_symmetry    sup |R^a_b^c_d - R^c_d^a_b|
        mixed_flatness   sup |R^ab_cd|
        """
        st = self.spacetime
        if events is None:
            margin = 0.02 * float(np.max(self.box.extent))
            events = sobol_events(self.box, n, margin=margin)
        ev = as_events(events)
        rep = riemann(st.op, st, ev)
        t = st.temporal.sample(ev)
        rho = self.density.sample(ev)
        source = FOUR_PI * np.einsum("q,qb,qc->qbc", rho, t, t)
        return {
            "ricci_source": float(np.max(np.abs(rep.ricci() - source))),
            "pair_symmetry": rep.residuals["pair_symmetry"],
            "mixed_flatness": rep.residuals["mixed_flatness"],
        }


def geometrize(model: NewtonianModel, tol: float = 1e-6) -> GeometrizedModel:
    """Fold the model's force into the derivative operator.

    Refuses models whose potential/density pair violates the Poisson
    equation beyond `tol`.
    """
    res = model.poisson_residual()
    if res > tol:
        raise PoissonMismatchError(
            f"Poisson residual {res:.3e} exceeds {tol:.1e}; refusing to geometrize")
    st = model.spacetime
    grad = model.spatial_gradient()
    t_field = st.temporal

    def sampler(ev):
        g = grad.sample(ev)
        t = t_field.sample(ev)
        return -np.einsum("qb,qc,qa->qabc", t, t, g)

    deriv = None
    if grad._derivative is not None:
        def deriv(ev):
            dg = grad.partial(ev)          # (N, a, d)
            t = t_field.sample(ev)
            return -np.einsum("qb,qc,qad->qadbc", t, t, dg)

    diff = TensorField((1, 2), sampler, model.box, derivative=deriv,
                       backend=grad.backend)
    curved = compose_operators(st.op, diff)
    return GeometrizedModel(st.with_operator(curved), model.density)


def _acceleration_field(g: GeometrizedModel) -> TensorField:
    """Acceleration of the adapted rest congruence: a^b = -C^b_nm eta^n eta^m
    with eta = (1,0,0,0); spatial for compatible operators."""
    op = g.spacetime.op
    eta = TEMPORAL_COMPONENTS

    def sampler(ev):
        C = op.coefficients(ev)
        return -np.einsum("qbnm,n,m->qb", C, eta, eta)

    deriv = None
    if op.difference._derivative is not None:
        def deriv(ev):
            dC = op.coefficient_partials(ev)   # (q, b, d, n, m)
            return -np.einsum("qbdnm,n,m->qbd", dC, eta, eta)

    return TensorField((1, 0), sampler, g.box, derivative=deriv,
                       backend=op.difference.backend)


def _leg_points(p0: np.ndarray, p1: np.ndarray, order: int = 12, panels: int = 8):
    """Gauss-Legendre nodes/weights along the segment p0 -> p1."""
    x, w = np.polynomial.legendre.leggauss(order)
    pts = []
    wts = []
    for k in range(panels):
        a = k / panels
        b = (k + 1) / panels
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        lam = mid + half * x
        pts.append(p0[None, :] + lam[:, None] * (p1 - p0)[None, :])
        wts.append(w * half)
    return np.vstack(pts), np.concatenate(wts)


def recover(g: GeometrizedModel, anchor, tol: float = 1e-6,
            curl_tol: float = 1e-6, n_check: int = 300) -> NewtonianModel:
    """Invert geometrization: flat coordinate operator + potential with
    potential(anchor) = 0.

    Raises RecoveryError when the extracted acceleration field is not
    curl-free or when re-geometrizing fails to reproduce the input
    operator within `tol`.
    """
    anchor = as_event(anchor)
    box = g.box
    if not bool(box.contains(anchor[None, :])[0]):
        raise ValueError("anchor outside the working region")
    accel = _acceleration_field(g)

    margin = 0.02 * float(np.max(box.extent))
    ev = sobol_events(box, n_check, margin=margin)
    da = accel.partial(ev)                       # (q, a, d)
    curl = da - np.swapaxes(da, 1, 2)
    curl_res = float(np.max(np.abs(curl[:, 1:, 1:])))
    if curl_res > curl_tol:
        raise RecoveryError(
            f"acceleration field has curl residual {curl_res:.3e}; not a gradient")

    # Each potential value is a line integral of the acceleration along an
    # axis-aligned staircase from the anchor (curl-freeness was checked
    # above, so any path inside the region gives the same answer).  When the
    # region excludes a ball around the spatial origin a direct staircase
    # can cut through it, so the path detours through corner waypoints with
    # every coordinate pinned at +-wp; each leg then keeps its spatial
    # radius at or above min(|anchor|, |target|, wp), clear of the ball.
    exclude = float(box.exclude_radius)
    if exclude > 0.0:
        room = min(min(-box.lo[k], box.hi[k]) for k in (1, 2, 3))
        wp = 0.5 * (exclude + 0.9 * room)
        if wp <= exclude:
            raise RecoveryError(
                "working region too tight to route paths around the excluded ball")

    def _waypoints(q):
        start = anchor.copy()
        start[0] = q[0]  # the acceleration is spatial; time legs contribute 0
        if exclude == 0.0:
            corners = []
        else:
            corner_a = start.copy()
            corner_b = q.copy()
            corner_b[0] = q[0]
            corner_a[1:] = np.where(start[1:] >= 0, wp, -wp)
            corner_b[1:] = np.where(q[1:] >= 0, wp, -wp)
            corners = [corner_a, corner_b]
        chain = [start]
        for stop in corners + [q]:
            for axis in (1, 2, 3):
                nxt = chain[-1].copy()
                nxt[axis] = stop[axis]
                chain.append(nxt)
        return chain

    def potential_values(events):
        events = as_events(events)
        out = np.empty(events.shape[0])
        for i, q in enumerate(events):
            total = 0.0
            chain = _waypoints(q)
            for p, p_next in zip(chain[:-1], chain[1:]):
                moved = np.nonzero(p_next != p)[0]
                if moved.size == 0:
                    continue
                axis = int(moved[0])
                pts, wts = _leg_points(p, p_next)
                vals = accel.sample(pts)[:, axis]
                total += float(vals @ wts) * (p_next[axis] - p[axis])
            out[i] = total
        return out

    def phi_sampler(ev):
        return potential_values(ev)

    # In the adapted chart the spatial components of the acceleration field
    # equal the spatial partials of the potential, and only those are ever
    # consumed downstream (gradients are always taken against h^ab, which
    # annihilates the time component).  Static inputs make the time
    # component exact as well.
    def phi_derivative(ev):
        return accel.sample(ev)

    def phi_second(ev):
        # d_d d_m phi with axes (d, m); accel.partial has axes (m, d)
        return np.swapaxes(accel.partial(ev), 1, 2)

    phi = TensorField((0, 0), phi_sampler, box, derivative=phi_derivative,
                      backend=accel.backend)
    phi._second_derivative = phi_second

    flat_st = adapted_flat_spacetime(box)
    model = NewtonianModel(flat_st, phi, g.density)

    # round-trip check: re-geometrizing must reproduce the input operator
    re_geo = geometrize(model, tol=max(tol, 1e-6))
    diff = re_geo.spacetime.op.coefficients(ev) - g.spacetime.op.coefficients(ev)
    rt = float(np.max(np.abs(diff)))
    if rt > tol:
        raise RecoveryError(f"round-trip operator residual {rt:.3e} exceeds {tol:.1e}")
    return model


def flat_operator_on_curve(st: ClassicalSpacetime, curve: WorldLine,
                           mixed_tol: float = 1e-6) -> DerivativeOperator:
    """Flat compatible operator agreeing with st.op along the timelike
    curve.

    Construction: take the adapted rest field eta^a; form its acceleration
    phi1^a = eta^n nabla_n eta^a and the rotation/boost form
    kappa_ab = hat-h_n[b nabla_a] eta^n; the reference operator differs
    from st.op by 2 h^am t_(b kappa_c)m, and a final correction
    t_b t_c psi^a, with psi^a the value of -phi1^a on the curve extended
    slice-constantly, makes the result agree with st.op on the curve.
    """
    if np.any(curve.tangents[:, 0] <= 0):
        raise ValueError("curve must be future timelike (positive time component)")
    tcurve = reparametrize_by_time(curve)

    rep = riemann(st.op, st, sobol_events(st.box, 200,
                  margin=0.02 * float(np.max(st.box.extent))))
    if rep.residuals["mixed_flatness"] > mixed_tol:
        raise ValueError(
            f"operator has mixed curvature residual {rep.residuals['mixed_flatness']:.3e}; "
            "no flat compatible operator agrees with it on a curve")

    op = st.op
    t_comp = TEMPORAL_COMPONENTS
    h_comp = SPATIAL_COMPONENTS
    hat = SPATIAL_PROJECTION
    eta = TEMPORAL_COMPONENTS

    def kappa_values(ev):
        C = op.coefficients(ev)
        W = -np.einsum("qabn,n->qab", C, eta)      # nabla_b eta^a  (axes a,b)
        M = np.einsum("nb,qna->qab", hat, W)       # hat-h_nb nabla_a eta^n
        return 0.5 * (M - np.swapaxes(M, 1, 2))

    def kappa_partials(ev):
        dC = op.coefficient_partials(ev)           # (q, a, d, b, n)
        dW = -np.einsum("qadbn,n->qabd", dC, eta)  # d_d nabla_b eta^a -> axes (a,b,d)
        dM = np.einsum("nb,qnad->qabd", hat, dW)
        return 0.5 * (dM - np.swapaxes(dM, 1, 2))

    def ref_diff_sampler(ev):
        kap = kappa_values(ev)
        return (np.einsum("am,b,qcm->qabc", h_comp, t_comp, kap)
                + np.einsum("am,c,qbm->qabc", h_comp, t_comp, kap))

    ref_deriv = None
    if op.difference._derivative is not None:
        def ref_deriv(ev):
            dkap = kappa_partials(ev)              # (q, a, b, d)
            return (np.einsum("am,b,qcmd->qadbc", h_comp, t_comp, dkap)
                    + np.einsum("am,c,qbmd->qadbc", h_comp, t_comp, dkap))

    ref_diff = TensorField((1, 2), ref_diff_sampler, st.box, derivative=ref_deriv,
                           backend=op.difference.backend)

    # psi^a(t): -phi1^a along the curve, extended with constant components
    # over each slice (valid here: the reference operator is spatially flat)
    tmin, tmax = tcurve.time_range()
    C_curve = op.coefficients(tcurve.events)
    phi1 = -np.einsum("qanm,n,m->qa", C_curve, eta, eta)
    psi_spline = CubicSpline(tcurve.times, -phi1, axis=0)
    dpsi_spline = psi_spline.derivative()

    def corr_sampler(ev):
        psi = psi_spline(np.clip(ev[:, 0], tmin, tmax))
        return np.einsum("b,c,qa->qabc", t_comp, t_comp, psi)

    def corr_deriv(ev):
        dpsi = dpsi_spline(np.clip(ev[:, 0], tmin, tmax))
        out = np.zeros((ev.shape[0],) + (DIM,) * 4)
        out[:, :, 0, 0, 0] = dpsi
        return out

    corr = TensorField((1, 2), corr_sampler, st.box, derivative=corr_deriv,
                       backend=op.difference.backend)

    return compose_operators(op, add_fields(ref_diff, corr))


# --- model library ---------------------------------------------------------


def _scalar_model(box: Box, phi_fn, grad_fn, hess_fn, rho_fn) -> NewtonianModel:
    st = adapted_flat_spacetime(box)

    def phi_sampler(ev):
        return phi_fn(ev)

    def phi_derivative(ev):
        return grad_fn(ev)

    phi = TensorField((0, 0), phi_sampler, box, derivative=phi_derivative)
    phi._second_derivative = hess_fn
    rho = TensorField((0, 0), rho_fn, box,
                      derivative=None)
    return NewtonianModel(st, phi, rho)


def harmonic_trap_model(stiffness: float = 1.0, box: Box | None = None) -> NewtonianModel:
    """phi = k (x^2 + y^2 + z^2); rho = 6 k / 4 pi."""
    k = float(stiffness)
    if box is None:
        box = Box([-2.0, -2.0, -2.0, -2.0], [2.0, 2.0, 2.0, 2.0])

    def phi(ev):
        return k * np.sum(ev[:, 1:] ** 2, axis=1)

    def grad(ev):
        g = np.zeros_like(ev)
        g[:, 1:] = 2.0 * k * ev[:, 1:]
        return g

    def hess(ev):
        H = np.zeros((ev.shape[0], DIM, DIM))
        for i in (1, 2, 3):
            H[:, i, i] = 2.0 * k
        return H

    def rho(ev):
        return np.full(ev.shape[0], 6.0 * k / FOUR_PI)

    return _scalar_model(box, phi, grad, hess, rho)


def point_mass_model(mass: float = 1.0, box: Box | None = None) -> NewtonianModel:
    """phi = -M/r outside an excluded ball around the spatial origin; vacuum
    (rho = 0) on the working region."""
    M = float(mass)
    if box is None:
        box = Box([-2.0, -2.0, -2.0, -2.0], [2.0, 2.0, 2.0, 2.0], exclude_radius=0.3)
    # The singularity must stay outside the working region: either via an
    # excluded ball or because the box itself is spatially bounded away from
    # the origin.
    nearest = np.maximum(np.maximum(box.lo[1:], -box.hi[1:]), 0.0)
    if box.exclude_radius <= 0.0 and np.linalg.norm(nearest) < 0.05:
        raise ValueError("point-mass model needs an excluded ball around the origin")

    def phi(ev):
        r = np.linalg.norm(ev[:, 1:], axis=1)
        return -M / r

    def grad(ev):
        r = np.linalg.norm(ev[:, 1:], axis=1)
        g = np.zeros_like(ev)
        g[:, 1:] = M * ev[:, 1:] / r[:, None] ** 3
        return g

    def hess(ev):
        x = ev[:, 1:]
        r = np.linalg.norm(x, axis=1)
        H = np.zeros((ev.shape[0], DIM, DIM))
        eye = np.eye(3)
        H[:, 1:, 1:] = M * (eye[None, :, :] / r[:, None, None] ** 3
                            - 3.0 * x[:, :, None] * x[:, None, :] / r[:, None, None] ** 5)
        return H

    def rho(ev):
        return np.zeros(ev.shape[0])

    return _scalar_model(box, phi, grad, hess, rho)


def uniform_field_model(pull: float = 1.0, box: Box | None = None) -> NewtonianModel:
    """phi = g z: constant force (0,0,0,-g); vacuum."""
    g = float(pull)
    if box is None:
        box = Box([-2.0, -2.0, -2.0, -2.0], [2.0, 2.0, 2.0, 2.0])

    def phi(ev):
        return g * ev[:, 3]

    def grad(ev):
        out = np.zeros_like(ev)
        out[:, 3] = g
        return out

    def hess(ev):
        return np.zeros((ev.shape[0], DIM, DIM))

    def rho(ev):
        return np.zeros(ev.shape[0])

    return _scalar_model(box, phi, grad, hess, rho)


def vacuum_model(box: Box | None = None) -> NewtonianModel:
    """phi = 0: the flat model."""
    if box is None:
        box = Box([-2.0, -2.0, -2.0, -2.0], [2.0, 2.0, 2.0, 2.0])

    def phi(ev):
        return np.zeros(ev.shape[0])

    def grad(ev):
        return np.zeros_like(ev)

    def hess(ev):
        return np.zeros((ev.shape[0], DIM, DIM))

    def rho(ev):
        return np.zeros(ev.shape[0])

    return _scalar_model(box, phi, grad, hess, rho)
