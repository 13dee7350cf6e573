"""Classical spacetime structure: degenerate metrics, derivative operators,
curvature.

A derivative operator is stored as its difference field C^a_bc relative to
the coordinate operator of the global chart (symmetric in the two covariant
slots).  The action on fields is

    nabla_b xi^a  = d_b xi^a  - C^a_bn xi^n
    nabla_b omega_c = d_b omega_c + C^n_bc omega_n

one correction term per slot.  The sign convention is fixed so that the
geometrization of a Newtonian model turns forced trajectories into
geodesics: with C^a_bc = -t_b t_c grad^a(phi), time-normalized geodesics of
the curved operator obey d2x/dt2 = -grad(phi).

Curvature follows the convention R^a_bcd xi^b = -2 nabla_[c nabla_d] xi^a,
which in terms of the difference field reads

    R^a_bcd = d_c C^a_db - d_d C^a_cb - C^a_cm C^m_db + C^a_dm C^m_cb

and the Ricci tensor is the contraction R_bc = R^n_bcn.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import (
    DIM,
    Box,
    Tensor,
    TensorField,
    as_event,
    as_events,
    constant_field,
    add_fields,
    sobol_events,
)

__all__ = [
    "DerivativeOperator",
    "coordinate_operator",
    "compose_operators",
    "covariant_derivative",
    "ClassicalSpacetime",
    "adapted_flat_spacetime",
    "CurvatureReport",
    "riemann",
    "VectorClass",
    "classify_vector",
]

TEMPORAL_COMPONENTS = np.array([1.0, 0.0, 0.0, 0.0])
SPATIAL_COMPONENTS = np.diag([0.0, 1.0, 1.0, 1.0])
# spatial projection hat-h_ab relative to the adapted unit timelike field
SPATIAL_PROJECTION = np.diag([0.0, 1.0, 1.0, 1.0])

_SYM_PROBE = 7  # probe points used for cheap structural validation


class DerivativeOperator:
    """Derivative operator encoded by its difference field from the
    coordinate operator."""

    def __init__(self, difference: TensorField):
        if difference.valence != (1, 2):
            raise ValueError("difference field must have valence (1, 2)")
        self.difference = difference
        self._spatially_trivial: bool | None = None

    @property
    def box(self) -> Box:
        return self.difference.box

    def coefficients(self, events) -> np.ndarray:
        """C^a_bc at a batch of events, shape (N, 4, 4, 4)."""
        return self.difference.sample(events)

    def coefficient_partials(self, events, step: float | None = None) -> np.ndarray:
        """d_d C^a_bc, shape (N, 4, 4, 4, 4) with axes (a, d, b, c)."""
        return self.difference.partial(events, step)

    def acceleration(self, events, velocities) -> np.ndarray:
        """Geodesic acceleration C^a_nm v^n v^m, batched."""
        C = self.coefficients(events)
        v = np.asarray(velocities, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        return np.einsum("qanm,qn,qm->qa", C, v, v)

    def spatially_trivial(self) -> bool:
        """True when the difference field annihilates spatial directions
        (C^a_bc contracted with any spatial index vanishes), probed on a
        coarse lattice.  Such operators have slice-constant frames."""
        if self._spatially_trivial is None:
            box = self.box
            axes = [box.lo[i] + np.linspace(0.12, 0.88, 3) * (box.hi[i] - box.lo[i])
                    for i in range(DIM)]
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, DIM)
            if box.exclude_radius > 0.0:
                pts = pts[np.linalg.norm(pts[:, 1:], axis=1) > box.exclude_radius]
            C = self.coefficients(pts)
            self._spatially_trivial = bool(np.max(np.abs(C[:, :, 1:, :])) < 1e-13)
        return self._spatially_trivial


def coordinate_operator(box: Box) -> DerivativeOperator:
    """The flat coordinate derivative operator (vanishing difference field)."""
    return DerivativeOperator(constant_field((1, 2), np.zeros((DIM,) * 3), box))


def compose_operators(op: DerivativeOperator, extra: TensorField) -> DerivativeOperator:
    """Operator whose difference from `op` is `extra`; difference fields
    relative to the coordinate operator add."""
    if extra.valence != (1, 2):
        raise ValueError("difference field must have valence (1, 2)")
    probes = sobol_events(extra.box, _SYM_PROBE, margin=1e-6 * float(np.max(extra.box.extent)))
    vals = extra.sample(probes)
    sym_err = np.max(np.abs(vals - np.swapaxes(vals, 2, 3)))
    if sym_err > 1e-8:
        raise ValueError(f"difference field not symmetric in its covariant slots ({sym_err:.2e})")
    return DerivativeOperator(add_fields(op.difference, extra))


def covariant_derivative(op: DerivativeOperator, f: TensorField, step: float | None = None) -> TensorField:
    """nabla f as a field of valence (r, s+1); derivative slot first among
    the covariant slots."""
    r, s = f.valence
    up = "abcdef"[:r]
    down = "uvwxyz"[:s]
    target = f"q{up}D{down}"

    def sampler(ev):
        base = f.partial(ev, step)
        vals = f.sample(ev)
        C = op.coefficients(ev)
        for i in range(r):
            src = f"q{up[:i]}n{up[i + 1:]}{down}"
            base = base - np.einsum(f"q{up[i]}Dn,{src}->{target}", C, vals, optimize=True)
        for j in range(s):
            src = f"q{up}{down[:j]}n{down[j + 1:]}"
            base = base + np.einsum(f"qnD{down[j]},{src}->{target}", C, vals, optimize=True)
        return base

    return TensorField((r, s + 1), sampler, f.box, backend=f.backend)


def riemann_components(op: DerivativeOperator, events, step: float | None = None) -> np.ndarray:
    """R^a_bcd at a batch of events, shape (N, 4, 4, 4, 4)."""
    ev = as_events(events)
    C = op.coefficients(ev)
    dC = op.coefficient_partials(ev, step)  # (q, a, d, b, c)
    term = np.einsum("qacdb->qabcd", dC) - np.einsum("qadcb->qabcd", dC)
    quad = np.einsum("qacm,qmdb->qabcd", C, C, optimize=True)
    return term - quad + np.swapaxes(quad, 3, 4)


@dataclass
class CurvatureReport:
    """Curvature of an operator over a sample of events, with the raised
    variants used by the flatness/compatibility conditions.

    residuals:
      flatness            sup |R^a_bcd|
      spatial_flatness    sup |R^abcd|   (all lower slots raised with h)
      mixed_flatness      sup |R^ab_cd|  (second slot raised with h)
      pair_symmetry       sup |R^a_b^c_d - R^c_d^a_b|
      first_bianchi       sup |R^a_[bcd]|
    """

    events: np.ndarray
    riemann_values: np.ndarray
    spatial_metric: np.ndarray
    residuals: dict

    def ricci(self) -> np.ndarray:
        # R_bc = R^n_bcn
        return np.einsum("qnbcn->qbc", self.riemann_values)


def riemann(op: DerivativeOperator, spacetime: "ClassicalSpacetime", events,
            step: float | None = None) -> CurvatureReport:
    ev = as_events(events)
    R = riemann_components(op, ev, step)
    h = spacetime.spatial.sample(ev)
    raised_all = np.einsum("qanmw,qnb,qmc,qwd->qabcd", R, h, h, h, optimize=True)
    mixed = np.einsum("qancd,qnb->qabcd", R, h, optimize=True)
    updown = np.einsum("qabnd,qnc->qabcd", R, h, optimize=True)  # R^a_b^c_d
    pair = updown - np.einsum("qcdab->qabcd", updown)
    bianchi = R + np.einsum("qacdb->qabcd", R) + np.einsum("qadbc->qabcd", R)
    residuals = {
        "flatness": float(np.max(np.abs(R))),
        "spatial_flatness": float(np.max(np.abs(raised_all))),
        "mixed_flatness": float(np.max(np.abs(mixed))),
        "pair_symmetry": float(np.max(np.abs(pair))),
        "first_bianchi": float(np.max(np.abs(bianchi))) / 3.0,
    }
    return CurvatureReport(ev, R, h, residuals)


@dataclass(frozen=True)
class ClassicalSpacetime:
    """The quadruple (chart domain, t_a, h^ab, derivative operator)."""

    temporal: TensorField  # (0,1)
    spatial: TensorField   # (2,0)
    op: DerivativeOperator
    box: Box

    def with_operator(self, op: DerivativeOperator) -> "ClassicalSpacetime":
        return ClassicalSpacetime(self.temporal, self.spatial, op, self.box)

    def metric_residuals(self, events=None, n: int = 1000) -> dict:
        """Orthogonality, signature and compatibility residuals over a
        sampling plan (quasi-random events by default)."""
        if events is None:
            margin = 0.02 * float(np.max(self.box.extent))
            events = sobol_events(self.box, n, margin=margin)
        ev = as_events(events)
        t = self.temporal.sample(ev)
        h = self.spatial.sample(ev)
        orth = np.einsum("qab,qb->qa", h, t)
        eigs = np.linalg.eigvalsh(h)
        # signature (0,1,1,1): one eigenvalue ~0, three strictly positive
        sig_zero = np.max(np.abs(eigs[:, 0]))
        sig_pos = np.min(eigs[:, 1:])
        grad_t = covariant_derivative(self.op, self.temporal).sample(ev)
        grad_h = covariant_derivative(self.op, self.spatial).sample(ev)
        return {
            "orthogonality": float(np.max(np.abs(orth))),
            "signature_kernel": float(sig_zero),
            "signature_positive": float(sig_pos),
            "temporal_compatibility": float(np.max(np.abs(grad_t))),
            "spatial_compatibility": float(np.max(np.abs(grad_h))),
        }

    def compatibility_tolerance(self) -> float:
        grid = "grid" in (self.temporal.backend, self.spatial.backend,
                          self.op.difference.backend)
        return 1e-5 if grid else 1e-8


def adapted_flat_spacetime(box: Box) -> ClassicalSpacetime:
    """Flat classical spacetime in an adapted chart: t_a = (1,0,0,0),
    h^ab = diag(0,1,1,1), coordinate derivative operator."""
    t = constant_field((0, 1), TEMPORAL_COMPONENTS, box)
    h = constant_field((2, 0), SPATIAL_COMPONENTS, box)
    return ClassicalSpacetime(t, h, coordinate_operator(box), box)


@dataclass(frozen=True)
class VectorClass:
    kind: str                      # "timelike" or "spacelike"
    temporal_length: float
    spatial_length: float | None   # None for timelike vectors


def classify_vector(st: ClassicalSpacetime, e, v, tol: float = 1e-8) -> VectorClass:
    """Classify v at e as timelike (t_a v^a != 0) or spacelike (v in the
    range of h^ab); spacelike vectors get the length of any h-preimage.

    The preimage sigma_a of a spacelike vector is defined only up to the
    kernel of h^ab, but the length h^ab sigma_a sigma_b is gauge
    independent; a rank-revealing least-squares solve (cutoff 1e-10) picks
    the minimal-norm representative.
    """
    e = as_event(e)
    v = np.asarray(v, dtype=float).reshape(DIM)
    t = st.temporal.sample(e)[0]
    h = st.spatial.sample(e)[0]
    tv = float(t @ v)
    if abs(tv) > tol:
        return VectorClass("timelike", abs(tv), None)
    sigma, res, rank, sv = np.linalg.lstsq(h, v, rcond=1e-10)
    if np.linalg.norm(h @ sigma - v) > max(tol, 1e-12 * max(1.0, np.linalg.norm(v))):
        raise ValueError("vector is neither timelike nor in the range of the spatial metric")
    length = float(np.sqrt(max(sigma @ h @ sigma, 0.0)))
    return VectorClass("spacelike", abs(tv), length)
