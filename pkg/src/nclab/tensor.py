"""Dense tensors and smooth tensor fields on a global four-dimensional chart.

Index convention, used everywhere in this package: a tensor of valence
(r, s) is stored as a dense float array of shape (4,)*(r+s) with the r
contravariant axes first and the s covariant axes after them.  Chart
axis 0 is coordinate time, axes 1..3 are spatial.  Operations that add a
covariant slot (partial and covariant derivatives) insert it as the
*first* covariant axis, i.e. between the contravariant block and the
existing covariant block.  Total rank is capped at 6.

Fields evaluate on batches: an event batch is an (N, 4) array and a
sampler returns (N, 4, ..., 4).  Analytic fields may carry an exact
derivative closure; otherwise a 4th-order central stencil is used.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage
from scipy.stats import qmc

DIM = 4
MAX_RANK = 6

__all__ = [
    "DIM",
    "Tensor",
    "Box",
    "as_event",
    "as_events",
    "outer",
    "contract",
    "antisymmetrize",
    "TensorField",
    "GridField",
    "constant_field",
    "add_fields",
    "partial_derivative",
    "sobol_events",
]


def as_event(e) -> np.ndarray:
    """Coerce to a finite float 4-vector."""
    e = np.asarray(e, dtype=float).reshape(-1)
    if e.shape != (DIM,):
        raise ValueError(f"event must have {DIM} components, got shape {e.shape}")
    if not np.all(np.isfinite(e)):
        raise ValueError("event has non-finite components")
    return e


def as_events(events) -> np.ndarray:
    """Coerce to an (N, 4) batch of events."""
    a = np.asarray(events, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != DIM:
        raise ValueError(f"expected (N, {DIM}) event batch, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Tensor:
    """A dense tensor at a point.  valence = (r, s); see the module docstring
    for the slot layout."""

    valence: tuple[int, int]
    components: np.ndarray

    def __post_init__(self):
        r, s = self.valence
        if r < 0 or s < 0 or r + s > MAX_RANK:
            raise ValueError(f"valence {self.valence} out of range (rank cap {MAX_RANK})")
        comp = np.asarray(self.components, dtype=float)
        if comp.shape != (DIM,) * (r + s):
            raise ValueError(
                f"components shape {comp.shape} does not match valence {self.valence}"
            )
        object.__setattr__(self, "components", comp)

    @property
    def rank(self) -> int:
        return self.valence[0] + self.valence[1]

    def __add__(self, other: "Tensor") -> "Tensor":
        if self.valence != other.valence:
            raise ValueError("valence mismatch in tensor addition")
        return Tensor(self.valence, self.components + other.components)

    def __sub__(self, other: "Tensor") -> "Tensor":
        if self.valence != other.valence:
            raise ValueError("valence mismatch in tensor subtraction")
        return Tensor(self.valence, self.components - other.components)

    def __mul__(self, scalar: float) -> "Tensor":
        return Tensor(self.valence, self.components * float(scalar))

    __rmul__ = __mul__


def outer(a: Tensor, b: Tensor) -> Tensor:
    """Tensor product, with slots regrouped into the standard layout
    (all contravariant axes first)."""
    ra, sa = a.valence
    rb, sb = b.valence
    if ra + sa + rb + sb > MAX_RANK:
        raise ValueError("tensor product exceeds rank cap")
    prod = np.tensordot(a.components, b.components, axes=0)
    # axes: [ups_a, downs_a, ups_b, downs_b] -> [ups_a, ups_b, downs_a, downs_b]
    perm = (
        list(range(ra))
        + list(range(ra + sa, ra + sa + rb))
        + list(range(ra, ra + sa))
        + list(range(ra + sa + rb, ra + sa + rb + sb))
    )
    return Tensor((ra + rb, sa + sb), np.transpose(prod, perm))


def contract(t: Tensor, up_slot: int, down_slot: int) -> Tensor:
    """Contract the up_slot-th contravariant slot with the down_slot-th
    covariant slot (each counted within its own block)."""
    r, s = t.valence
    if not (0 <= up_slot < r):
        raise ValueError(f"up_slot {up_slot} out of range for valence {t.valence}")
    if not (0 <= down_slot < s):
        raise ValueError(f"down_slot {down_slot} out of range for valence {t.valence}")
    comps = np.trace(t.components, axis1=up_slot, axis2=r + down_slot)
    return Tensor((r - 1, s - 1), comps)


def _slot_block(valence: tuple[int, int], slots: tuple[int, ...]) -> None:
    r, s = valence
    rank = r + s
    for k in slots:
        if not (0 <= k < rank):
            raise ValueError(f"slot {k} out of range for rank {rank}")
    ups = [k < r for k in slots]
    if any(ups) and not all(ups):
        raise ValueError("antisymmetrization slots must all be contravariant or all covariant")


def antisymmetrize(t: Tensor, slots) -> Tensor:
    """Alternation over the given slots (1/k! convention).  All slots must
    live in the same block (all contravariant or all covariant); slot
    indices are global positions in the axis layout."""
    slots = tuple(sorted(int(k) for k in slots))
    if len(set(slots)) != len(slots):
        raise ValueError("duplicate slots")
    _slot_block(t.valence, slots)
    k = len(slots)
    if k <= 1:
        return Tensor(t.valence, t.components.copy())
    rank = t.rank
    acc = np.zeros_like(t.components)
    for perm in itertools.permutations(range(k)):
        sign = _perm_sign(perm)
        axes = list(range(rank))
        for i, p in enumerate(perm):
            axes[slots[i]] = slots[p]
        acc += sign * np.transpose(t.components, axes)
    return Tensor(t.valence, acc / math.factorial(k))


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


@dataclass(frozen=True)
class Box:
    """Axis-aligned working region in chart coordinates (time axis first).
    An optional spatial ball around the spatial origin can be excluded
    (point-source models)."""

    lo: np.ndarray
    hi: np.ndarray
    exclude_radius: float = 0.0

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(DIM)
        hi = np.asarray(self.hi, dtype=float).reshape(DIM)
        if np.any(hi <= lo):
            raise ValueError("box must have positive extent on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, events, margin: float = 0.0) -> np.ndarray:
        ev = as_events(events)
        ok = np.all(ev >= self.lo + margin, axis=1) & np.all(ev <= self.hi - margin, axis=1)
        if self.exclude_radius > 0.0:
            r = np.linalg.norm(ev[:, 1:], axis=1)
            ok &= r >= self.exclude_radius + margin
        return ok

    def shrink(self, margin: float) -> "Box":
        return Box(self.lo + margin, self.hi - margin, self.exclude_radius)


def sobol_events(box: Box, n: int, margin: float = 0.0) -> np.ndarray:
    """Deterministic quasi-random events in the box (excluded ball honoured).
    Unscrambled Sobol points, so repeated calls give identical plans."""
    sampler = qmc.Sobol(d=DIM, scramble=False)
    lo = box.lo + margin
    hi = box.hi - margin
    out = np.empty((0, DIM))
    # oversample until enough points survive the excluded-ball filter;
    # power-of-two draws keep the Sobol sequence balanced
    m = 1 << max(3, int(np.ceil(np.log2(max(n, 1)))))
    while out.shape[0] < n:
        pts = lo + sampler.random(m) * (hi - lo)
        if box.exclude_radius > 0.0:
            keep = np.linalg.norm(pts[:, 1:], axis=1) >= box.exclude_radius + margin
            pts = pts[keep]
        out = np.vstack([out, pts])
        m *= 2
    return out[:n]


class TensorField:
    """A tensor field given by a batch sampler over a bounding box.

    Parameters
    ----------
    valence : (r, s)
    sampler : callable mapping an (N, 4) event batch to (N, 4, ..., 4)
    box : Box
    derivative : optional callable giving exact partials, shaped like the
        output of `partial_derivative` batched over events (derivative
        axis inserted as the first covariant axis)
    backend : "analytic" or "grid" (tolerance tagging downstream)
    """

    # optional closure for exact second derivatives of scalar fields,
    # shaped (N, 4, 4) with axes (first deriv, second deriv)
    _second_derivative = None

    def __init__(self, valence, sampler, box: Box, derivative=None, backend: str = "analytic"):
        r, s = valence
        if r + s > MAX_RANK:
            raise ValueError("field rank exceeds cap")
        self.valence = (int(r), int(s))
        self._sampler = sampler
        self.box = box
        self._derivative = derivative
        self.backend = backend

    @property
    def shape(self) -> tuple[int, ...]:
        return (DIM,) * (self.valence[0] + self.valence[1])

    def sample(self, events) -> np.ndarray:
        ev = as_events(events)
        out = np.asarray(self._sampler(ev), dtype=float)
        want = (ev.shape[0],) + self.shape
        if out.shape != want:
            raise ValueError(f"sampler returned shape {out.shape}, expected {want}")
        return out

    def at(self, event) -> Tensor:
        return Tensor(self.valence, self.sample(as_event(event))[0])

    def default_step(self) -> float:
        return 1e-3 * float(np.max(self.box.extent))

    def partial(self, events, step: float | None = None) -> np.ndarray:
        """Batched partial derivative; valence (r, s+1), derivative axis
        inserted as the first covariant axis.  An exact closure is used
        when available unless a step is forced explicitly."""
        ev = as_events(events)
        if self._derivative is not None and step is None:
            r, s = self.valence
            out = np.asarray(self._derivative(ev), dtype=float)
            want = (ev.shape[0],) + (DIM,) * (r + s + 1)
            if out.shape != want:
                raise ValueError(f"derivative closure returned {out.shape}, expected {want}")
            return out
        return self._fd_partial(ev, step)

    def _fd_partial(self, ev: np.ndarray, step: float | None) -> np.ndarray:
        h = self.default_step() if step is None else float(step)
        if h <= 0:
            raise ValueError("step must be positive")
        if not np.all(self.box.contains(ev, margin=2 * h)):
            raise ValueError("stencil exits the field's bounding box")
        n = ev.shape[0]
        r, s = self.valence
        out = np.empty((n, DIM) + self.shape)
        for d in range(DIM):
            offs = np.zeros(DIM)
            offs[d] = h
            fp1 = self.sample(ev + offs)
            fm1 = self.sample(ev - offs)
            fp2 = self.sample(ev + 2 * offs)
            fm2 = self.sample(ev - 2 * offs)
            out[:, d] = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h)
        # move derivative axis to first covariant position
        perm = [0] + [1 + 1 + i for i in range(r)] + [1] + [2 + r + i for i in range(s)]
        return np.transpose(out, perm)

    def partial_at(self, event, step: float | None = None) -> Tensor:
        r, s = self.valence
        return Tensor((r, s + 1), self.partial(as_event(event), step)[0])


def partial_derivative(f: TensorField, e, step: float | None = None) -> Tensor:
    """Partial derivative of f at e: exact closure when the field carries
    one and no step is forced, else a 4th-order central stencil."""
    return f.partial_at(e, step)


def constant_field(valence, components, box: Box, backend: str = "analytic") -> TensorField:
    comp = np.asarray(components, dtype=float)
    r, s = valence
    if comp.shape != (DIM,) * (r + s):
        raise ValueError("component shape does not match valence")

    def sampler(ev):
        return np.broadcast_to(comp, (ev.shape[0],) + comp.shape).copy()

    def derivative(ev):
        return np.zeros((ev.shape[0],) + (DIM,) * (r + s + 1))

    return TensorField(valence, sampler, box, derivative=derivative, backend=backend)


def add_fields(a: TensorField, b: TensorField) -> TensorField:
    """Pointwise sum.  Derivative closures combine when both fields have
    one; otherwise the sum falls back to stencils."""
    if a.valence != b.valence:
        raise ValueError("valence mismatch")
    box = a.box
    deriv = None
    if a._derivative is not None and b._derivative is not None:
        deriv = lambda ev: a.partial(ev) + b.partial(ev)
    backend = "grid" if "grid" in (a.backend, b.backend) else "analytic"
    return TensorField(
        a.valence,
        lambda ev: a.sample(ev) + b.sample(ev),
        box,
        derivative=deriv,
        backend=backend,
    )


_GRID_PAD = 4


def _pad_cubic(arr: np.ndarray, depth: int) -> np.ndarray:
    """Extend a (nt, nx, ny, nz, comps) array by cubic extrapolation along
    each lattice axis (exact continuation for cubic data)."""
    for ax in range(DIM):
        a = np.moveaxis(arr, ax, 0)
        for _ in range(depth):
            first = (4.0 * a[0] - 6.0 * a[1] + 4.0 * a[2] - a[3])[None]
            last = (4.0 * a[-1] - 6.0 * a[-2] + 4.0 * a[-3] - a[-4])[None]
            a = np.concatenate([first, a, last], axis=0)
        arr = np.moveaxis(a, 0, ax)
    return arr


class GridField(TensorField):
    """Tensor field interpolated from a uniform 4-D lattice with
    tensor-product cubic splines.

    `values` has shape (nt, nx, ny, nz) + tensor shape.  Outside the
    lattice the field either vanishes (fill="zero", used for compactly
    supported sources) or continues from the nearest edge (fill="clamp").
    """

    def __init__(self, valence, origin, spacing, values, fill: str = "zero"):
        origin = np.asarray(origin, dtype=float).reshape(DIM)
        spacing = np.asarray(spacing, dtype=float).reshape(DIM)
        if np.any(spacing <= 0):
            raise ValueError("lattice spacing must be positive")
        values = np.asarray(values, dtype=float)
        r, s = valence
        tshape = (DIM,) * (r + s)
        if values.shape[DIM:] != tshape or values.ndim != DIM + r + s:
            raise ValueError("values shape does not match valence")
        if any(n < 4 for n in values.shape[:DIM]):
            raise ValueError("need at least 4 lattice nodes per axis for cubic interpolation")
        if fill not in ("zero", "clamp"):
            raise ValueError("fill must be 'zero' or 'clamp'")
        self.origin = origin
        self.spacing = spacing
        self.grid_shape = values.shape[:DIM]
        self.values = values
        self.fill = fill
        hi = origin + spacing * (np.array(self.grid_shape) - 1)
        box = Box(origin, hi)
        # pad by cubic extrapolation before filtering: the filter's own
        # boundary handling then only pollutes coefficients inside the
        # padding, never over the declared domain
        flat = _pad_cubic(values.reshape(self.grid_shape + (-1,)), _GRID_PAD)
        self._coeffs = np.stack(
            [
                ndimage.spline_filter(flat[..., k], order=3, mode="mirror")
                for k in range(flat.shape[-1])
            ],
            axis=-1,
        )
        super().__init__(valence, self._interp, box, derivative=None, backend="grid")

    def _interp(self, ev: np.ndarray) -> np.ndarray:
        idx = (ev - self.origin) / self.spacing  # (N, 4) fractional indices
        ncomp = self._coeffs.shape[-1]
        n = ev.shape[0]
        hi = np.array(self.grid_shape, dtype=float) - 1.0
        clipped = np.clip(idx, 0.0, hi)
        out = np.empty((n, ncomp))
        coords = clipped.T + _GRID_PAD
        for k in range(ncomp):
            out[:, k] = ndimage.map_coordinates(
                self._coeffs[..., k], coords, order=3, prefilter=False, mode="mirror"
            )
        if self.fill == "zero":
            inside = np.all((idx >= 0.0) & (idx <= hi), axis=1)
            out[~inside] = 0.0
        return out.reshape((n,) + self.shape)

    def default_step(self) -> float:
        # derivative stencils on grid data should sample at the lattice scale
        return 0.5 * float(np.min(self.spacing))
