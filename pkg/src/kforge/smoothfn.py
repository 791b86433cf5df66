"""One-dimensional C-infinity functions with derivatives, plus adaptive quadrature.

Every profile function of the immersion is a :class:`SmoothFn`: a vectorised
callable on a closed interval that can also report its first, second and
(for closed-form pieces) third derivative.  Pieces compose by linear
combination, products, blending and antiderivatives.

The transition kernel is the symmetric exponential glue

    g(x) = h(x) / (h(x) + h(1 - x)),    h(x) = exp(-1/x)  for x > 0,

written in the numerically stable form ``g = expit(1/(1-x) - 1/x)``.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SmoothFnError",
    "InvalidIntervalError",
    "DomainError",
    "IntegrandError",
    "SmoothFn",
    "Constant",
    "Step",
    "Combination",
    "Product",
    "Blend",
    "Piecewise",
    "Formula",
    "Antiderivative",
    "glue",
    "make_step",
    "make_plateau",
    "eval_deriv",
    "integrate",
    "gk15_panel",
]

DEFAULT_TOL = 1e-10
FD_STEP = 1e-5


class SmoothFnError(ValueError):
    pass


class InvalidIntervalError(SmoothFnError):
    pass


class DomainError(SmoothFnError):
    pass


class IntegrandError(SmoothFnError):
    def __init__(self, abscissa: float):
        super().__init__(f"non-finite integrand value at x={abscissa!r}")
        self.abscissa = abscissa


# ---------------------------------------------------------------------------
# glue kernel


def glue(x, order: int = 0) -> np.ndarray:
    """Derivative ``order`` (0..3) of the glue g on the unit interval.

    g is 0 for x <= 0 and 1 for x >= 1; every derivative vanishes outside (0, 1).
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if order == 0:
        out[x >= 1.0] = 1.0
    inside = (x > 0.0) & (x < 1.0)
    if not np.any(inside):
        return out
    xi = x[inside]
    y = 1.0 - xi
    with np.errstate(over="ignore"):
        g = 1.0 / (1.0 + np.exp(1.0 / xi - 1.0 / y))
        # 1 - g from the mirror image avoids cancellation near x = 1
        gc = 1.0 / (1.0 + np.exp(1.0 / y - 1.0 / xi))
    if order == 0:
        out[inside] = g
        return out
    q = g * gc
    p = 1.0 / xi**2 + 1.0 / y**2
    g1 = q * p
    if order == 1:
        out[inside] = g1
        return out
    p1 = -2.0 / xi**3 + 2.0 / y**3
    s = gc - g
    g2 = g1 * s * p + q * p1
    if order == 2:
        out[inside] = g2
        return out
    if order == 3:
        p2 = 6.0 / xi**4 + 6.0 / y**4
        q1 = g1 * s
        g3 = (g2 * s - 2.0 * g1**2) * p + 2.0 * q1 * p1 + q * p2
        out[inside] = g3
        return out
    raise ValueError(f"glue derivative order {order} not supported")


# ---------------------------------------------------------------------------
# Gauss-Kronrod 7/15

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
# full 15-point abscissae on [-1, 1] and matching weights
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
_GW[[1, 3, 5]] = _WG[:3]
_GW[[9, 11, 13]] = _WG[2::-1]
_GW[7] = _WG[3]


def _gk(f, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    if not np.all(np.isfinite(fx)):
        bad = np.argwhere(~np.isfinite(fx))[0]
        raise IntegrandError(float(x[tuple(bad)]))
    kron = half * (fx @ _KW)
    gauss = half * (fx @ _GW)
    return kron, np.abs(kron - gauss)


def gk15_panel(f, a, b) -> np.ndarray:
    """Single-panel Kronrod-15 integrals of ``f`` over each ``[a_i, b_i]``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    if a.size == 0:
        return np.zeros(a.shape)
    val, _ = _gk(f, a.ravel(), b.ravel())
    return val.reshape(a.shape)


def _adaptive_many(f, lefts, rights, tol_density: float, max_rounds: int = 60):
    """Adaptive GK15 on several root intervals at once.

    A panel is accepted once its error estimate is below ``tol_density`` times
    its length.  Returns per-root integrals and summed error estimates.
    """
    lefts = np.asarray(lefts, dtype=float)
    rights = np.asarray(rights, dtype=float)
    nroot = lefts.size
    owner = np.arange(nroot)
    a, b = lefts.copy(), rights.copy()
    parts: list[list[tuple[float, float]]] = [[] for _ in range(nroot)]
    errs = np.zeros(nroot)
    for _ in range(max_rounds):
        if a.size == 0:
            break
        val, err = _gk(f, a, b)
        ok = err <= tol_density * np.abs(b - a) + 1e-300
        for i in np.flatnonzero(ok):
            parts[owner[i]].append((a[i], val[i]))
        np.add.at(errs, owner[ok], err[ok])
        keep = ~ok
        a, b, owner = a[keep], b[keep], owner[keep]
        m = 0.5 * (a + b)
        a, b, owner = (np.concatenate([a, m]), np.concatenate([m, b]),
                       np.concatenate([owner, owner]))
    else:
        if a.size:
            val, err = _gk(f, a, b)
            for i in range(a.size):
                parts[owner[i]].append((a[i], val[i]))
            np.add.at(errs, owner, err)
    # summation in left-endpoint order keeps results deterministic
    totals = np.array([math.fsum(v for _, v in sorted(p)) for p in parts])
    return totals, errs


def integrate(f, a: float, b: float, tol: float = DEFAULT_TOL) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over ``[a, b]``.

    ``f`` is a SmoothFn or any vectorised callable.  The summed panel error
    estimate is kept below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    total, _ = _adaptive_many(f, [a], [b], tol / (b - a))
    return sign * float(total[0])


# ---------------------------------------------------------------------------
# SmoothFn algebra


def _as_array(r) -> np.ndarray:
    return np.asarray(r, dtype=float)


def _out(val: np.ndarray, r_in):
    if np.ndim(r_in) == 0:
        return float(val[0])
    return val.reshape(np.shape(r_in))


class SmoothFn:
    """Base class: a vectorised smooth function on ``domain``.

    Subclasses implement ``_eval(r, order)`` for the orders they know in closed
    form; higher orders fall back to a Richardson-extrapolated five-point
    central difference of the value.
    """

    domain: tuple[float, float] = (-math.inf, math.inf)
    max_order: int = 0

    def __call__(self, r):
        return self.deriv(r, 0)

    def deriv(self, r, order: int = 0):
        if order not in (0, 1, 2, 3):
            raise ValueError(f"derivative order must be 0..3, got {order}")
        arr = np.atleast_1d(_as_array(r))
        lo, hi = self.domain
        if arr.size and (np.nanmin(arr) < lo or np.nanmax(arr) > hi):
            raise DomainError(f"argument outside domain [{lo}, {hi}]")
        return _out(self._value(arr, order), r)

    def _value(self, r: np.ndarray, order: int) -> np.ndarray:
        if order <= self.max_order:
            return self._eval(r, order)
        return self._fd(r, order)

    def _eval(self, r: np.ndarray, order: int) -> np.ndarray:
        raise NotImplementedError

    def _fd(self, r: np.ndarray, order: int, h: float = FD_STEP) -> np.ndarray:
        base = order - 1 if order > 1 else 0
        if base > self.max_order:
            base = self.max_order
        need = order - base
        if need == 1:
            def est(step):
                fm2, fm1, fp1, fp2 = (self._value(r + k * step, base) for k in (-2, -1, 1, 2))
                return (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * step)
        elif need == 2:
            h = max(h, 1e-3)

            def est(step):
                f0 = self._value(r, base)
                fm2, fm1, fp1, fp2 = (self._value(r + k * step, base) for k in (-2, -1, 1, 2))
                return (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * step**2)
        else:
            h = max(h, 1e-2)

            def est(step):
                f = [self._value(r + k * step, base) for k in (-3, -2, -1, 1, 2, 3)]
                return (f[0] - 8 * f[1] + 13 * f[2] - 13 * f[3] + 8 * f[4] - f[5]) / (8 * step**3)
        coarse, fine = est(h), est(h / 2)
        return (16 * fine - coarse) / 15

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()

    # algebra helpers
    def __add__(self, other: "SmoothFn") -> "SmoothFn":
        return Combination([(1.0, self), (1.0, other)])

    def __sub__(self, other: "SmoothFn") -> "SmoothFn":
        return Combination([(1.0, self), (-1.0, other)])

    def __mul__(self, other) -> "SmoothFn":
        if isinstance(other, SmoothFn):
            return Product(self, other)
        return Combination([(float(other), self)])

    __rmul__ = __mul__


class Constant(SmoothFn):
    max_order = 3

    def __init__(self, value: float, domain=(-math.inf, math.inf)):
        self.value = float(value)
        self.domain = domain

    def _eval(self, r, order):
        if order == 0:
            return np.full(r.shape, self.value)
        return np.zeros(r.shape)

    def __repr__(self):
        return f"Constant({self.value!r})"


class Step(SmoothFn):
    """``lo`` on (-inf, a], ``hi`` on [b, inf), glued in between."""

    max_order = 3

    def __init__(self, a: float, b: float, lo: float, hi: float, domain=(-math.inf, math.inf)):
        if not a < b:
            raise InvalidIntervalError(f"step needs a < b, got a={a}, b={b}")
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InvalidIntervalError("step levels must be finite")
        self.a, self.b, self.lo, self.hi = float(a), float(b), float(lo), float(hi)
        self.domain = domain

    @property
    def breakpoints(self):
        return (self.a, self.b)

    def _eval(self, r, order):
        w = self.b - self.a
        x = (r - self.a) / w
        if order == 0:
            # measure from the nearer plateau so values never round past it
            out = np.where(x <= 0.5, self.lo + (self.hi - self.lo) * glue(x),
                           self.hi - (self.hi - self.lo) * glue(1.0 - x))
            # plateaus are exact, not lo + 0*(hi-lo) rounding
            out[x <= 0] = self.lo
            out[x >= 1] = self.hi
            return out
        return (self.hi - self.lo) * glue(x, order) / w**order

    def __repr__(self):
        return f"Step({self.a}, {self.b}, {self.lo}, {self.hi})"


class Combination(SmoothFn):
    """Linear combination ``sum(c_i * f_i)``."""

    def __init__(self, terms: Sequence[tuple[float, SmoothFn]]):
        self.terms = [(float(c), f) for c, f in terms]
        self.max_order = min(f.max_order for _, f in self.terms)
        self.domain = (max(f.domain[0] for _, f in self.terms),
                       min(f.domain[1] for _, f in self.terms))

    @property
    def breakpoints(self):
        return tuple(sorted({b for _, f in self.terms for b in f.breakpoints}))

    def _value(self, r, order):
        out = np.zeros(r.shape)
        for c, f in self.terms:
            if c != 0.0:
                out = out + c * f._value(r, order)
        return out


class Product(SmoothFn):
    def __init__(self, f: SmoothFn, g: SmoothFn):
        self.f, self.g = f, g
        self.max_order = min(f.max_order, g.max_order, 2)
        self.domain = (max(f.domain[0], g.domain[0]), min(f.domain[1], g.domain[1]))

    @property
    def breakpoints(self):
        return tuple(sorted(set(self.f.breakpoints) | set(self.g.breakpoints)))

    def _eval(self, r, order):
        f, g = self.f._value, self.g._value
        if order == 0:
            return f(r, 0) * g(r, 0)
        if order == 1:
            return f(r, 1) * g(r, 0) + f(r, 0) * g(r, 1)
        return f(r, 2) * g(r, 0) + 2 * f(r, 1) * g(r, 1) + f(r, 0) * g(r, 2)


class Blend(SmoothFn):
    """``(1 - w) * f + w * g`` with a smooth weight ``w``."""

    def __init__(self, f: SmoothFn, g: SmoothFn, weight: SmoothFn):
        self.f, self.g, self.w = f, g, weight
        self.max_order = min(f.max_order, g.max_order, weight.max_order, 2)
        self.domain = (max(f.domain[0], g.domain[0]), min(f.domain[1], g.domain[1]))

    @property
    def breakpoints(self):
        return tuple(sorted(set(self.f.breakpoints) | set(self.g.breakpoints)
                            | set(self.w.breakpoints)))

    def _eval(self, r, order):
        w0 = self.w._value(r, 0)
        f0, g0 = self.f._value(r, 0), self.g._value(r, 0)
        if order == 0:
            return (1 - w0) * f0 + w0 * g0
        w1 = self.w._value(r, 1)
        f1, g1 = self.f._value(r, 1), self.g._value(r, 1)
        if order == 1:
            return (1 - w0) * f1 + w0 * g1 + w1 * (g0 - f0)
        w2 = self.w._value(r, 2)
        f2, g2 = self.f._value(r, 2), self.g._value(r, 2)
        return (1 - w0) * f2 + w0 * g2 + 2 * w1 * (g1 - f1) + w2 * (g0 - f0)


class Piecewise(SmoothFn):
    """Pieces on consecutive intervals; ``breaks`` are the interior cut points.

    A point exactly on a cut belongs to the piece on its left, so constant
    plateaus such as ``[0, a]`` and ``[b, 1]`` are hit on their closed ends.
    """

    def __init__(self, breaks: Sequence[float], pieces: Sequence[SmoothFn], domain=(0.0, 1.0)):
        if len(pieces) != len(breaks) + 1:
            raise ValueError("need len(breaks) + 1 pieces")
        if any(b1 >= b2 for b1, b2 in zip(breaks, breaks[1:])):
            raise InvalidIntervalError("breaks must be strictly increasing")
        self.breaks = np.asarray(breaks, dtype=float)
        self.pieces = list(pieces)
        self.domain = domain
        self.max_order = 3

    @property
    def breakpoints(self):
        inner = {b for p in self.pieces for b in p.breakpoints}
        return tuple(sorted(set(self.breaks.tolist()) | inner))

    def _value(self, r, order):
        idx = np.searchsorted(self.breaks, r, side="left")
        out = np.empty(r.shape)
        for i, piece in enumerate(self.pieces):
            sel = idx == i
            if np.any(sel):
                out[sel] = piece._value(r[sel], order)
        return out


class Formula(SmoothFn):
    """Closed-form function given as ``fn(r, order)`` for orders up to ``max_order``."""

    def __init__(self, fn: Callable[[np.ndarray, int], np.ndarray], max_order: int = 0,
                 domain=(-math.inf, math.inf), breakpoints: Sequence[float] = (), name: str = ""):
        self.fn = fn
        self.max_order = max_order
        self.domain = domain
        self._breaks = tuple(breakpoints)
        self.name = name

    @property
    def breakpoints(self):
        return self._breaks

    def _eval(self, r, order):
        return np.asarray(self.fn(r, order), dtype=float) * np.ones(r.shape)

    def __repr__(self):
        return f"Formula({self.name or self.fn!r})"


class Antiderivative(SmoothFn):
    """``F(r) = int_lower^r f(s) ds`` backed by a cached cumulative table.

    The table holds adaptive-quadrature values at ``nodes`` uniform points
    on ``[lower, upper]``, built once at construction.  A value off the
    nodes adds one Kronrod-15 panel from the nearest node to its left.
    Derivatives follow from the fundamental theorem of calculus.
    """

    def __init__(self, integrand: SmoothFn, lower: float, upper: float,
                 nodes: int = 2049, tol: float = 1e-13):
        if not lower < upper:
            raise InvalidIntervalError(f"antiderivative needs lower < upper ({lower}, {upper})")
        self.f = integrand
        self.lower, self.upper = float(lower), float(upper)
        self.domain = integrand.domain
        self.max_order = min(integrand.max_order + 1, 3)
        self.nodes = np.linspace(self.lower, self.upper, nodes)
        fv = lambda x: integrand._value(x, 0)
        pieces, _ = _adaptive_many(fv, self.nodes[:-1], self.nodes[1:],
                                   tol / (self.upper - self.lower))
        self.table = np.concatenate([[0.0], np.cumsum(pieces)])

    @property
    def breakpoints(self):
        return self.f.breakpoints

    def _eval(self, r, order):
        if order > 0:
            return self.f._value(r, order - 1)
        uniq, inv = np.unique(r, return_inverse=True)
        idx = np.clip(np.searchsorted(self.nodes, uniq, side="right") - 1, 0, self.nodes.size - 1)
        start = self.nodes[idx]
        fv = lambda x: self.f._value(x, 0)
        vals = self.table[idx] + gk15_panel(fv, start, uniq)
        return vals[inv].reshape(r.shape)


# ---------------------------------------------------------------------------
# constructors


def make_step(a: float, b: float, lo: float, hi: float, domain=(-math.inf, math.inf)) -> Step:
    """``lo`` up to ``a``, ``hi`` from ``b`` on, strictly monotone between."""
    return Step(a, b, lo, hi, domain=domain)


def make_plateau(a0: float, a1: float, b1: float, b0: float) -> SmoothFn:
    """Bump equal to 1 on ``[a1, b1]`` and 0 outside ``[a0, b0]``.

    A degenerate shoulder (``a0 == a1`` or ``b1 == b0``) is dropped, so the
    function stays 1 on that side; this is how one-sided cutoffs like
    lambda(d) are written.
    """
    if not (a0 <= a1 <= b1 <= b0):
        raise InvalidIntervalError(f"plateau needs a0 <= a1 <= b1 <= b0, got {(a0, a1, b1, b0)}")
    if a0 == b0:
        raise InvalidIntervalError("plateau support is empty")
    left = Step(a0, a1, 0.0, 1.0) if a0 < a1 else None
    right = Step(b1, b0, 1.0, 0.0) if b1 < b0 else None
    if left is None and right is None:
        return Constant(1.0)
    if left is None:
        return right
    if right is None:
        return left
    return Product(left, right)


def eval_deriv(f: SmoothFn, r, order: int = 0):
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    return f.deriv(r, order)
