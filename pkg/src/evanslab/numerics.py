"""Numerical kernels: polynomial roots, adaptive complex ODE integration,
contours, phase unwrapping and real-axis root finding.

Everything here is a pure function of its inputs.  The integrator is
vectorised over independent "lanes" (one lane per spectral parameter in a
scan), each lane carrying its own position and step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

BLOW_UP_NORM = 1e8
AXIS_MARGIN = 1e-9
MAX_CONTOUR_SAMPLES = 2**16


class ConstantPolynomialError(ValueError):
    pass


class NearBorderError(ValueError):
    """A spatial eigenvalue sits on the imaginary axis (within the margin)."""


class StiffSingularError(RuntimeError):
    def __init__(self, message: str, z_last: float):
        super().__init__(f"{message} (last accepted z={z_last:.17g})")
        self.z_last = z_last


class RootOnContourError(ValueError):
    pass


class InsufficientSamplingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# polynomials


@dataclass(frozen=True)
class Polynomial:
    """Complex polynomial, coefficients in ascending degree."""

    coefficients: tuple

    def __init__(self, coefficients: Sequence[complex]):
        c = np.asarray(coefficients, dtype=complex).ravel()
        nz = np.nonzero(c)[0]
        c = c[: nz[-1] + 1] if nz.size else c[:1]
        object.__setattr__(self, "coefficients", tuple(complex(x) for x in c))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def as_array(self) -> np.ndarray:
        return np.array(self.coefficients, dtype=complex)

    def __call__(self, x):
        # Horner, highest degree first
        out = np.zeros_like(np.asarray(x, dtype=complex))
        for a in reversed(self.coefficients):
            out = out * x + a
        return out

    def derivative(self) -> "Polynomial":
        c = self.as_array()
        if c.size == 1:
            return Polynomial([0.0])
        return Polynomial(c[1:] * np.arange(1, c.size))

    @classmethod
    def from_roots(cls, roots: Sequence[complex], leading: complex = 1.0) -> "Polynomial":
        c = np.array([leading], dtype=complex)
        for r in roots:
            # multiply by (x - r), ascending order
            c = np.concatenate([[0.0], c]) - r * np.concatenate([c, [0.0]])
        return cls(c)


def _companion(c: np.ndarray) -> np.ndarray:
    n = c.size - 1
    M = np.zeros((n, n), dtype=complex)
    M[1:, :-1] = np.eye(n - 1)
    M[:, -1] = -c[:-1] / c[-1]
    return M


def polynomial_roots(p: Polynomial, polish_tol: float = 1e-12, max_polish: int = 8) -> np.ndarray:
    """All ``deg(p)`` roots, repeated by multiplicity.

    Companion-matrix eigenvalues followed by a few guarded Newton steps on
    isolated roots.  A Newton step is only accepted if it does not increase |p|.
    """
    if p.degree < 1:
        raise ConstantPolynomialError("constant polynomial")
    c = p.as_array()
    roots = np.linalg.eigvals(_companion(c)).astype(complex)
    dp = p.derivative()
    raw = roots.copy()
    for i, r in enumerate(roots):
        # members of a multiple-root cluster are left alone: polishing them one
        # at a time destroys the cancellation that keeps their sum accurate
        others = np.delete(raw, i)
        if others.size and np.min(np.abs(others - r)) < 1e-3 * max(1.0, abs(r)):
            continue
        val = p(r)
        for _ in range(max_polish):
            d = dp(r)
            if d == 0 or abs(val) == 0:
                break
            step = val / d
            cand = r - step
            cand_val = p(cand)
            if abs(cand_val) > abs(val):
                break
            r, val = cand, cand_val
            if abs(step) <= polish_tol * max(1.0, abs(r)):
                break
        roots[i] = r
    return roots


def root_residual(p: Polynomial, root: complex) -> float:
    """|p(root)| scaled by max|coef| * max(1,|root|)^deg."""
    scale = np.max(np.abs(p.as_array())) * max(1.0, abs(root)) ** p.degree
    return float(abs(p(root)) / scale)


def count_roots_positive_real(p: Polynomial, margin: float = AXIS_MARGIN) -> int:
    roots = polynomial_roots(p)
    if np.any(np.abs(roots.real) < margin):
        raise NearBorderError("near-border λ: a root lies within the margin of the imaginary axis")
    return int(np.count_nonzero(roots.real > 0))


# ---------------------------------------------------------------------------
# adaptive Runge-Kutta (Dormand-Prince 5(4))

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_STAGES = [[(j, a) for j, a in enumerate(row) if a != 0.0] for row in _A]
_BW = [(j, b) for j, b in enumerate(_B) if b != 0.0]
_EW = [(j, e) for j, e in enumerate(_E) if e != 0.0]


def _combo(ks, weights):
    out = ks[weights[0][0]] * weights[0][1]
    for j, a in weights[1:]:
        out = out + ks[j] * a
    return out

ENDPOINT, BLOW_UP, UNDERFLOW = 0, 1, 2


@dataclass
class BatchResult:
    """Final states of a vectorised integration.

    ``status`` is ENDPOINT, BLOW_UP or UNDERFLOW per lane; ``z`` is where each
    lane stopped and ``y`` the last accepted (finite) state there.
    """

    y: np.ndarray
    z: np.ndarray
    status: np.ndarray
    steps: np.ndarray


def integrate_batch(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    y0: np.ndarray,
    z_from,
    z_to: float,
    rtol: float = 1e-9,
    atol: float = 1e-11,
    blow_up_norm: float = BLOW_UP_NORM,
    max_steps: int = 200_000,
    record: bool = False,
    indexed: bool = False,
):
    """Integrate ``B`` independent lanes ``y' = f(z, y)`` from ``z_from`` to ``z_to``.

    ``f`` receives ``z`` of shape (B_active,) and ``y`` of shape (B_active, d)
    and returns the derivative with the shape of ``y``; with ``indexed=True``
    it is called as ``f(z, y, lanes)`` where ``lanes`` are the indices of the
    active rows.  ``z_from`` may be a scalar or per-lane array; all lanes end
    at the same ``z_to``.

    Returns a :class:`BatchResult`; with ``record=True`` (single lane only)
    also the accepted (z, y) samples.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("rtol and atol must be positive")
    if indexed:
        call = f
    else:
        def call(zz, yy, lanes):
            return f(zz, yy)
    y = np.array(y0, dtype=complex)
    if y.ndim == 1:
        y = y[None, :]
    B = y.shape[0]
    z = np.broadcast_to(np.asarray(z_from, dtype=float), (B,)).copy()
    if np.any(z == z_to):
        raise ValueError("z_from must differ from z_to")
    direction = np.sign(z_to - z)
    status = np.full(B, ENDPOINT)
    steps = np.zeros(B, dtype=int)
    done = np.zeros(B, dtype=bool)
    bad = ~np.all(np.isfinite(y), axis=1) | (np.max(np.abs(y), axis=1) > blow_up_norm)
    status[bad] = BLOW_UP
    done[bad] = True

    samples_z, samples_y = ([z[0]], [y[0].copy()]) if record else (None, None)

    k1 = np.zeros_like(y)
    act = np.nonzero(~done)[0]
    if act.size:
        k1[act] = call(z[act], y[act], act)
    # initial step from the local scale of y and y'
    sc = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean(np.abs(y / sc) ** 2, axis=1))
    d1 = np.sqrt(np.mean(np.abs(k1 / sc) ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / d1)
    h = np.minimum(np.nan_to_num(h, nan=1e-6), np.abs(z_to - z))

    while True:
        act = np.nonzero(~done)[0]
        if act.size == 0:
            break
        za, ya, ha, da = z[act], y[act], h[act], direction[act]
        ha = np.minimum(ha, np.abs(z_to - za))
        hs = (ha * da)[:, None]
        ks = [k1[act]]
        for s in range(1, 7):
            ks.append(call(za + _C[s] * ha * da, ya + hs * _combo(ks, _STAGES[s]), act))
        y_new = ya + hs * _combo(ks, _BW)
        err = hs * _combo(ks, _EW)
        scale = atol + rtol * np.maximum(np.abs(ya), np.abs(y_new))
        with np.errstate(invalid="ignore", over="ignore"):
            en = np.sqrt(np.mean(np.abs(err / scale) ** 2, axis=1))
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(en)
        en = np.where(finite, en, np.inf)
        accept = en <= 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(en == 0, 5.0, np.clip(0.9 * en ** -0.2, 0.2, 5.0))
        fac = np.where(accept, fac, np.minimum(fac, 0.5))
        h_next = ha * fac

        acc = act[accept]
        if acc.size:
            z_new = za[accept] + (ha * da)[accept]
            end = np.abs(z_to - z_new) <= 1e-12 * max(1.0, abs(z_to))
            z_new = np.where(end, z_to, z_new)
            z[acc] = z_new
            y[acc] = y_new[accept]
            k1[acc] = ks[6][accept]
            steps[acc] += 1
            if record:
                samples_z.append(z[0])
                samples_y.append(y[0].copy())
            blown = np.max(np.abs(y_new[accept]), axis=1) > blow_up_norm
            status[acc[blown]] = BLOW_UP
            done[acc[blown | end]] = True
            over = steps[acc] >= max_steps
            status[acc[over & ~done[acc]]] = UNDERFLOW
            done[acc[over]] = True
        h[act] = h_next
        tiny = (h[act] <= 16 * np.finfo(float).eps * np.maximum(1.0, np.abs(z[act]))) & ~done[act]
        status[act[tiny]] = UNDERFLOW
        done[act[tiny]] = True

    res = BatchResult(y=y, z=z, status=status, steps=steps)
    if record:
        return res, np.array(samples_z), np.array(samples_y)
    return res


@dataclass
class Trajectory:
    z: np.ndarray
    states: np.ndarray
    termination: str  # "reached-endpoint" | "blow-up"
    z_blow: float | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def integrate(
    f: Callable[[float, np.ndarray], np.ndarray],
    state0,
    z_from: float,
    z_to: float,
    rtol: float = 1e-9,
    atol: float = 1e-11,
    blow_up_norm: float = BLOW_UP_NORM,
) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) integration of a single complex ODE.

    Stops early with a blow-up record once ``|state|`` exceeds
    ``blow_up_norm``.  Raises :class:`StiffSingularError` on step underflow.
    """
    if z_from == z_to:
        raise ValueError("z_from must differ from z_to")
    y0 = np.atleast_1d(np.asarray(state0, dtype=complex))

    def fb(zv, Y):
        return np.asarray(f(float(zv[0]), Y[0]), dtype=complex).reshape(1, -1)

    res, zs, ys = integrate_batch(fb, y0[None, :], z_from, z_to, rtol, atol, blow_up_norm, record=True)
    if res.status[0] == UNDERFLOW:
        raise StiffSingularError("stiff/singular: step size underflow", float(res.z[0]))
    if res.status[0] == BLOW_UP:
        return Trajectory(zs, ys, "blow-up", float(res.z[0]))
    return Trajectory(zs, ys, "reached-endpoint")


# ---------------------------------------------------------------------------
# contours and winding numbers


@dataclass(frozen=True)
class Segment:
    label: str  # "outer-arc" | "inner-arc" | "axis-segment"
    point: Callable[[np.ndarray], np.ndarray]  # t in [0, 1] -> complex


def _arc(center: complex, radius: float, a0: float, a1: float, label: str) -> Segment:
    return Segment(label, lambda t: center + radius * np.exp(1j * (a0 + (a1 - a0) * np.asarray(t))))


def _line(p0: complex, p1: complex, label: str = "axis-segment") -> Segment:
    return Segment(label, lambda t: p0 + (p1 - p0) * np.asarray(t))


@dataclass
class Contour:
    """Closed, positively oriented piecewise-smooth curve.

    ``vertices`` holds the current sample points; ``params`` the matching
    (segment index, local parameter) pairs so samples can be refined.
    """

    segments: list
    closed: bool = True
    params: list = field(default_factory=list)

    def __post_init__(self):
        if not self.params:
            self.sample(64)

    def sample(self, n: int) -> "Contour":
        per = max(2, n // len(self.segments))
        self.params = [(i, t) for i in range(len(self.segments)) for t in np.linspace(0.0, 1.0, per, endpoint=False)]
        return self

    @property
    def vertices(self) -> np.ndarray:
        return np.array([complex(self.segments[i].point(t)) for i, t in self.params])

    @property
    def labels(self) -> list:
        return [self.segments[i].label for i, _ in self.params]

    def midpoints(self, idx: Sequence[int]) -> list:
        """Parameter midpoints between sample ``k`` and its successor."""
        out = []
        n = len(self.params)
        for k in idx:
            i, t = self.params[k]
            j, s = self.params[(k + 1) % n]
            if j != i:
                s = 1.0
            out.append((i, 0.5 * (t + s)))
        return out

    def points_at(self, params: Sequence[tuple]) -> np.ndarray:
        return np.array([complex(self.segments[i].point(t)) for i, t in params])


def half_annulus(outer: float, inner: float, center: complex = 0.0) -> Contour:
    """Boundary of {inner < |λ-center| < outer, Re(λ-center) > 0}, counterclockwise.

    Traversal: the large arc from -i*outer up through +outer to +i*outer,
    the axis down to +i*inner, the small arc back through +inner to
    -i*inner, then the axis down to -i*outer.
    """
    if not 0 < inner < outer:
        raise ValueError("need 0 < inner < outer")
    c = complex(center)
    segs = [
        _arc(c, outer, -math.pi / 2, math.pi / 2, "outer-arc"),
        _line(c + 1j * outer, c + 1j * inner),
        _arc(c, inner, math.pi / 2, -math.pi / 2, "inner-arc"),
        _line(c - 1j * inner, c - 1j * outer),
    ]
    return Contour(segs)


def annular_sector(r0: float, r1: float, a0: float, a1: float, center: complex = 0.0) -> Contour:
    """Boundary of {r0 < |λ-center| < r1, a0 < arg(λ-center) < a1}, counterclockwise."""
    if not (0 < r0 < r1 and a0 < a1):
        raise ValueError("need 0 < r0 < r1 and a0 < a1")
    c = complex(center)
    e0, e1 = np.exp(1j * a0), np.exp(1j * a1)
    segs = [
        _line(c + r0 * e0, c + r1 * e0),
        _arc(c, r1, a0, a1, "outer-arc"),
        _line(c + r1 * e1, c + r0 * e1),
        _arc(c, r0, a1, a0, "inner-arc"),
    ]
    return Contour(segs)


def circle(center: complex, radius: float) -> Contour:
    return Contour([_arc(complex(center), radius, 0.0, 2 * math.pi, "outer-arc")])


def rectangle(x0: float, x1: float, y0: float, y1: float) -> Contour:
    a, b, c, d = complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)
    return Contour([_line(a, b), _line(b, c), _line(c, d), _line(d, a)])


def winding_number(samples, zero_tol: float = 0.0) -> tuple[int, float]:
    """Winding number about 0 of a closed sampled path.

    The path is closed implicitly (last sample joins the first).  Returns
    ``(n, residual)`` with ``residual = |raw - n|``.
    """
    s = np.asarray(samples, dtype=complex)
    if s.size == 0:
        raise InsufficientSamplingError("no samples")
    if not np.all(np.isfinite(s)):
        raise RootOnContourError("root/pole on contour: non-finite sample")
    scale = np.max(np.abs(s))
    if np.any(np.abs(s) <= max(zero_tol, 1e-300) * max(scale, 1.0)) or np.any(s == 0):
        raise RootOnContourError("root/pole on contour: zero sample")
    jumps = phase_increments(s)
    if np.any(np.abs(jumps) >= math.pi * (1 - 1e-12)):
        raise InsufficientSamplingError("insufficient sampling: phase jump of π or more")
    raw = float(np.sum(jumps) / (2 * math.pi))
    n = int(round(raw))
    return n, abs(raw - n)


def phase_increments(samples: np.ndarray) -> np.ndarray:
    """Principal phase change between consecutive samples, cyclically."""
    s = np.asarray(samples, dtype=complex)
    return np.angle(np.roll(s, -1) / s)


# ---------------------------------------------------------------------------
# real-axis roots of complex-valued functions


@dataclass
class RealRootScan:
    roots: list
    poles: list
    skipped: list  # seeds where f was not finite
    x: np.ndarray
    fx: np.ndarray


def _vectorize(f):
    def g(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        try:
            out = np.asarray(f(x), dtype=complex)
            if out.shape == x.shape:
                return out
        except Exception:
            pass
        return np.array([_safe_call(f, float(xi)) for xi in x])

    return g


def _safe_call(f, x: float) -> complex:
    """f(x), with a raised error (a pole, a branch cut) recorded as NaN."""
    try:
        return complex(f(x))
    except (ArithmeticError, ValueError):
        return complex(np.nan, np.nan)


class _NonFinite(Exception):
    def __init__(self, t):
        self.t = t


def find_real_roots(
    f: Callable,
    interval: tuple[float, float],
    n_seed: int = 200,
    tol: float = 1e-8,
    xtol: float = 1e-13,
    f_vectorized: bool = False,
    return_scan: bool = False,
):
    """Real zeros of ``f: R -> C`` on ``interval``.

    Near a simple real zero ``f(x) ≈ a (x - r)`` with complex ``a``, so the
    phase of ``f`` flips by π across ``r``.  Brackets are seed intervals with
    ``Re(f_i conj f_{i+1}) < 0``; each is refined by Brent's method on the
    real projection ``Re(f(x) conj(f(b) - f(a)))``.  A refined point with
    ``|f| >= tol`` is kept as a pole candidate instead.
    """
    g = f if f_vectorized else _vectorize(f)
    a, b = map(float, interval)
    x = np.linspace(a, b, n_seed)
    fx = np.asarray(g(x), dtype=complex)
    finite = np.isfinite(fx)
    skipped = list(x[~finite])
    roots, poles = [], []
    idx = np.nonzero(finite)[0]

    # exact zeros on the grid
    for i in idx:
        if fx[i] == 0:
            roots.append(float(x[i]))

    for i0, i1 in zip(idx[:-1], idx[1:]):
        if i1 != i0 + 1 or fx[i0] == 0 or fx[i1] == 0:
            continue
        if (fx[i0] * np.conj(fx[i1])).real >= 0:
            continue
        direction = np.conj(fx[i1] - fx[i0])

        def proj(t):
            v = complex(g(np.array([t]))[0])
            if not np.isfinite(v):
                raise _NonFinite(t)
            return (v * direction).real

        lo, hi = x[i0], x[i1]
        plo, phi = (fx[i0] * direction).real, (fx[i1] * direction).real
        if not (plo < 0 < phi or phi < 0 < plo):
            continue
        try:
            r = brentq(proj, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
        except _NonFinite as hit:
            poles.append(float(hit.t))  # the refinement landed on a singular point
            continue
        except (ValueError, RuntimeError):
            continue
        fr = complex(g(np.array([r]))[0])
        if np.isfinite(fr) and abs(fr) < tol:
            roots.append(float(r))
        else:
            poles.append(float(r))
    roots = sorted(set(roots))
    if return_scan:
        return RealRootScan(roots, sorted(poles), skipped, x, fx)
    return roots
