"""Fredholm borders, the discriminant Δ, border stability, the c = 0 limit
and Fredholm-index region maps for the far-field problems.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .linearization import SpectralProblem, characteristic_quartic
from .model import FarFieldData
from .numerics import AXIS_MARGIN, NearBorderError, count_roots_positive_real


def delta_forms(k2, far: FarFieldData, D: float, side: str) -> tuple:
    """Both algebraic forms of Δ(k²)."""
    gu, gv = far.side(side)
    k2 = np.asarray(k2, dtype=float)
    if np.any(k2 < 0):
        raise ValueError("k² must be non-negative")
    d1 = ((D + 1) * k2 + gv - gu) ** 2 - 4 * k2 * (D * k2 + gv - D * gu)
    d2 = ((D - 1) * k2 + gv + gu) ** 2 - 4 * gv * gu
    return d1, d2


def delta(k2, far: FarFieldData, D: float, side: str):
    return delta_forms(k2, far, D, side)[0]


def delta_scale(k2, far: FarFieldData, D: float, side: str):
    """Magnitude of the largest term in either form; the cancellation scale of Δ."""
    gu, gv = far.side(side)
    k2 = np.asarray(k2, dtype=float)
    return np.maximum.reduce([((D + 1) * k2 + abs(gv) + abs(gu)) ** 2,
                              4 * k2 * (D * k2 + abs(gv) + D * abs(gu)),
                              (abs(D - 1) * k2 + abs(gv) + abs(gu)) ** 2,
                              np.full_like(k2, 4 * abs(gv * gu))])


# ---------------------------------------------------------------------------
# border curves


@dataclass
class BorderCurve:
    branch: str  # "+" or "-": sign in front of √Δ
    side: str  # "+" (z -> +∞) or "-" (z -> -∞)
    k: np.ndarray
    lam: np.ndarray


def default_k_max(far: FarFieldData, D: float, side: str) -> float:
    gu, gv = far.side(side)
    return 3.0 * (1.0 + max(math.sqrt(abs(gu)), math.sqrt(abs(gv)))) / math.sqrt(max(1.0 - D, 0.05))


def border_lambda(k, far: FarFieldData, D: float, c: float, side: str, branch: str) -> np.ndarray:
    """λ(k) on one branch; the principal root of Δ covers both Δ ≥ 0 and Δ < 0."""
    gu, gv = far.side(side)
    k = np.asarray(k, dtype=float)
    k2 = k * k
    d1, d2 = delta_forms(k2, far, D, side)
    # take the form with less cancellation at each k (the second is exact in k for D = 1)
    s1 = np.maximum(((D + 1) * k2 + abs(gv) + abs(gu)) ** 2, 4 * k2 * (D * k2 + abs(gv) + D * abs(gu)))
    s2 = np.maximum((abs(D - 1) * k2 + abs(gv) + abs(gu)) ** 2, 4 * abs(gv * gu))
    root = np.sqrt(np.where(s2 < s1, d2, d1).astype(complex))
    sign = 1.0 if branch == "+" else -1.0
    return (2j * k * c - (D + 1) * k * k - gv + gu + sign * root) / 2


def border_curves(far: FarFieldData, D: float, c: float, side: str, k_max: float | None = None,
                  n: int = 2001) -> tuple[BorderCurve, BorderCurve]:
    if n < 2:
        raise ValueError("n must be at least 2")
    k_max = default_k_max(far, D, side) if k_max is None else k_max
    k = np.linspace(-k_max, k_max, n)
    return tuple(BorderCurve(b, side, k, border_lambda(k, far, D, c, side, b)) for b in ("+", "-"))


def border_residual(lam, k, far: FarFieldData, D: float, c: float, side: str) -> np.ndarray:
    """Relative residual of the quadratic in (λ - ikc) that defines the borders."""
    gu, gv = far.side(side)
    lam, k = np.asarray(lam, dtype=complex), np.asarray(k, dtype=float)
    x = lam - 1j * k * c
    b = (D + 1) * k * k + gv - gu
    q = k * k * (D * k * k + gv - D * gu)
    # homogeneous scale: x, b and √q all carry the units of λ
    scale = np.maximum.reduce([np.abs(x), np.abs(b), np.sqrt(np.abs(q))]) ** 2
    return np.abs(x * x + b * x + q) / np.maximum(scale, 1e-300)


def borders_csv(curves) -> str:
    """Columns: k, re_lambda, im_lambda, branch, side."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "re_lambda", "im_lambda", "branch", "side"])
    for cv in curves:
        for k, lam in zip(cv.k, cv.lam):
            w.writerow([repr(float(k)), repr(float(lam.real)), repr(float(lam.imag)), cv.branch, cv.side])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# stability of the far-field state


@dataclass(frozen=True)
class BorderStability:
    label: str  # stable | direct-instability | turing-instability | both
    marginal: bool = False

    def __str__(self) -> str:
        return self.label + (" (marginal)" if self.marginal else "")


def border_stability(far: FarFieldData, D: float, side: str) -> BorderStability:
    gu, gv = far.side(side)
    tol = 1e-12 * max(1.0, abs(gu), abs(gv))  # far-field values come from polynomial evaluation
    direct, turing = gv < gu - tol, gv < D * gu - tol
    marginal = abs(gv - gu) <= tol or abs(gv - D * gu) <= tol
    if direct and turing:
        return BorderStability("both", marginal)
    if direct:
        return BorderStability("direct-instability", marginal)
    if turing:
        return BorderStability("turing-instability", marginal)
    return BorderStability("stable", marginal)


def stationary_k(far: FarFieldData, D: float, side: str = "+") -> list:
    """k² values at which Re λ(k) can be stationary; always contains 0."""
    if D == 1:
        raise ValueError("stationary points are not isolated for D = 1")
    gu, gv = far.side(side)
    out = [0.0]
    if D <= 0 or gu * gv < 0:
        return out
    if 0 < D < 1 and gu < 0 and gv < 0:
        sD, a, b = math.sqrt(D), math.sqrt(-gv), math.sqrt(-gu)
        cands = [-(sD * a + s * b) * (a + s * sD * b) / ((1 - D) * sD) for s in (1.0, -1.0)]
    else:
        r = (1 + D) / (1 - D) * math.sqrt(gv * gu / D)
        cands = [(gv + gu) / (1 - D) + r, (gv + gu) / (1 - D) - r]
    out += sorted(x for x in cands if x > 0)
    return out


# ---------------------------------------------------------------------------
# c = 0


@dataclass
class C0Spectrum:
    """c = 0 borders as ray ∪ ellipse.

    The ray over-states the border set between the ellipse's real vertices and
    under-states it for Turing-unstable states; ``border_curves`` at c = 0 is exact.
    """

    ray_max: float  # the ray is (-∞, ray_max]
    ellipse: np.ndarray | None  # sampled closed curve, or None


def delta_negative_window(far: FarFieldData, D: float, side: str) -> tuple[float, float] | None:
    """|k| range on which Δ < 0, if any.

    Δ = ((D-1)k² + ĝ_u + ĝ_v)² - 4ĝ_uĝ_v, so a window needs ĝ_uĝ_v > 0 and D != 1.
    Both positive with D < 1 is the familiar case; both negative with D > 1 gives one too.
    """
    gu, gv = far.side(side)
    if gu * gv <= 0 or D == 1:
        return None
    r = 2 * math.sqrt(gu * gv)
    a, b = sorted(((-(gu + gv) - r) / (D - 1), (-(gu + gv) + r) / (D - 1)))
    if b <= 0:
        return None
    return math.sqrt(max(a, 0.0)), math.sqrt(b)


def c0_spectrum(far: FarFieldData, D: float, side: str = "+", n: int = 801) -> C0Spectrum:
    gu, gv = far.side(side)
    win = delta_negative_window(far, D, side)
    ellipse = None
    if win is not None:
        # cosine spacing in k: dλ/dk blows up at the window ends, where the ellipse meets the real axis
        t = np.linspace(0.0, np.pi, n)
        k = win[0] + (win[1] - win[0]) * (1 - np.cos(t)) / 2
        upper = border_lambda(k, far, D, 0.0, side, "+")
        lower = border_lambda(k[::-1], far, D, 0.0, side, "-")
        ellipse = np.concatenate([upper, lower])
    return C0Spectrum(max(0.0, gu - gv), ellipse)


def ellipse_residual(lam, far: FarFieldData, D: float, side: str = "+"):
    """[(1-D)Re λ + ĝ_v + Dĝ_u]² + (D+1)²(Im λ)² - (D+1)² ĝ_u ĝ_v."""
    gu, gv = far.side(side)
    lam = np.asarray(lam, dtype=complex)
    return ((1 - D) * lam.real + gv + D * gu) ** 2 + (D + 1) ** 2 * lam.imag ** 2 - (D + 1) ** 2 * gu * gv


def c0_set_distance(points, spec: C0Spectrum) -> np.ndarray:
    """Distance from each point to the ray ∪ ellipse of a c = 0 spectrum."""
    p = np.asarray(points, dtype=complex)
    d = np.hypot(np.maximum(p.real - spec.ray_max, 0.0), p.imag)
    if spec.ellipse is not None:
        e = spec.ellipse
        d = np.minimum(d, np.min(np.abs(p[:, None] - e[None, :]), axis=1))
    return d


def hausdorff(a, b) -> float:
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# ---------------------------------------------------------------------------
# region maps


@dataclass
class RegionMap:
    lam: np.ndarray
    count_plus: np.ndarray  # unstable ν at +∞ (-1 on borders)
    count_minus: np.ndarray
    index: np.ndarray  # count_minus - count_plus (0 on borders)
    border: np.ndarray  # bool

    @property
    def essential(self) -> np.ndarray:
        return self.border | (self.index != 0)

    def to_csv(self) -> str:
        """Columns: re_lambda, im_lambda, count_plus, count_minus, index, border."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re_lambda", "im_lambda", "count_plus", "count_minus", "index", "border"])
        for lam, cp, cm, ix, b in zip(self.lam, self.count_plus, self.count_minus, self.index, self.border):
            w.writerow([repr(float(lam.real)), repr(float(lam.imag)), int(cp), int(cm), int(ix), int(b)])
        return buf.getvalue()


def unstable_count(far: FarFieldData, D: float, c: float, lam: complex, side: str,
                   margin: float = AXIS_MARGIN) -> int:
    return count_roots_positive_real(characteristic_quartic(far, D, c, lam, side), margin)


def region_map(sp: SpectralProblem, lam_grid, margin: float = AXIS_MARGIN) -> RegionMap:
    lam = np.asarray(lam_grid, dtype=complex).ravel()
    cp = np.zeros(lam.size, dtype=int)
    cm = np.zeros(lam.size, dtype=int)
    border = np.zeros(lam.size, dtype=bool)
    for i, z in enumerate(lam):
        try:
            cp[i] = unstable_count(sp.far, sp.D, sp.c, z, "+", margin)
            cm[i] = unstable_count(sp.far, sp.D, sp.c, z, "-", margin)
        except NearBorderError:
            border[i] = True
            cp[i] = cm[i] = -1
    index = np.where(border, 0, cm - cp)
    return RegionMap(lam, cp, cm, index, border)


def grid(re: tuple[float, float], im: tuple[float, float], n_re: int, n_im: int) -> np.ndarray:
    X, Y = np.meshgrid(np.linspace(*re, n_re), np.linspace(*im, n_im))
    return (X + 1j * Y).ravel()
