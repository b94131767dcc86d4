"""Riccati-Evans function: subspace flows in a fixed chart, matched at z0.

The unstable subspace at -∞ (dimension k) and the stable subspace at +∞
(dimension m = n - k) are carried in affine chart coordinates
W = Y X⁻¹ (X = top rows of a frame), each obeying the matrix Riccati
equation

    W' = C + D W - W A - W B W

for the block split of the charted coefficient matrix.  At the matching
point the two frames [I; W_u] and [I; W_s] are combined as

    E(λ) = det [[I_k, I_m], [W_u, W_s]]

which equals det(W_s - W_u) for k = m and β - w1 - w2 α for a line against
a plane in three dimensions.  E is meromorphic: chart singularities of
either subspace at z0 show up as poles.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import unitary_group

from .linearization import Chart, DefectiveError, SpectralProblem, apply_chart, default_chart, subspaces
from .numerics import (
    AXIS_MARGIN,
    BLOW_UP,
    ENDPOINT,
    MAX_CONTOUR_SAMPLES,
    Contour,
    InsufficientSamplingError,
    NearBorderError,
    RootOnContourError,
    circle,
    find_real_roots,
    half_annulus,
    integrate_batch,
    phase_increments,
    winding_number,
)

SCHEMA = 1


class EssentialSpectrumError(ValueError):
    """Subspace dimensions do not add up: λ is in the essential spectrum."""


# ---------------------------------------------------------------------------
# Riccati fields


def split_blocks(A: np.ndarray, k: int):
    """(A, B, C, D) blocks of ``A`` with A of size k×k (leading axes broadcast)."""
    return A[..., :k, :k], A[..., :k, k:], A[..., k:, :k], A[..., k:, k:]


def riccati_field(A: np.ndarray, W: np.ndarray, k: int) -> np.ndarray:
    a, b, c, d = split_blocks(A, k)
    return c + d @ W - W @ a - W @ b @ W


def plane_flow(spT: SpectralProblem, lam: complex, k: int):
    """Field ``f(z, W)`` of the k-plane Riccati flow, W of shape (n-k, k)."""
    def f(z, W):
        return riccati_field(spT.matrix(lam, z), np.asarray(W, dtype=complex), k)

    return f


def line_flow(spT: SpectralProblem, lam: complex):
    """Field ``f(z, w)`` for the affine coordinates of the line through (1, w)."""
    if spT.order not in (3, 4):
        raise ValueError("line flow is defined for order 3 and 4")
    pf = plane_flow(spT, lam, 1)

    def f(z, w):
        return pf(z, np.asarray(w, dtype=complex).reshape(-1, 1)).ravel()

    return f


def combine(W_u: np.ndarray, W_s: np.ndarray) -> np.ndarray:
    """E from top-block chart coordinates; leading axes broadcast."""
    k, m = W_u.shape[-1], W_s.shape[-1]
    n = k + m
    lead = np.broadcast_shapes(W_u.shape[:-2], W_s.shape[:-2])
    M = np.zeros(lead + (n, n), dtype=complex)
    M[..., :k, :k] = np.eye(k)
    M[..., :m, k:] = np.eye(m)
    M[..., k:, :k] = W_u
    M[..., m:, k:] = W_s
    return np.linalg.det(M)


def chart_coordinates(frame: np.ndarray, k: int, cond_max: float = 1e12) -> np.ndarray | None:
    """W = Y X⁻¹ for an n×k frame, or None when X is (numerically) singular."""
    X, Y = frame[:k], frame[k:]
    if not np.all(np.isfinite(frame)) or np.linalg.cond(X) > cond_max:
        return None
    return Y @ np.linalg.inv(X)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvansSettings:
    L: float = 30.0
    z0: float = 0.0
    rtol: float = 1e-9
    atol: float = 1e-11
    decay_floor: float = 25.0  # L >= decay_floor / min|Re ν|
    L_max: float = 120.0
    auto_L: bool = False  # double L until |ΔE| < L_tol
    L_tol: float = 1e-7
    seed: int = 0
    threads: int = 1
    margin: float = AXIS_MARGIN

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("EVANSLAB_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


@dataclass
class _Lane:
    lam: complex
    k: int
    m: int
    L: float
    frame_u: np.ndarray  # n×k in chart coordinates
    frame_s: np.ndarray  # n×m


class RiccatiEvans:
    """Batched Riccati-Evans evaluator for one spectral problem and chart.

    Lanes whose flow blows up before z0 are recomputed once in the chart
    Q·T for a seeded random unitary Q and mapped back to chart T at z0.  If
    the subspace is singular in chart T at z0 the value is a genuine pole
    (reported as ``inf``).
    """

    def __init__(self, sp: SpectralProblem, chart: Chart | None = None, settings: EvansSettings | None = None):
        if sp.chart is not None:
            raise ValueError("pass the un-charted problem; the chart is applied here")
        self.sp = sp
        self.chart = chart if chart is not None else default_chart(sp)
        self.settings = settings or EvansSettings()
        self.spT = apply_chart(sp, self.chart)
        rng = np.random.default_rng(self.settings.seed)
        Q = unitary_group.rvs(sp.order, random_state=rng) if sp.order > 1 else np.eye(1)
        self.Q = np.asarray(Q, dtype=complex)
        self.spQ = apply_chart(self.spT, Chart(self.Q, "retry"))
        self.retries = 0

    @property
    def n(self) -> int:
        return self.sp.order

    # -- lane setup ----------------------------------------------------------
    def _lane(self, lam: complex) -> _Lane:
        s = self.settings
        minus = subspaces(self.spT, lam, "-", margin=s.margin)
        plus = subspaces(self.spT, lam, "+", margin=s.margin)
        k, m = minus.unstable.shape[1], plus.stable.shape[1]
        if k + m != self.n:
            raise EssentialSpectrumError(
                f"λ={lam}: unstable dim {k} at -∞ and stable dim {m} at +∞ do not sum to {self.n}")
        rates = np.abs(np.concatenate([minus.eigenvalues.real, plus.eigenvalues.real]))
        L = max(s.L, min(s.decay_floor / max(rates.min(), 1e-300), s.L_max))
        return _Lane(complex(lam), k, m, L, minus.unstable, plus.stable)

    # -- flows ---------------------------------------------------------------
    def _side(self, sp: SpectralProblem, lanes: list, which: str, z0: float):
        """Chart coordinates at z0 for all lanes of one side, grouped by dimension."""
        out: list = [None] * len(lanes)
        status = np.full(len(lanes), ENDPOINT)
        dims = sorted({(ln.k if which == "u" else ln.m) for ln in lanes})
        for d in dims:
            idx = [i for i, ln in enumerate(lanes) if (ln.k if which == "u" else ln.m) == d]
            frames = [lanes[i].frame_u if which == "u" else lanes[i].frame_s for i in idx]
            if sp is self.spQ:
                frames = [self.Q @ F for F in frames]
            W0 = []
            good = []
            for F in frames:
                W = chart_coordinates(F, d)
                good.append(W is not None)
                W0.append(W if W is not None else np.zeros((self.n - d, d)))
            W0 = np.array(W0, dtype=complex)
            lams = np.array([lanes[i].lam for i in idx])
            Ls = np.array([lanes[i].L for i in idx])
            z_from = z0 - Ls if which == "u" else z0 + Ls
            Wz, st = self._integrate(sp, lams, d, W0, z_from, z0)
            for j, i in enumerate(idx):
                out[i] = Wz[j]
                status[i] = st[j] if good[j] else BLOW_UP
        return out, status

    def _integrate(self, sp, lams, k, W0, z_from, z_to):
        shape = (self.n - k, k)
        field_ = _LaneField(sp, lams, k, shape)
        res = integrate_batch(field_, W0.reshape(len(lams), -1), z_from, z_to,
                              rtol=self.settings.rtol, atol=self.settings.atol, indexed=True)
        return res.y.reshape((-1,) + shape), res.status

    def _back_to_chart(self, Wq: np.ndarray, d: int) -> np.ndarray | None:
        frame = np.vstack([np.eye(d), Wq])
        return chart_coordinates(self.Q.conj().T @ frame, d)

    def _evaluate_lanes(self, lanes: list, z0: float) -> tuple[np.ndarray, np.ndarray]:
        Wu, su = self._side(self.spT, lanes, "u", z0)
        Ws, ss = self._side(self.spT, lanes, "s", z0)
        retried = np.zeros(len(lanes), dtype=bool)
        for which, W, st in (("u", Wu, su), ("s", Ws, ss)):
            bad = [i for i in range(len(lanes)) if st[i] != ENDPOINT]
            if not bad:
                continue
            retried[bad] = True
            self.retries += len(bad)
            Wq, sq = self._side(self.spQ, [lanes[i] for i in bad], which, z0)
            for j, i in enumerate(bad):
                d = lanes[i].k if which == "u" else lanes[i].m
                W[i] = self._back_to_chart(Wq[j], d) if sq[j] == ENDPOINT else None
        E = np.empty(len(lanes), dtype=complex)
        for i in range(len(lanes)):
            if Wu[i] is None or Ws[i] is None:
                E[i] = complex(np.inf, np.inf)
            else:
                E[i] = combine(Wu[i], Ws[i])
        return E, retried

    # -- public --------------------------------------------------------------
    def values(self, lams, z0: float | None = None) -> "EvansSamples":
        """E at every λ.  Essential-spectrum / near-border λ give ``nan``."""
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        z0 = self.settings.z0 if z0 is None else z0
        E = np.full(lams.shape, np.nan + 0j)
        flags = np.array([""] * lams.size, dtype=object)
        lanes, pos = [], []
        for i, lam in enumerate(lams):
            try:
                lanes.append(self._lane(lam))
                pos.append(i)
            except NearBorderError:
                flags[i] = "near-border"
            except (EssentialSpectrumError, DefectiveError):
                flags[i] = "essential"
        if lanes:
            Ev, retried = self._run(lanes, z0)
            if self.settings.auto_L:
                Ev = self._refine_L(lanes, Ev, z0)
            E[pos] = Ev
            for j, i in enumerate(pos):
                if not np.isfinite(Ev[j]):
                    flags[i] = "pole"
                elif retried[j]:
                    flags[i] = "re-charted"
        return EvansSamples(lams, E, flags)

    def _run(self, lanes, z0):
        threads = max(1, int(self.settings.threads))
        if threads == 1 or len(lanes) < 2 * threads:
            return self._evaluate_lanes(lanes, z0)
        chunks = np.array_split(np.arange(len(lanes)), threads)
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda c: self._evaluate_lanes([lanes[i] for i in c], z0), chunks))
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def _refine_L(self, lanes, E, z0):
        s = self.settings
        E = E.copy()
        todo = list(range(len(lanes)))
        while todo:
            grown = []
            for i in todo:
                ln = lanes[i]
                if ln.L * 2 <= s.L_max and np.isfinite(E[i]):
                    grown.append(i)
            if not grown:
                break
            new = [_Lane(lanes[i].lam, lanes[i].k, lanes[i].m, 2 * lanes[i].L, lanes[i].frame_u, lanes[i].frame_s)
                   for i in grown]
            E2, _ = self._run(new, z0)
            todo = []
            for j, i in enumerate(grown):
                lanes[i] = new[j]
                change = abs(E2[j] - E[i])
                E[i] = E2[j]
                if not change < s.L_tol:
                    todo.append(i)
        return E

    def __call__(self, lam):
        scalar = np.ndim(lam) == 0
        out = self.values(lam).E
        return complex(out[0]) if scalar else out


class _LaneField:
    """Riccati field over a batch of λ lanes, called with the active lane indices."""

    def __init__(self, sp, lams, k, shape):
        self.A = sp.lane_field(lams)
        self.k, self.shape = k, shape

    def __call__(self, z, Y, lanes):
        W = Y.reshape((-1,) + self.shape)
        return riccati_field(self.A(z, lanes), W, self.k).reshape(W.shape[0], -1)


@dataclass
class EvansSamples:
    lam: np.ndarray
    E: np.ndarray
    flags: np.ndarray


def evaluate(sp: SpectralProblem, lam: complex, chart: Chart | None = None, z0: float = 0.0, L: float = 30.0,
             **tolerances) -> complex:
    """E(λ) for a single λ; raises when λ is in the essential spectrum."""
    ev = RiccatiEvans(sp, chart, EvansSettings(L=L, z0=z0, **tolerances))
    out = ev.values([lam])
    if out.flags[0] in ("essential", "near-border"):
        raise EssentialSpectrumError(f"λ={lam} is {out.flags[0]}")
    return complex(out.E[0])


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvansReport:
    lam: np.ndarray
    E: np.ndarray
    roots: list = field(default_factory=list)  # dicts: lam, residual
    poles: list = field(default_factory=list)  # complex
    winding: int | None = None
    winding_residual: float | None = None
    chart: str = ""
    z0: float = 0.0
    settings: dict = field(default_factory=dict)
    retries: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def cx(z):
            z = complex(z)
            return [z.real, z.imag]

        return {
            "schema": SCHEMA,
            "chart": self.chart,
            "z0": self.z0,
            "settings": self.settings,
            "retries": self.retries,
            "winding": self.winding,
            "winding_residual": self.winding_residual,
            "roots": [{"lambda": cx(r["lam"]), "residual": r["residual"]} for r in self.roots],
            "poles": [cx(p) for p in self.poles],
            "samples": len(self.lam),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False, default=str)

    def to_csv(self) -> str:
        """Columns: re_lambda, im_lambda, re_E, im_E, phase."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re_lambda", "im_lambda", "re_E", "im_E", "phase"])
        for lam, E in zip(self.lam, self.E):
            ph = float(np.angle(E)) if np.isfinite(E) else float("nan")
            w.writerow([repr(float(lam.real)), repr(float(lam.imag)), repr(float(E.real)), repr(float(E.imag)),
                        repr(ph)])
        return buf.getvalue()


def _report(ev: RiccatiEvans, lam, E, **kw) -> EvansReport:
    return EvansReport(np.asarray(lam), np.asarray(E), chart=ev.chart.name, z0=ev.settings.z0,
                       settings=ev.settings.to_dict(), retries=ev.retries, **kw)


def _as_evaluator(sp, chart=None, settings=None) -> RiccatiEvans:
    return sp if isinstance(sp, RiccatiEvans) else RiccatiEvans(sp, chart, settings)


def scan_real(sp, interval: tuple[float, float], n: int = 200, chart: Chart | None = None,
              settings: EvansSettings | None = None, tol: float = 1e-8) -> EvansReport:
    """Real roots of E on ``interval`` by phase-flip brackets and Brent refinement."""
    ev = _as_evaluator(sp, chart, settings)

    def f(x):
        return ev.values(np.asarray(x, dtype=float)).E

    scan = find_real_roots(f, interval, n_seed=n, tol=tol, f_vectorized=True, return_scan=True)
    roots = [{"lam": complex(r), "residual": float(abs(f([r])[0]))} for r in scan.roots]
    rep = _report(ev, scan.x.astype(complex), scan.fx, roots=roots, poles=[complex(p) for p in scan.poles])
    if scan.skipped:
        rep.notes.append(f"{len(scan.skipped)} samples in the essential spectrum or at poles")
    return rep


def conjugate_residual(sp: SpectralProblem, lam: complex, chart: Chart | None = None,
                       settings: EvansSettings | None = None) -> float:
    """|E_T(conj λ) - conj E_conj(T)(λ)| relative to |E|; zero for real coefficients."""
    ev = RiccatiEvans(sp, chart, settings)
    evc = RiccatiEvans(sp, Chart(ev.chart.T.conj(), ev.chart.name + "*"), settings)
    a = ev(np.conj(lam))
    b = np.conj(evc(lam))
    return float(abs(a - b) / max(abs(a), abs(b), 1e-300))


def default_region(sp: SpectralProblem, inner: float = 1e-2) -> Contour:
    """Half annulus K in the right half plane, sized from the far-field data."""
    far = sp.far
    g = max(abs(far.gu_plus), abs(far.gv_plus), abs(far.gu_minus), abs(far.gv_minus))
    return half_annulus(20.0 * max(1.0, g, sp.c ** 2), inner)


def winding(sp, contour: Contour | None = None, chart: Chart | None = None, settings: EvansSettings | None = None,
            n_seed: int = 512, max_jump: float = math.pi / 2, max_samples: int = MAX_CONTOUR_SAMPLES,
            zero_tol: float = 1e-10) -> EvansReport:
    """Number of zeros minus poles of E inside ``contour`` (argument principle).

    Seeds are refined by bisection wherever the phase changes by more than
    ``max_jump`` between neighbours.
    """
    ev = _as_evaluator(sp, chart, settings)
    contour = contour if contour is not None else default_region(ev.sp)
    contour.sample(n_seed)
    params = list(contour.params)
    vals = ev.values(contour.points_at(params))
    E = vals.E
    bad = [i for i in range(len(E)) if not np.isfinite(E[i])]
    if bad:
        lam = contour.points_at([params[bad[0]]])[0]
        raise RootOnContourError(f"E not finite at λ={lam} ({vals.flags[bad[0]]}); refine or perturb contour")
    while True:
        if np.min(np.abs(E)) <= zero_tol * np.max(np.abs(E)):
            raise RootOnContourError("near-zero sample on contour; refine or perturb contour")
        jumps = np.abs(phase_increments(E))
        idx = np.nonzero(jumps > max_jump)[0]
        if idx.size == 0:
            break
        if len(params) + idx.size > max_samples:
            raise InsufficientSamplingError(
                f"insufficient sampling: {idx.size} unresolved phase jumps at {len(params)} samples")
        contour.params = params
        new = contour.midpoints(idx)
        if any(abs(t - params[k][1]) < 1e-12 for k, (_, t) in zip(idx, new)):
            # a jump that survives refinement to this scale is a zero or pole on the path
            raise RootOnContourError("phase jump persists under refinement; refine or perturb contour")
        newE = ev.values(contour.points_at(new))
        if not np.all(np.isfinite(newE.E)):
            j = int(np.nonzero(~np.isfinite(newE.E))[0][0])
            raise RootOnContourError(f"E not finite at λ={contour.points_at([new[j]])[0]}; refine or perturb contour")
        merged = sorted(zip(params + new, np.concatenate([E, newE.E])), key=lambda pe: pe[0])
        params = [p for p, _ in merged]
        E = np.array([e for _, e in merged])
    contour.params = params
    w, res = winding_number(E)
    return _report(ev, contour.points_at(params), E, winding=w, winding_residual=res)


# ---------------------------------------------------------------------------
# complex roots and poles


def _secant(h, z0: complex, z1: complex, tol: float = 1e-12, maxit: int = 60) -> complex | None:
    f0, f1 = h(z0), h(z1)
    for _ in range(maxit):
        if not (np.isfinite(f0) and np.isfinite(f1)) or f1 == f0:
            return None
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        z0, f0, z1 = z1, f1, z2
        f1 = h(z1)
        if abs(z1 - z0) < tol * max(1.0, abs(z1)):
            return z1
    return None


def _grid(region, seed_grid) -> tuple[np.ndarray, tuple]:
    x0, x1, y0, y1 = region
    nx, ny = seed_grid
    X, Y = np.meshgrid(np.linspace(x0, x1, nx), np.linspace(y0, y1, ny))
    return X + 1j * Y, (nx, ny)


def _local_extrema(A: np.ndarray, largest: bool) -> list:
    out = []
    ny, nx = A.shape
    for j in range(ny):
        for i in range(nx):
            v = A[j, i]
            if not np.isfinite(v):
                out.append((j, i))
                continue
            nb = A[max(j - 1, 0):j + 2, max(i - 1, 0):i + 2]
            nb = nb[np.isfinite(nb)]
            if (largest and v >= nb.max()) or (not largest and v <= nb.min()):
                if 0 < i < nx - 1 and 0 < j < ny - 1:
                    out.append((j, i))
    return out


def _dedupe(points: list, sep: float) -> list:
    out: list = []
    for p in points:
        if all(abs(p - q) > sep for q in out):
            out.append(p)
    return out


def locate_poles(sp, region: tuple[float, float, float, float], seed_grid: tuple[int, int] = (41, 41),
                 chart: Chart | None = None, settings: EvansSettings | None = None, radius: float = 1e-3) -> list:
    """Poles of E in the rectangle ``region = (x0, x1, y0, y1)``.

    Candidates are grid maxima of |E|, refined by the secant method on 1/E and
    kept only when E winds -1 on a small circle around them.
    """
    ev = _as_evaluator(sp, chart, settings)
    lam, _ = _grid(region, seed_grid)
    E = ev.values(lam.ravel()).E.reshape(lam.shape)
    A = np.where(np.isnan(E), -np.inf, np.abs(E))
    finite = A[np.isfinite(A) & (A > -np.inf)]
    if finite.size == 0:
        return []
    thresh = 10.0 * np.median(finite)
    cand = [lam[j, i] for j, i in _local_extrema(np.where(A == -np.inf, np.nan, A), True)
            if not np.isfinite(A[j, i]) or A[j, i] > thresh]
    step = abs(lam[0, 1] - lam[0, 0]) if lam.shape[1] > 1 else 1e-2

    def h(z):
        e = ev(z)
        return 1.0 / e if np.isfinite(e) and e != 0 else 0j

    poles = []
    for c0 in cand:
        p = _secant(h, c0 + 0.1 * step, c0 - 0.1 * step * 1j)
        if p is None:
            continue
        try:
            w = winding(ev, circle(p, radius), n_seed=32).winding
        except (RootOnContourError, InsufficientSamplingError):
            continue
        if w == -1:
            poles.append(p)
    return _dedupe(poles, 10 * radius)


def locate_roots(sp, region: tuple[float, float, float, float], seed_grid: tuple[int, int] = (41, 41),
                 chart: Chart | None = None, settings: EvansSettings | None = None, tol: float = 1e-8) -> list:
    """Zeros of E in a rectangle: grid minima of |E| refined by the secant method."""
    ev = _as_evaluator(sp, chart, settings)
    lam, _ = _grid(region, seed_grid)
    E = ev.values(lam.ravel()).E.reshape(lam.shape)
    A = np.where(np.isfinite(E), np.abs(E), np.nan)
    step = abs(lam[0, 1] - lam[0, 0]) if lam.shape[1] > 1 else 1e-2
    x0, x1, y0, y1 = region
    roots = []
    for j, i in _local_extrema(A, False):
        if not np.isfinite(A[j, i]):
            continue
        c0 = lam[j, i]
        r = _secant(lambda z: ev(z), c0 + 0.1 * step, c0 - 0.1 * step * 1j)
        if r is None or not (x0 <= r.real <= x1 and y0 <= r.imag <= y1):
            continue
        e = ev(r)
        if np.isfinite(e) and abs(e) < tol:
            roots.append({"lam": r, "residual": float(abs(e))})
    out: list = []
    for r in roots:
        if all(abs(r["lam"] - q["lam"]) > 1e-6 for q in out):
            out.append(r)
    return out


def translation_value(sp, eps: float = 1e-8, chart: Chart | None = None, settings: EvansSettings | None = None) -> complex:
    """One-sided value E(0+) = E(eps) used for the translation eigenvalue.

    At λ = 0 a spatial eigenvalue sits on the imaginary axis; E is evaluated
    slightly to the right with the axis margin relaxed.
    """
    s = settings or EvansSettings()
    s = EvansSettings(**{**s.to_dict(), "margin": 0.0})
    ev = RiccatiEvans(sp, chart, s)
    out = ev.values([eps])
    return complex(out.E[0])
