"""First-order spectral problems A(λ, z) of order 2, 3 or 4, their far-field
limits, stable/unstable subspaces and chart transforms.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .model import FarFieldData, ReactionTerm, WaveProfile, far_field
from .numerics import AXIS_MARGIN, NearBorderError, Polynomial

CASES = ("general-4", "d0-moving-3", "d0-stationary-pencil-2", "d1-scalar-2")
_ORDER = {"general-4": 4, "d0-moving-3": 3, "d0-stationary-pencil-2": 2, "d1-scalar-2": 2}


class CaseError(ValueError):
    pass


class DefectiveError(ValueError):
    pass


def default_case(wp: WaveProfile) -> str:
    if wp.D > 0:
        return "general-4"
    if wp.c != 0:
        return "d0-moving-3"
    return "d0-stationary-pencil-2"


@dataclass(frozen=True)
class Chart:
    """Linear change of coordinates y = T x, so that y' = T A T⁻¹ y."""

    T: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        T = np.asarray(self.T, dtype=complex)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ValueError("chart must be a square matrix")
        if abs(np.linalg.det(T)) < 1e-12 or np.linalg.cond(T) > 1e12:
            raise ValueError("chart matrix is singular")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "T_inv", np.linalg.inv(T))

    @property
    def det(self) -> complex:
        return complex(np.linalg.det(self.T))

    @property
    def order(self) -> int:
        return self.T.shape[0]

    @classmethod
    def identity(cls, n: int) -> "Chart":
        return cls(np.eye(n), "identity")


# charts used for the numerical examples
CHART_D0_MOVING = Chart(np.array([[1j, 0, 1], [0, -1j, 0], [0, 0, 1]]), "d0-moving")
CHART_PULSE = Chart(np.array([[1j, 0, 1, 0], [0, 1, 0, 1], [0, 0, -1j, 0], [0, 0, 0, 1]]), "pulse")
CHART_FRONT = Chart(np.array([[1j, 0, 1, 0], [0, -1j, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1]]), "front")


def default_chart(sp: "SpectralProblem") -> Chart:
    if sp.case == "d0-moving-3":
        return CHART_D0_MOVING
    if sp.case == "general-4":
        return CHART_PULSE if sp.wp.is_pulse else CHART_FRONT
    return Chart.identity(sp.order)


@dataclass
class SpectralProblem:
    """y' = A(λ, z) y for the linearisation about a wave.

    ``matrix`` is vectorised: ``lam`` and ``z`` broadcast against each other
    and the result has shape ``broadcast + (n, n)``.
    """

    rt: ReactionTerm
    wp: WaveProfile
    case: str
    chart: Chart | None = None

    def __post_init__(self):
        if self.case not in CASES:
            raise CaseError(f"unknown case {self.case!r}")
        if self.chart is not None and self.chart.order != self.order:
            raise ValueError("chart dimension does not match problem order")
        self.far = far_field(self.rt, self.wp)
        self._coeffs = self.wp.linear_coefficients(self.rt)

    @property
    def order(self) -> int:
        return _ORDER[self.case]

    @property
    def D(self) -> float:
        return self.wp.D

    @property
    def c(self) -> float:
        return self.wp.c

    def coefficients(self, z):
        """g_u, g_v along the wave."""
        return self._coeffs(z)

    def _basis(self):
        """Constant part and (coefficient, matrix) terms of A, chart applied."""
        n, D, c = self.order, self.D, self.c

        def m(entries):
            M = np.zeros((n, n), dtype=complex)
            for (i, j), a in entries.items():
                M[i, j] = a
            return M

        if self.case == "general-4":
            M0 = m({(0, 0): -c, (0, 2): 1.0, (1, 1): -c / D, (1, 3): 1.0 / D})
            terms = [("lam", m({(2, 0): 1.0, (3, 1): 1.0})), ("gu", m({(2, 0): -1.0, (3, 0): 1.0})),
                     ("gv", m({(2, 1): -1.0, (3, 1): 1.0}))]
        elif self.case == "d0-moving-3":
            M0 = m({(0, 0): -c, (0, 2): 1.0})
            terms = [("lam", m({(1, 1): 1.0 / c, (2, 0): 1.0})), ("gu", m({(1, 0): 1.0 / c, (2, 0): -1.0})),
                     ("gv", m({(1, 1): 1.0 / c, (2, 1): -1.0}))]
        elif self.case == "d0-stationary-pencil-2":
            # p'' = (λ - g_u + g_u g_v / (λ + g_v)) p
            M0 = m({(0, 1): 1.0})
            terms = [("pencil", m({(1, 0): 1.0}))]
        else:
            # q'' + c q' - G'(v̂) q = λ q with G'(v) = g_v - g_u at u = -v
            M0 = m({(0, 1): 1.0, (1, 1): -c})
            terms = [("lam", m({(1, 0): 1.0})), ("gu", m({(1, 0): -1.0})), ("gv", m({(1, 0): 1.0}))]
        if self.chart is not None:
            T, Ti = self.chart.T, self.chart.T_inv
            M0 = T @ M0 @ Ti
            terms = [(name, T @ M @ Ti) for name, M in terms]
        return M0, terms

    def _cached_basis(self):
        if not hasattr(self, "_basis_cache"):
            self._basis_cache = self._basis()
        return self._basis_cache

    def _assemble(self, lam, gu, gv):
        M0, terms = self._cached_basis()
        lam, gu, gv = np.broadcast_arrays(np.asarray(lam, dtype=complex), np.asarray(gu, dtype=float),
                                          np.asarray(gv, dtype=float))
        A = M0 + np.zeros(lam.shape + (1, 1))
        for name, M in terms:
            if name == "lam":
                w = lam
            elif name == "gu":
                w = gu
            elif name == "gv":
                w = gv
            else:
                if np.any(lam + gv == 0):
                    raise ValueError("pencil pole: λ = -g_v")
                w = lam - gu + gu * gv / (lam + gv)
            A = A + w[..., None, None] * M
        return A

    def lane_field(self, lams):
        """Fast ``(z, lanes) -> A(lams[lanes], z)`` for a fixed batch of λ."""
        M0, terms = self._cached_basis()
        names = [t[0] for t in terms]
        if "pencil" in names:
            lams = np.asarray(lams, dtype=complex)
            return lambda z, lanes: self.matrix(lams[lanes], z)
        M = dict(terms)
        base = M0 + np.asarray(lams, dtype=complex)[:, None, None] * M["lam"]
        Mu, Mv = M["gu"], M["gv"]

        def f(z, lanes):
            gu, gv = self._coeffs(z)
            return base[lanes] + gu[:, None, None] * Mu + gv[:, None, None] * Mv

        return f

    def matrix(self, lam, z):
        gu, gv = self.coefficients(np.asarray(z, dtype=float))
        return self._assemble(lam, gu, gv)

    def asymptotic(self, lam, side: str):
        """A±(λ) from the analytic far-field states."""
        gu, gv = self.far.side(side)
        return self._assemble(lam, gu, gv)


def build(rt: ReactionTerm, wp: WaveProfile, case: str | None = None) -> SpectralProblem:
    case = case or default_case(wp)
    if case == "general-4" and not wp.D > 0:
        raise CaseError("general-4 requires D > 0")
    if case == "d0-moving-3" and not (wp.D == 0 and wp.c != 0):
        raise CaseError("d0-moving-3 requires D = 0 and c != 0")
    if case == "d0-stationary-pencil-2" and not (wp.D == 0 and wp.c == 0):
        raise CaseError("the pencil requires D = c = 0")
    if case == "d1-scalar-2" and wp.D != 1:
        raise CaseError("d1-scalar-2 requires D = 1")
    return SpectralProblem(rt, wp, case)


def apply_chart(sp: SpectralProblem, chart: Chart) -> SpectralProblem:
    if chart.order != sp.order:
        raise ValueError(f"chart of order {chart.order} for a problem of order {sp.order}")
    if sp.chart is not None:
        chart = Chart(chart.T @ sp.chart.T, f"{chart.name}∘{sp.chart.name}")
    return SpectralProblem(sp.rt, sp.wp, sp.case, chart)


# ---------------------------------------------------------------------------
# far field


def characteristic_quartic(far: FarFieldData, D: float, c: float, lam: complex, side: str) -> Polynomial:
    """det-polynomial of the far-field problem in ν, ascending coefficients.

    Degree 4 for D > 0, 3 for D = 0 with c != 0, 2 for D = c = 0.
    """
    gu, gv = far.side(side)
    return Polynomial([
        lam * (gv - gu + lam),
        -c * (gv - gu + 2 * lam),
        c * c - (gv - D * gu) - lam * (D + 1),
        c * (D + 1),
        D,
    ])


def asymptotic_roots(far: FarFieldData, D: float, c: float, lam: complex, side: str = "+") -> np.ndarray:
    """Leading-order spatial eigenvalues for large |λ| (principal square root)."""
    gu, gv = far.side(side)
    scale = max(1.0, abs(gu), abs(gv), c * c, 1.0 / D if D > 0 else 0.0)
    if abs(lam) < 100 * scale:
        raise ValueError(f"|λ| must be at least {100 * scale:g} for the large-|λ| expansion")
    s = cmath.sqrt(lam)
    if D > 0:
        r = cmath.sqrt(D)
        return np.array([s - c / 2, -s - c / 2, s / r - c / (2 * D), -s / r - c / (2 * D)])
    if c == 0:
        return np.array([s, -s])
    return np.array([s - c / 2, -s - c / 2, lam / c + gv / c])


@dataclass(frozen=True)
class Subspaces:
    side: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, first nonzero entry scaled to 1
    stable: np.ndarray  # orthonormal basis, Re ν < 0
    unstable: np.ndarray  # orthonormal basis, Re ν > 0

    @property
    def dims(self) -> tuple[int, int]:
        return self.stable.shape[1], self.unstable.shape[1]


def _normalise_columns(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        k = int(np.argmax(np.abs(col) > 1e-12 * np.max(np.abs(col))))
        V[:, j] = col / col[k]
    return V


def _orth(V: np.ndarray) -> np.ndarray:
    if V.shape[1] == 0:
        return V
    Q, _ = np.linalg.qr(V)
    return Q


def subspaces(sp: SpectralProblem, lam: complex, side: str, margin: float = AXIS_MARGIN,
              defect_tol: float = 1e10) -> Subspaces:
    """Eigen-split of A_side(λ) by the sign of Re ν (in the problem's chart)."""
    A = sp.asymptotic(lam, side)
    w, V = np.linalg.eig(A)
    if np.any(np.abs(w.real) < margin):
        raise NearBorderError(f"near-border λ={lam}: spatial eigenvalue within {margin:g} of the imaginary axis")
    cond = np.linalg.cond(V)
    # an exact Jordan block comes back from eig as a pair split by ~√ε with cond(V) ~ 1/√ε
    gaps = np.abs(w[:, None] - w[None, :]) + np.diag(np.full(w.size, np.inf))
    clustered = np.any(gaps < 1e-6 * max(1.0, np.max(np.abs(w))))
    if cond > defect_tol or (clustered and cond > 1e6):
        raise DefectiveError(f"A{side}(λ={lam}) is defective (eigenvalues {np.round(w, 12)})")
    Vn = _normalise_columns(V)
    return Subspaces(side, w, Vn, _orth(V[:, w.real < 0]), _orth(V[:, w.real > 0]))
