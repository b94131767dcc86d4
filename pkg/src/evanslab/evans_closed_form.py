"""Exact Evans functions and spectra for the solvable cases.

D = 1: the linearisation reduces to the scalar problem
q'' + c q' - G'(v̂) q = λ q with G(v) = g(-v, v).

D = c = 0: piecewise-constant waves; eliminating q gives the pencil
p'' + (g_u - g_u g_v / (λ + g_v) - λ) p = 0 with piecewise-constant
coefficients, solved exactly by 2×2 transfer matrices.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass

import numpy as np
import sympy as sp
from scipy.integrate import trapezoid

from .model import ParameterError, ReactionTerm, WaveProfile, catalog

SCHEMA = 1

_v, _z = sp.symbols("v z")


class BranchCutError(ValueError):
    pass


class PencilPoleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# D = 1 scalar reduction


@dataclass
class ScalarReduction:
    """G(v) = g(-v, v), G'(v) and H(v) = ∫₀ᵛ G for a reaction term."""

    rt: ReactionTerm
    c: float = 0.0

    def __post_init__(self):
        u = sp.Symbol("u")
        G = sp.expand(sp.sympify(self.rt.expression()).subs(u, -_v))
        self.G_expr = G
        self.dG_expr = sp.diff(G, _v)
        self.H_expr = sp.integrate(G, (_v, 0, _v))
        self._G = sp.lambdify(_v, G, "numpy")
        self._dG = sp.lambdify(_v, self.dG_expr, "numpy")
        self._H = sp.lambdify(_v, self.H_expr, "numpy")

    def G(self, v):
        return np.asarray(self._G(np.asarray(v, dtype=float)), dtype=float) + 0 * np.asarray(v, dtype=float)

    def dG(self, v):
        return np.asarray(self._dG(np.asarray(v, dtype=float)), dtype=float) + 0 * np.asarray(v, dtype=float)

    def H(self, v):
        return np.asarray(self._H(np.asarray(v, dtype=float)), dtype=float) + 0 * np.asarray(v, dtype=float)


def evans_example1(lam: complex) -> complex:
    """4(λ-5) λ^{3/2} (λ+3) √(λ+4), principal branch, λ off (-∞, 0]."""
    lam = complex(np.squeeze(lam))
    if lam.imag == 0 and lam.real <= 0:
        raise BranchCutError(f"λ={lam} lies on the branch cut (-∞, 0]")
    return 4 * (lam - 5) * lam * cmath.sqrt(lam) * (lam + 3) * cmath.sqrt(lam + 4)


def _sech2_potential(rt: ReactionTerm, wp: WaveProfile) -> tuple[float, float]:
    """(a, s) with G'(v̂(z)) = a - s sech²(z) for the D = 1 catalog waves."""
    red = ScalarReduction(rt, wp.c)
    beta = wp.parameters.get("beta", 0.0)
    a = float(red.dG(wp.v(np.array([60.0])))[0])
    s = a - float(red.dG(wp.v(np.array([-beta])))[0])
    # confirm the profile really gives a sech² well
    z = np.linspace(-8, 8, 161) - beta
    err = np.max(np.abs(red.dG(wp.v(z)) - (a - s / np.cosh(z + beta) ** 2)))
    if err > 1e-9:
        raise ParameterError("potential is not of sech² form")
    return a, s


def poschl_teller_levels(strength: float, shift: float) -> list:
    """Eigenvalues of q'' + s sech²(z) q - a q = λ q, s = ℓ(ℓ+1): (ℓ-j)² - a."""
    ell = (-1 + math.sqrt(1 + 4 * strength)) / 2
    return [(ell - j) ** 2 - shift for j in range(int(math.ceil(ell)))]


def d1_point_spectrum(example_id: int) -> list:
    """[{lam, embedded}] for the D = 1 waves of examples 1 and 2.

    The full operator has continuous spectrum (-∞, 0] (from the n equation),
    so eigenvalues there are flagged as embedded.
    """
    if example_id not in (1, 2):
        raise ValueError("closed-form point spectrum is available for examples 1 and 2 only")
    rt, wp = catalog(example_id)
    a, s = _sech2_potential(rt, wp)
    levels = sorted(poschl_teller_levels(s, a), reverse=True)
    return [{"lam": float(round(x, 12)), "embedded": bool(x <= 0)} for x in levels]


def fd_leading_eigenvalues(example_id: int, n_eig: int = 3, half_width: float = 20.0, n: int = 4000) -> np.ndarray:
    """Leading eigenvalues of q'' + c q' - G'(v̂) q by central differences, q = 0 at the ends."""
    rt, wp = catalog(example_id)
    red = ScalarReduction(rt, wp.c)
    z = np.linspace(-half_width, half_width, n)
    h = z[1] - z[0]
    zi = z[1:-1]
    m = zi.size
    main = -2.0 / h ** 2 - red.dG(wp.v(zi))
    off_hi = np.full(m - 1, 1.0 / h ** 2 + wp.c / (2 * h))
    off_lo = np.full(m - 1, 1.0 / h ** 2 - wp.c / (2 * h))
    M = np.diag(main) + np.diag(off_hi, 1) + np.diag(off_lo, -1)
    w = np.linalg.eigvals(M) if wp.c != 0 else np.linalg.eigvalsh(M)
    w = np.sort(np.real(w))[::-1]
    return w[:n_eig]


def energy_residual(rt: ReactionTerm, wp: WaveProfile, grid) -> float:
    """Spread of ½ v̂'² - H(v̂) over ``grid``; conserved along any c = 0 orbit."""
    red = ScalarReduction(rt, wp.c)
    z = np.asarray(grid, dtype=float)
    e = 0.5 * wp.dv(z) ** 2 - red.H(wp.v(z))
    return float(np.max(e) - np.min(e))


def homoclinic_obstruction(wp: WaveProfile, c: float, grid) -> float:
    """(c/2) ∫ v̂² dz, which must vanish for a pulse of the D = 1 reduction."""
    z = np.asarray(grid, dtype=float)
    return float(0.5 * c * trapezoid(wp.v(z) ** 2, z))


def lambda0_residual(rt: ReactionTerm, wp: WaveProfile, grid) -> float:
    """max |q'' + c q' - G'(v̂) q| for q = v̂' (the translation mode)."""
    if wp.kind != "closed-form":
        raise ValueError("needs a closed-form profile")
    red = ScalarReduction(rt, wp.c)
    zs = sp.Symbol("z")
    v = wp.v_expr
    f1, f2, f3 = (sp.lambdify(zs, sp.diff(v, zs, k), "numpy") for k in (1, 2, 3))
    z = np.asarray(grid, dtype=float)
    q, dq, ddq = f1(z), f2(z), f3(z)
    return float(np.max(np.abs(ddq + wp.c * dq - red.dG(wp.v(z)) * q)))


# ---------------------------------------------------------------------------
# D = c = 0 pencil


@dataclass
class PencilProblem:
    """Piecewise-constant coefficients on pieces split at ``jumps``.

    Piece k is [jumps[k-1], jumps[k]) with jumps[-1] = -∞ and
    jumps[len] = +∞; ``gu[k]``, ``gv[k]`` are its constant derivatives.
    """

    jumps: tuple
    gu: tuple
    gv: tuple

    def __post_init__(self):
        if len(self.gu) != len(self.jumps) + 1 or len(self.gv) != len(self.gu):
            raise ValueError("need one (g_u, g_v) pair per piece")
        if any(b <= a for a, b in zip(self.jumps, self.jumps[1:])):
            raise ValueError("jumps must be increasing")

    @classmethod
    def from_wave(cls, rt: ReactionTerm, wp: WaveProfile) -> "PencilProblem":
        if wp.kind != "piecewise-constant":
            raise ValueError("pencil needs a piecewise-constant wave")
        v = np.asarray(wp.values, dtype=float)
        u = np.full_like(v, wp.u_const)
        return cls(tuple(wp.jumps), tuple(map(float, rt.g_u(u, v))), tuple(map(float, rt.g_v(u, v))))

    @property
    def pieces(self) -> list:
        edges = (-math.inf,) + tuple(self.jumps) + (math.inf,)
        return list(zip(edges[:-1], edges[1:]))

    @property
    def far_field(self) -> tuple:
        """((ĝ_u-, ĝ_v-), (ĝ_u+, ĝ_v+))."""
        return (self.gu[0], self.gv[0]), (self.gu[-1], self.gv[-1])


def pencil_reduce(pp: PencilProblem, lam: complex) -> np.ndarray:
    """Per-piece coefficient κ = g_u - g_u g_v/(λ + g_v) - λ of p'' + κ p = 0."""
    lam = complex(np.squeeze(lam))
    out = []
    for gu, gv in zip(pp.gu, pp.gv):
        if lam + gv == 0:
            raise PencilPoleError(f"λ = -g_v = {-gv} excluded from the spectrum")
        out.append(gu - gu * gv / (lam + gv) - lam)
    return np.array(out, dtype=complex)


def pencil_essential_intervals(gu: float, gv: float) -> list:
    """Real λ where p'' + κ p = 0 (constant g_u, g_v) has a bounded oscillatory solution.

    κ(λ) = k² ≥ 0 gives λ² + (g_v - g_u + k²) λ + k² g_v = 0; the branches
    run from λ = 0 to -g_v and from g_u - g_v to -∞ as k goes 0 → ∞.
    """
    k = np.linspace(0.0, 1.0, 11) ** 2 * 1e3
    disc = (gv - gu + k ** 2) ** 2 - 4 * k ** 2 * gv
    if np.any(disc < 0):
        raise ValueError("pencil borders leave the real axis for these coefficients")
    return [(-math.inf, gu - gv), (min(0.0, -gv), max(0.0, -gv))]


def pencil_border_samples(gu: float, gv: float, k) -> np.ndarray:
    """Both λ roots of the border quadratic at each wavenumber k (shape (len(k), 2))."""
    k2 = np.asarray(k, dtype=float) ** 2
    b = gv - gu + k2
    d = np.sqrt((b ** 2 - 4 * k2 * gv).astype(complex))
    return np.stack([(-b + d) / 2, (-b - d) / 2], axis=-1)


def pencil_essential_spectrum(pp: PencilProblem) -> list:
    """Union (as sorted, merged intervals) of both far fields' border sets."""
    ivs = []
    for gu, gv in pp.far_field:
        ivs += pencil_essential_intervals(gu, gv)
    ivs.sort()
    merged = [list(ivs[0])]
    for a, b in ivs[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [tuple(x) for x in merged]


def in_pencil_essential(pp: PencilProblem, lam: complex, tol: float = 1e-12) -> bool:
    lam = complex(np.squeeze(lam))
    if abs(lam.imag) > tol:
        return False
    return any(a - tol <= lam.real <= b + tol for a, b in pencil_essential_spectrum(pp))


def _transfer(mu2: complex, length: float) -> np.ndarray:
    """Propagator of p'' = μ² p over ``length`` in the entire basis {cosh, sinh/μ}."""
    if mu2 == 0:
        return np.array([[1.0, length], [0.0, 1.0]], dtype=complex)
    mu = cmath.sqrt(mu2)
    ch, sh = cmath.cosh(mu * length), cmath.sinh(mu * length)
    return np.array([[ch, sh / mu], [mu * sh, ch]], dtype=complex)


def piecewise_evans(pp: PencilProblem, lam: complex) -> complex:
    """p' + μ₊ p at the last jump after shooting the decaying solution from -∞.

    Zero iff the solution decaying at -∞ also decays at +∞.
    """
    lam = complex(np.squeeze(lam))
    if in_pencil_essential(pp, lam):
        raise ValueError(f"λ={lam} lies in the essential spectrum of the pencil")
    mu2 = -pencil_reduce(pp, lam)
    mu_left = cmath.sqrt(mu2[0])  # Re > 0: e^{μ z} decays as z → -∞
    mu_right = cmath.sqrt(mu2[-1])  # e^{-μ z} decays as z → +∞
    y = np.array([1.0, mu_left], dtype=complex)
    for k in range(1, len(pp.jumps)):
        y = _transfer(mu2[k], pp.jumps[k] - pp.jumps[k - 1]) @ y
    return complex(y[1] + mu_right * y[0])


def realness_certificate(pp: PencilProblem) -> bool:
    """True iff g_u g_v has one strict sign on every piece (eigenvalues are then real)."""
    s = np.sign(np.asarray(pp.gu) * np.asarray(pp.gv))
    return bool(np.all(s > 0) or np.all(s < 0))


# ---------------------------------------------------------------------------
# examples 3 and 4


def example3_problem(gamma: float, L: float) -> PencilProblem:
    rt, wp = catalog(3, gamma=gamma, L=L)
    return PencilProblem.from_wave(rt, wp)


def example4_problem(gamma: float) -> PencilProblem:
    rt, wp = catalog(4, gamma=gamma)
    return PencilProblem.from_wave(rt, wp)


def evans_example3(lam: complex, gamma: float, L: float) -> complex:
    """√λ[√(1+1/(λ+γ)) + √(1+1/(λ+1-γ)) tanh(√λ L √(1+1/(λ+1-γ)))]."""
    lam = complex(np.squeeze(lam))
    if in_pencil_essential(example3_problem(gamma, L), lam):
        raise ValueError(f"λ={lam} lies in the essential spectrum")
    s = cmath.sqrt(lam)
    a = cmath.sqrt(1 + 1 / (lam + gamma))
    b = cmath.sqrt(1 + 1 / (lam + 1 - gamma))
    return s * (a + b * cmath.tanh(s * L * b))


def example3_transfer_oracle(lam: complex, gamma: float, L: float) -> complex:
    """Even-mode matching by a numerical propagator (matrix exponential) on [0, L]."""
    from scipy.linalg import expm

    lam = complex(np.squeeze(lam))
    pp = example3_problem(gamma, L)
    k_in, k_out = pencil_reduce(pp, lam)[1], pencil_reduce(pp, lam)[0]
    M = np.array([[0, 1], [-k_in, 0]], dtype=complex)
    p, dp = expm(L * M) @ np.array([1.0, 0.0], dtype=complex)
    mu_out = cmath.sqrt(lam) * cmath.sqrt(1 + 1 / (lam + gamma))
    assert abs(mu_out ** 2 + k_out) < 1e-9 * max(1.0, abs(k_out))
    return complex((dp + mu_out * p) / p)


def evans_example4(lam: complex, gamma: float) -> complex:
    """λ (1/(λ+1-γ) + 1/(λ+γ)) as displayed for the single-jump front."""
    lam = complex(np.squeeze(lam))
    if min(abs(lam + gamma), abs(lam + (1 - gamma))) < 1e-12:
        raise PencilPoleError(f"pole of F at λ={lam}")
    return lam * (1 / (lam + 1 - gamma) + 1 / (lam + gamma))


def example4_root_formula(gamma: float) -> list:
    """{0, -1 ± (√2/2)√(γ² + (γ-1)²)} as stated for the single-jump front."""
    r = math.sqrt(2) / 2 * math.sqrt(gamma ** 2 + (gamma - 1) ** 2)
    return [0.0, -1 + r, -1 - r]


def example4_displayed_roots(gamma: float) -> list:
    """Zeros of the displayed F (numerator roots that are not also poles)."""
    lam = sp.Symbol("lam")
    g = sp.nsimplify(gamma)
    F = sp.together(lam * (1 / (lam + 1 - g) + 1 / (lam + g)))
    num, den = sp.fraction(sp.cancel(F))
    roots = [complex(r) for r in sp.Poly(num, lam).nroots(n=30)]
    return sorted(r.real for r in roots if abs(r.imag) < 1e-12 and abs(complex(den.subs(lam, r.real))) > 1e-12)


# ---------------------------------------------------------------------------
# report


def closed_form_report(roots: list, poles: list, intervals: list) -> dict:
    def num(x):
        return None if math.isinf(x) else float(x)

    return {
        "schema": SCHEMA,
        "roots": [{"lambda": float(r["lam"]), "embedded": bool(r["embedded"])} for r in roots],
        "poles": [float(p) for p in poles],
        "essential_spectrum": [[num(a), num(b)] for a, b in intervals],
    }


def closed_form_json(roots: list, poles: list, intervals: list) -> str:
    return json.dumps(closed_form_report(roots, poles, intervals), indent=2)
