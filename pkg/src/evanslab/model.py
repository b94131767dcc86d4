"""Reaction terms g(u, v) and the catalog of exact wave profiles.

Reaction terms are stored as monomial maps ``{(i, j): a_ij}`` so ``g_u`` and
``g_v`` are exact.  Closed-form profiles are held as sympy expressions in
``z`` and lambdified to numpy, which also lets them round-trip through the
text document format in :mod:`evanslab.io`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import sympy as sp

_u, _v, _z = sp.symbols("u v z")


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ReactionTerm:
    monomials: Mapping[tuple, float]
    parameters: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def from_expression(cls, expr, **parameters) -> "ReactionTerm":
        """Expand a polynomial in ``u``, ``v`` (string or sympy) into monomials."""
        names = {"u": _u, "v": _v, **{k: sp.Symbol(k) for k in parameters}}
        e = sp.sympify(expr, locals=names) if isinstance(expr, str) else expr
        e = e.subs({sp.Symbol(k): v for k, v in parameters.items()})
        poly = sp.Poly(sp.expand(e), _u, _v)
        mons = {}
        for (i, j), a in poly.terms():
            a = float(a)
            if a != 0.0:
                mons[(int(i), int(j))] = a
        return cls(mons, dict(parameters))

    def _eval(self, u, v, du=0, dv=0):
        u = np.asarray(u, dtype=float) if not np.iscomplexobj(u) else np.asarray(u)
        v = np.asarray(v, dtype=float) if not np.iscomplexobj(v) else np.asarray(v)
        out = np.zeros(np.broadcast(u, v).shape, dtype=np.result_type(u, v, float))
        for (i, j), a in self.monomials.items():
            if i < du or j < dv:
                continue
            coef = a * math.perm(i, du) * math.perm(j, dv)
            out = out + coef * u ** (i - du) * v ** (j - dv)
        return out

    def g(self, u, v):
        return self._eval(u, v)

    def g_u(self, u, v):
        return self._eval(u, v, du=1)

    def g_v(self, u, v):
        return self._eval(u, v, dv=1)

    def derivative_expressions(self):
        """(g_u, g_v) as sympy expressions in u, v."""
        e = self.expression()
        return sp.diff(e, _u), sp.diff(e, _v)

    def perturbed(self, constant: float) -> "ReactionTerm":
        mons = dict(self.monomials)
        mons[(0, 0)] = mons.get((0, 0), 0.0) + constant
        return ReactionTerm(mons, dict(self.parameters))

    def expression(self):
        return sum(sp.Float(a, 17) * _u**i * _v**j for (i, j), a in self.monomials.items())


@dataclass(frozen=True)
class FarFieldData:
    gu_plus: float
    gv_plus: float
    gu_minus: float
    gv_minus: float

    @classmethod
    def uniform(cls, gu: float, gv: float) -> "FarFieldData":
        """Same (ĝ_u, ĝ_v) at both ends."""
        return cls(gu, gv, gu, gv)

    def side(self, side: str) -> tuple[float, float]:
        """(ĝ_u, ĝ_v) at ``side`` ('+' or '-')."""
        if side == "+":
            return self.gu_plus, self.gv_plus
        if side == "-":
            return self.gu_minus, self.gv_minus
        raise ValueError(f"side must be '+' or '-', got {side!r}")


@dataclass
class WaveProfile:
    """A travelling wave (û, v̂) with speed ``c`` and diffusivity ``D``.

    For ``kind == 'closed-form'`` the sympy expressions ``u_expr``/``v_expr``
    define the profile.  For ``kind == 'piecewise-constant'`` v̂ takes
    ``values[k]`` on ``[jumps[k-1], jumps[k])`` and û is the constant
    ``u_const``.
    """

    kind: str
    c: float
    D: float
    state_minus: tuple
    state_plus: tuple
    u_expr: object = None
    v_expr: object = None
    jumps: tuple = ()
    values: tuple = ()
    u_const: float = 0.0
    example_id: int | None = None
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "closed-form":
            self._fu = _lambdify(self.u_expr)
            self._fv = _lambdify(self.v_expr)
            self._fdu = _lambdify(sp.diff(self.u_expr, _z))
            self._fdv = _lambdify(sp.diff(self.v_expr, _z))
        elif self.kind != "piecewise-constant":
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def linear_coefficients(self, rt: "ReactionTerm") -> Callable:
        """Vectorised z -> (g_u, g_v) along the wave."""
        if self.kind == "piecewise-constant":
            def coeffs(z):
                u, v = self.u(z), self.v(z)
                return rt.g_u(u, v), rt.g_v(u, v)

            return coeffs
        gu, gv = rt.derivative_expressions()
        sub = {_u: self.u_expr, _v: self.v_expr}
        fu, fv = _lambdify(gu.subs(sub)), _lambdify(gv.subs(sub))
        return lambda z: (fu(z), fv(z))

    @property
    def is_pulse(self) -> bool:
        return tuple(self.state_minus) == tuple(self.state_plus)

    def _piece_index(self, z):
        return np.searchsorted(np.asarray(self.jumps, dtype=float), z, side="right")

    def u(self, z):
        if self.kind == "piecewise-constant":
            return np.full(np.shape(z), float(self.u_const))
        return self._fu(z)

    def v(self, z):
        if self.kind == "piecewise-constant":
            return np.asarray(self.values, dtype=float)[self._piece_index(z)]
        return self._fv(z)

    def du(self, z):
        if self.kind == "piecewise-constant":
            return np.zeros(np.shape(z))
        return self._fdu(z)

    def dv(self, z):
        if self.kind == "piecewise-constant":
            return np.zeros(np.shape(z))
        return self._fdv(z)


def _lambdify(expr) -> Callable:
    f = sp.lambdify(_z, expr, modules="numpy")

    def wrapped(z):
        z = np.asarray(z, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.asarray(f(z), dtype=float)
        if out.shape != z.shape:
            out = np.broadcast_to(out, z.shape).copy()
        return out

    return wrapped


# ---------------------------------------------------------------------------
# catalog


def _require(cond: bool, msg: str):
    if not cond:
        raise ParameterError(msg)


def _speed_example6(delta: float, gamma: float) -> float:
    return (math.sqrt(delta) * (1 - 2 * gamma) + math.sqrt(delta * (1 - 2 * gamma) ** 2 + 8)) / (2 * math.sqrt(2))


CATALOG_DEFAULTS = {
    1: dict(D=1.0, c=0.0, beta=0.0),
    2: dict(D=1.0, c=0.0, beta=0.0),
    3: dict(gamma=0.3, L=1.0),
    4: dict(gamma=0.3),
    5: dict(c=1.0),
    6: dict(delta=1.0, gamma=0.75),
    7: dict(D=0.5, c=0.0, beta=0.0),
    8: dict(D=1.5, c=0.0, beta=0.0),
    9: dict(D=0.5, c=1.5),
    10: dict(D=0.3, c=0.3),
}


def catalog(example_id: int, **params) -> tuple[ReactionTerm, WaveProfile]:
    """Reaction term and exact profile for examples 1-10.

    Unknown keys are rejected; missing ones take :data:`CATALOG_DEFAULTS`.
    """
    if example_id not in CATALOG_DEFAULTS:
        raise ParameterError(f"unknown example id {example_id!r}; expected 1..10")
    defaults = CATALOG_DEFAULTS[example_id]
    allowed = set(defaults) | ({"D", "c"} if example_id in (3, 4, 5, 6) else set())
    extra = set(params) - allowed
    if extra:
        raise ParameterError(f"example {example_id}: unexpected parameters {sorted(extra)}")
    p = {**defaults, **{k: float(v) for k, v in params.items() if v is not None}}
    return _BUILDERS[example_id](p)


def _sech_pulse(p, D, example_id):
    beta = p["beta"]
    s2 = sp.sech(_z + beta) ** 2
    rt = ReactionTerm.from_expression("-u*(4 - 6*v)")
    wp = WaveProfile("closed-form", 0.0, D, (0.0, 0.0), (0.0, 0.0), -D * s2, s2,
                     example_id=example_id, parameters=dict(p))
    return rt, wp


def _tanh_front(p, D, example_id):
    beta = p["beta"]
    th = sp.tanh(_z + beta)
    rt = ReactionTerm.from_expression("2*u*(1 - v**2)")
    wp = WaveProfile("closed-form", 0.0, D, (D, -1.0), (-D, 1.0), -D * th, th,
                     example_id=example_id, parameters=dict(p))
    return rt, wp


def _ex1(p):
    _require(p["D"] == 1.0, "example 1 is the D=1 stationary pulse; use example 7 for D != 1")
    _require(p["c"] == 0.0, "no nonstationary pulses exist for D=1 (c must be 0)")
    return _sech_pulse(p, 1.0, 1)


def _ex2(p):
    _require(p["D"] == 1.0, "example 2 is the D=1 stationary front; use example 8 for D != 1")
    _require(p["c"] == 0.0, "example 2 is a stationary front (c must be 0)")
    return _tanh_front(p, 1.0, 2)


def _cubic_g(gamma):
    _require(0.0 < gamma < 1.0, f"gamma must lie in (0, 1), got {gamma}")
    return ReactionTerm.from_expression("v*(v - gamma)*(v - 1) - u", gamma=gamma)


def _d0_stationary(p):
    _require(p.get("D", 0.0) == 0.0 and p.get("c", 0.0) == 0.0, "piecewise examples require D = c = 0")


def _ex3(p):
    _d0_stationary(p)
    L = p["L"]
    _require(L > 0, f"pulse half-width L must be positive, got {L}")
    rt = _cubic_g(p["gamma"])
    wp = WaveProfile("piecewise-constant", 0.0, 0.0, (0.0, 0.0), (0.0, 0.0),
                     jumps=(-L, L), values=(0.0, 1.0, 0.0), u_const=0.0,
                     example_id=3, parameters={k: p[k] for k in ("gamma", "L")})
    return rt, wp


def _ex4(p):
    _d0_stationary(p)
    rt = _cubic_g(p["gamma"])
    wp = WaveProfile("piecewise-constant", 0.0, 0.0, (0.0, 0.0), (0.0, 1.0),
                     jumps=(0.0,), values=(0.0, 1.0), u_const=0.0,
                     example_id=4, parameters={"gamma": p["gamma"]})
    return rt, wp


def _ex5(p):
    c = p["c"]
    _require(p.get("D", 0.0) == 0.0, "example 5 has D = 0")
    _require(c > 0, f"example 5 needs c > 0, got {c}")
    rt = ReactionTerm.from_expression("8*u**3 - 6*u**2 + c**2*(u + v)", c=c)
    u = 1 / (1 + _z**2)
    v = (-c * _z**2 + 2 * _z - c) / (c * (_z**2 + 1) ** 2)
    return rt, WaveProfile("closed-form", c, 0.0, (0.0, 0.0), (0.0, 0.0), u, v,
                           example_id=5, parameters={"c": c})


def _ex6(p):
    delta, gamma = p["delta"], p["gamma"]
    _require(delta > 0, f"delta must be positive, got {delta}")
    _require(0.0 < gamma < 1.0, f"gamma must lie in (0, 1), got {gamma}")
    _require(p.get("D", 0.0) == 0.0, "example 6 has D = 0")
    c = _speed_example6(delta, gamma)
    if "c" in p and p["c"] != 0.0:
        _require(abs(p["c"] - c) < 1e-12, f"example 6 speed is fixed by (delta, gamma): c = {c!r}")
    rt = ReactionTerm.from_expression("(u + v) - delta*u*(u + gamma)*(u + 1)", delta=delta, gamma=gamma)
    u = -sp.Rational(1, 2) + sp.tanh(sp.sqrt(delta / 8) * _z) / 2
    v = -sp.diff(u, _z) / c - u
    return rt, WaveProfile("closed-form", c, 0.0, (-1.0, 1.0), (0.0, 0.0), u, v,
                           example_id=6, parameters={"delta": delta, "gamma": gamma, "c": c})


def _ex7(p):
    D = p["D"]
    _require(D > 0, f"example 7 needs D > 0, got {D}")
    _require(p["c"] == 0.0, "example 7 is a stationary pulse (c must be 0)"
             + ("; no nonstationary pulses exist for D=1" if D == 1.0 else ""))
    return _sech_pulse(p, D, 7)


def _ex8(p):
    D = p["D"]
    _require(D > 0, f"example 8 needs D > 0, got {D}")
    _require(p["c"] == 0.0, "example 8 is a stationary front (c must be 0)")
    return _tanh_front(p, D, 8)


def _ex9(p):
    D, c = p["D"], p["c"]
    _require(D > 0 and D != 1.0, f"example 9 needs D > 0, D != 1, got {D}")
    _require(c > 0, f"example 9 needs c > 0, got {c}")
    rt = ReactionTerm.from_expression(
        "6*(u**2 - D**2*v**2) + ((c**2 - 4)*u + (c**2 - 4*D**2)*v)/(1 - D)", D=D, c=c)
    s2, th = sp.sech(_z) ** 2, sp.tanh(_z)
    u = -s2 * (2 * D * th - c) / (c * (1 - D))
    v = s2 * (2 * th - c) / (c * (1 - D))
    return rt, WaveProfile("closed-form", c, D, (0.0, 0.0), (0.0, 0.0), u, v,
                           example_id=9, parameters={"D": D, "c": c})


def _ex10(p):
    D, c = p["D"], p["c"]
    _require(D > 0 and D != 1.0, f"example 10 needs D > 0, D != 1, got {D}")
    _require(c > 0, f"example 10 needs c > 0, got {c}")
    rt = ReactionTerm.from_expression(
        "(u + v)*(4*D*u**2 + 4*D**3*v**2 + 8*D**2*u*v - 2*c*u - 2*c*D**2*v + c**2)/(1 - D)", D=D, c=c)
    th = sp.tanh(_z)
    u = (D * th**2 - c * th - D) / (c * (D - 1))
    v = -(th**2 - c * th - 1) / (c * (D - 1))
    s = 1.0 / (D - 1)
    return rt, WaveProfile("closed-form", c, D, (s, -s), (-s, s), u, v,
                           example_id=10, parameters={"D": D, "c": c})


_BUILDERS = {1: _ex1, 2: _ex2, 3: _ex3, 4: _ex4, 5: _ex5, 6: _ex6, 7: _ex7, 8: _ex8, 9: _ex9, 10: _ex10}


def example10_essential_condition(D: float, c: float) -> bool:
    """(c-2)(c-2D) >= 0 and (c+2)(c+2D) >= 0.

    The source writes the second factor of each product with a capital C;
    it is read here as the wave speed c.
    """
    return (c - 2) * (c - 2 * D) >= 0 and (c + 2) * (c + 2 * D) >= 0


# ---------------------------------------------------------------------------
# checks


def residual(rt: ReactionTerm, wp: WaveProfile, grid, h: float = 1e-5) -> float:
    """Sup over ``grid`` of the travelling-wave equation residuals."""
    if wp.kind != "closed-form":
        raise ValueError("residual is undefined for piecewise-constant profiles")
    z = np.asarray(grid, dtype=float)
    u, v = wp.u(z), wp.v(z)
    du, dv = wp.du(z), wp.dv(z)
    d2u = (wp.du(z + h) - wp.du(z - h)) / (2 * h)
    d2v = (wp.dv(z + h) - wp.dv(z - h)) / (2 * h)
    g = rt.g(u, v)
    r1 = np.abs(d2u + wp.c * du + g)
    r2 = np.abs(wp.D * d2v + wp.c * dv - g)
    return float(max(np.max(r1), np.max(r2)))


def far_field(rt: ReactionTerm, wp: WaveProfile) -> FarFieldData:
    um, vm = wp.state_minus
    up, vp = wp.state_plus
    return FarFieldData(float(rt.g_u(up, vp)), float(rt.g_v(up, vp)),
                        float(rt.g_u(um, vm)), float(rt.g_v(um, vm)))


def validate_piecewise(rt: ReactionTerm, wp: WaveProfile, tol: float = 1e-12) -> bool:
    if wp.kind != "piecewise-constant":
        raise ValueError("validate_piecewise needs a piecewise-constant profile")
    u_minus = wp.state_minus[0]
    if wp.u_const != u_minus:
        return False
    return all(abs(float(rt.g(u_minus, vk))) < tol for vk in wp.values)


def zero_count_vprime(wp: WaveProfile, grid) -> int:
    """Sign changes of v̂' on ``grid`` (exact zeros are skipped)."""
    if wp.kind != "closed-form":
        raise ValueError("zero_count_vprime needs a closed-form profile")
    d = wp.dv(np.asarray(grid, dtype=float))
    s = np.sign(d)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))
