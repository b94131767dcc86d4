"""TOML documents for reaction terms and wave profiles.

Layout::

    [reaction]
    parameters = { gamma = 0.3 }
    monomials = [ { i = 1, j = 0, a = -1.0 }, ... ]

    [profile]
    kind = "piecewise-constant"      # or "closed-form"
    c = 0.0
    D = 0.0
    state_minus = [0.0, 0.0]
    state_plus = [0.0, 1.0]
    jumps = [0.0]                    # piecewise only
    values = [0.0, 1.0]              # piecewise only
    u_const = 0.0                    # piecewise only
    u = "..."                        # closed-form only: sympy srepr in z
    v = "..."

Floats are written with ``repr`` so every number round-trips exactly.
"""

from __future__ import annotations

import sympy as sp
import tomli
import tomli_w

from .model import ReactionTerm, WaveProfile


class DocumentError(ValueError):
    pass


def reaction_to_dict(rt: ReactionTerm) -> dict:
    mons = [{"i": i, "j": j, "a": float(a)} for (i, j), a in sorted(rt.monomials.items())]
    return {"parameters": {k: float(v) for k, v in rt.parameters.items()}, "monomials": mons}


def reaction_from_dict(d: dict) -> ReactionTerm:
    try:
        mons = {(int(m["i"]), int(m["j"])): float(m["a"]) for m in d["monomials"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"bad monomial table: {exc}") from exc
    if any(i < 0 or j < 0 for i, j in mons):
        raise DocumentError("monomial exponents must be non-negative")
    return ReactionTerm(mons, {k: float(v) for k, v in d.get("parameters", {}).items()})


def profile_to_dict(wp: WaveProfile) -> dict:
    d = {
        "kind": wp.kind,
        "c": float(wp.c),
        "D": float(wp.D),
        "state_minus": [float(x) for x in wp.state_minus],
        "state_plus": [float(x) for x in wp.state_plus],
        "parameters": {k: float(v) for k, v in wp.parameters.items()},
    }
    if wp.example_id is not None:
        d["example_id"] = int(wp.example_id)
    if wp.kind == "piecewise-constant":
        d.update(jumps=[float(x) for x in wp.jumps], values=[float(x) for x in wp.values],
                 u_const=float(wp.u_const))
    else:
        d.update(u=sp.srepr(wp.u_expr), v=sp.srepr(wp.v_expr))
    return d


def profile_from_dict(d: dict) -> WaveProfile:
    try:
        kind = d["kind"]
        common = dict(c=float(d["c"]), D=float(d["D"]), state_minus=tuple(map(float, d["state_minus"])),
                      state_plus=tuple(map(float, d["state_plus"])), example_id=d.get("example_id"),
                      parameters=dict(d.get("parameters", {})))
        if kind == "piecewise-constant":
            jumps, values = tuple(map(float, d["jumps"])), tuple(map(float, d["values"]))
            if len(values) != len(jumps) + 1:
                raise DocumentError("need one piece value more than jumps")
            return WaveProfile(kind, jumps=jumps, values=values, u_const=float(d.get("u_const", 0.0)), **common)
        if kind == "closed-form":
            return WaveProfile(kind, u_expr=sp.sympify(d["u"]), v_expr=sp.sympify(d["v"]), **common)
    except KeyError as exc:
        raise DocumentError(f"missing profile field {exc}") from exc
    raise DocumentError(f"unknown profile kind {kind!r}")


def dumps(rt: ReactionTerm, wp: WaveProfile | None = None) -> str:
    doc = {"reaction": reaction_to_dict(rt)}
    if wp is not None:
        doc["profile"] = profile_to_dict(wp)
    return tomli_w.dumps(doc)


def loads(text: str) -> tuple[ReactionTerm, WaveProfile | None]:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise DocumentError(str(exc)) from exc
    if "reaction" not in doc:
        raise DocumentError("document has no [reaction] table")
    rt = reaction_from_dict(doc["reaction"])
    wp = profile_from_dict(doc["profile"]) if "profile" in doc else None
    return rt, wp
