"""Command-line front end.

CSV columns
  borders.csv   k, re_lambda, im_lambda, branch, side
  regions.csv   re_lambda, im_lambda, count_plus, count_minus, index, border
  scan.csv      re_lambda, im_lambda, re_E, im_E, phase
  winding.csv   re_lambda, im_lambda, re_E, im_E, phase

Exit status: 0 success, 1 invalid configuration, 2 instability detected
(only with --fail-on-unstable).
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import essential_spectrum as es
from . import evans_closed_form as cf
from .io import DocumentError, loads
from .linearization import build
from .model import CATALOG_DEFAULTS, ParameterError, catalog, example10_essential_condition, far_field, residual, \
    validate_piecewise, zero_count_vprime
from .numerics import InsufficientSamplingError, RootOnContourError, circle, half_annulus
from .riccati_evans import EvansSettings, locate_poles, scan_real, threads_from_env, winding

SCHEMA = 1
TASKS = ("catalog", "profile-check", "essential", "evans-scan", "winding", "summary-tables")
EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE = 0, 1, 2

DEFAULTS = {
    "job": {"task": "catalog", "example": 0, "document": "", "fail_on_unstable": False},
    "parameters": {},
    "evans": {"L": 30.0, "z0": 0.0, "seed": 0, "threads": 0},
    "grid": {"scan": "0.001:20:200", "regions": "", "k_samples": 2001},
    "contour": {"outer": 0.0, "inner": 0.01},
    "output": {"dir": "."},
}
PARAM_KEYS = ("D", "c", "gamma", "delta", "L", "beta")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line

    def __str__(self) -> str:
        head = f"line {self.line}: " if self.line else ""
        return head + super().__str__()


@dataclass
class JobConfig:
    task: str
    example: int = 0
    document: str = ""
    parameters: dict = field(default_factory=dict)
    L: float = 30.0
    z0: float = 0.0
    seed: int = 0
    threads: int = 1
    scan: tuple = (0.001, 20.0, 200)
    regions: tuple | None = None
    k_samples: int = 2001
    outer: float = 0.0
    inner: float = 0.01
    out: Path = Path(".")
    fail_on_unstable: bool = False

    def settings(self) -> EvansSettings:
        return EvansSettings(L=self.L, z0=self.z0, seed=self.seed, threads=self.threads)

    def problem(self):
        if self.document:
            try:
                rt, wp = loads(Path(self.document).read_text(encoding="utf-8"))
            except OSError as exc:
                raise ConfigError(f"cannot read document: {exc}") from exc
            if wp is None:
                raise ConfigError("document has no [profile] table")
            return rt, wp
        if not self.example:
            raise ConfigError(f"task {self.task!r} needs --example or a document")
        return catalog(self.example, **self.parameters)


# ---------------------------------------------------------------------------
# configuration


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _parse_ranges(s: str, n: int, what: str) -> tuple:
    parts = s.split(":")
    if len(parts) != n:
        raise ConfigError(f"{what} needs {n} ':'-separated numbers, got {s!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc
    return tuple(vals)


def _merge(base: dict, doc: dict, text: str) -> dict:
    out = copy.deepcopy(base)
    for table, body in doc.items():
        if table not in out:
            raise ConfigError(f"unknown table [{table}]", _line_of(text, table) or _table_line(text, table))
        if not isinstance(body, dict):
            raise ConfigError(f"[{table}] must be a table", _line_of(text, table))
        for k, v in body.items():
            if table == "parameters":
                if k not in PARAM_KEYS:
                    raise ConfigError(f"unknown parameter {k!r}", _line_of(text, k))
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise ConfigError(f"parameter {k!r} must be a number", _line_of(text, k))
            elif k not in out[table]:
                raise ConfigError(f"unknown key {k!r} in [{table}]", _line_of(text, k))
            elif type(out[table][k]) is float and isinstance(v, int) and not isinstance(v, bool):
                v = float(v)
            elif type(v) is not type(out[table][k]):
                raise ConfigError(f"{table}.{k} must be {type(out[table][k]).__name__}", _line_of(text, k))
            out[table][k] = v
    return out


def _table_line(text: str, table: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip() == f"[{table}]":
            return i
    return None


def load_config(path: str) -> tuple[dict, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed config: {exc}", int(m.group(1)) if m else None) from exc
    return _merge(DEFAULTS, doc, text), text


def resolve(args: argparse.Namespace) -> JobConfig:
    """Defaults, then the config file, then command-line flags."""
    cfg, text = (load_config(args.config) if args.config else (copy.deepcopy(DEFAULTS), ""))
    if args.task:
        cfg["job"]["task"] = args.task
    for key, table, name in (("example", "job", "example"), ("document", "job", "document"),
                             ("z0", "evans", "z0"), ("seed", "evans", "seed"), ("threads", "evans", "threads"),
                             ("contour_outer", "contour", "outer"), ("contour_inner", "contour", "inner"),
                             ("out", "output", "dir")):
        v = getattr(args, key, None)
        if v is not None:
            cfg[table][name] = v
    if args.fail_on_unstable:
        cfg["job"]["fail_on_unstable"] = True
    for k in PARAM_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg["parameters"][k] = v
    if args.grid is not None:
        cfg["grid"]["regions" if cfg["job"]["task"] == "essential" else "scan"] = args.grid

    task = cfg["job"]["task"]
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}", _line_of(text, "task"))
    params = dict(cfg["parameters"])
    # L is both a catalog parameter (example 3) and the Evans truncation length
    L = float(params.get("L", cfg["evans"]["L"])) if cfg["job"]["example"] != 3 else cfg["evans"]["L"]
    if cfg["job"]["example"] != 3:
        params.pop("L", None)
    threads = cfg["evans"]["threads"] or threads_from_env(1)
    a, b, n = _parse_ranges(cfg["grid"]["scan"], 3, "scan grid")
    if not (a < b and n >= 2):
        raise ConfigError(f"scan grid must satisfy lo < hi and n >= 2, got {cfg['grid']['scan']!r}",
                          _line_of(text, "scan"))
    regions = None
    if cfg["grid"]["regions"]:
        r = _parse_ranges(cfg["grid"]["regions"], 6, "region grid")
        regions = (r[0], r[1], r[2], r[3], int(r[4]), int(r[5]))
    if cfg["contour"]["inner"] <= 0 or cfg["contour"]["outer"] < 0:
        raise ConfigError("contour radii must be positive", _line_of(text, "inner"))
    if threads < 1:
        raise ConfigError("threads must be at least 1", _line_of(text, "threads"))
    return JobConfig(task=task, example=int(cfg["job"]["example"]), document=cfg["job"]["document"],
                     parameters=params, L=L, z0=float(cfg["evans"]["z0"]), seed=int(cfg["evans"]["seed"]),
                     threads=int(threads), scan=(a, b, int(n)), regions=regions,
                     k_samples=int(cfg["grid"]["k_samples"]), outer=float(cfg["contour"]["outer"]),
                     inner=float(cfg["contour"]["inner"]), out=Path(cfg["output"]["dir"]),
                     fail_on_unstable=bool(cfg["job"]["fail_on_unstable"]))


# ---------------------------------------------------------------------------
# tasks


def _cx(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _write(cfg: JobConfig, name: str, text: str) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    p = cfg.out / name
    p.write_text(text, encoding="utf-8")
    return p


def _json(obj) -> str:
    return json.dumps({"schema": SCHEMA, **obj}, indent=2, allow_nan=False, default=str) + "\n"


def task_catalog(cfg: JobConfig) -> tuple[dict, bool]:
    rows = []
    for i, defaults in CATALOG_DEFAULTS.items():
        rt, wp = catalog(i)
        rows.append({"example": i, "kind": wp.kind, "wave": "pulse" if wp.is_pulse else "front",
                     "D": wp.D, "c": wp.c, "defaults": defaults})
    return {"task": "catalog", "examples": rows}, False


def task_profile_check(cfg: JobConfig) -> tuple[dict, bool]:
    rt, wp = cfg.problem()
    out = {"task": "profile-check", "example": wp.example_id, "kind": wp.kind,
           "wave": "pulse" if wp.is_pulse else "front", "far_field": far_field(rt, wp).__dict__}
    if wp.kind == "closed-form":
        z = np.linspace(-40, 40, 8001)
        res = residual(rt, wp, z)
        lim = max(float(np.max(np.abs(np.array([wp.u(np.array([s * 40.0]))[0] - st[0],
                                                  wp.v(np.array([s * 40.0]))[0] - st[1]]))))
                  for s, st in ((-1, wp.state_minus), (1, wp.state_plus)))
        out.update(residual=res, far_state_error=lim, vprime_sign_changes=zero_count_vprime(wp, z),
                   valid=bool(res < 1e-6))
    else:
        out.update(valid=validate_piecewise(rt, wp))
    return out, False


def _stability(far, D: float) -> dict:
    return {side: str(es.border_stability(far, D, side)) for side in ("-", "+")}


def task_essential(cfg: JobConfig) -> tuple[dict, bool]:
    rt, wp = cfg.problem()
    far = far_field(rt, wp)
    out = {"task": "essential", "example": wp.example_id, "D": wp.D, "c": wp.c, "far_field": far.__dict__}
    if wp.example_id == 10:
        out["example10_condition"] = example10_essential_condition(wp.D, wp.c)
        out["assumptions"] = ["example 10 condition evaluated with the capital C read as the wave speed c"]
    if wp.D == 0 and wp.c == 0:
        pp = cf.PencilProblem.from_wave(rt, wp)
        ivs = cf.pencil_essential_spectrum(pp)
        out["intervals"] = [[None if math.isinf(a) else a, b] for a, b in ivs]
        return out, any(b > 0 for _, b in ivs)
    curves = []
    for side in ("-", "+"):
        if side == "-" and wp.is_pulse:
            continue
        curves += es.border_curves(far, wp.D, wp.c, side, n=cfg.k_samples)
    _write(cfg, "borders.csv", es.borders_csv(curves))
    stab = _stability(far, wp.D)
    max_re = max(float(np.max(cv.lam.real)) for cv in curves)
    out.update(border_stability=stab, max_re_border=max_re, files=["borders.csv"])
    if cfg.regions:
        x0, x1, y0, y1, nx, ny = cfg.regions
        rm = es.region_map(build(rt, wp), es.grid((x0, x1), (y0, y1), nx, ny))
        _write(cfg, "regions.csv", rm.to_csv())
        out["files"].append("regions.csv")
        out["nonzero_index_points"] = int(np.count_nonzero(rm.index != 0))
    return out, max_re > 1e-12


def task_evans_scan(cfg: JobConfig) -> tuple[dict, bool]:
    rt, wp = cfg.problem()
    sp = build(rt, wp)
    a, b, n = cfg.scan
    rep = scan_real(sp, (a, b), n=n, settings=cfg.settings())
    _write(cfg, "scan.csv", rep.to_csv())
    d = rep.to_dict()
    d.update(task="evans-scan", example=wp.example_id, interval=[a, b], files=["scan.csv"])
    unstable = any(complex(r["lam"]).real > 0 for r in rep.roots)
    return d, unstable


def task_winding(cfg: JobConfig) -> tuple[dict, bool]:
    rt, wp = cfg.problem()
    sp = build(rt, wp)
    contour = half_annulus(cfg.outer, cfg.inner) if cfg.outer > 0 else None
    rep = winding(sp, contour, settings=cfg.settings())
    _write(cfg, "winding.csv", rep.to_csv())
    d = rep.to_dict()
    d.update(task="winding", example=wp.example_id, files=["winding.csv"])
    return d, bool(rep.winding and rep.winding > 0)


# -- summary tables ---------------------------------------------------------


def _real_roots(example: int, settings, interval=(1e-3, 20.0), n=200, **params) -> list:
    rt, wp = catalog(example, **params)
    rep = scan_real(build(rt, wp), interval, n=n, settings=settings)
    return [complex(r["lam"]).real for r in rep.roots]


def _example8_zero_count(settings, D: float = 1.5) -> dict:
    """Zeros inside K = winding + poles (poles found in the upper half, mirrored)."""
    rt, wp = catalog(8, D=D)
    sp = build(rt, wp)
    w = winding(sp, settings=settings)
    upper = locate_poles(sp, (0.02, 1.0, 0.5, 2.5), seed_grid=(21, 21), settings=settings)
    poles = upper + [complex(p).conjugate() for p in upper]
    return {"winding": w.winding, "poles": [_cx(p) for p in poles], "zeros": w.winding + len(poles)}


def _front_root_check(example: int, settings, **params) -> list:
    """Real positive roots confirmed by a small-circle winding of +1."""
    rt, wp = catalog(example, **params)
    sp = build(rt, wp)
    found = []
    for r in _real_roots(example, settings, **params):
        try:
            if winding(sp, circle(r, 1e-2), settings=settings, n_seed=64).winding >= 1:
                found.append(r)
        except (RootOnContourError, InsufficientSamplingError):
            continue
    return found


def task_summary_tables(cfg: JobConfig) -> tuple[dict, bool]:
    s = cfg.settings()
    t0 = time.perf_counter()

    def verdict(unstable: bool) -> str:
        return "unstable" if unstable else "stable"

    # closed forms
    ex1 = cf.d1_point_spectrum(1)
    ex1_unstable = any(r["lam"] > 0 and not r["embedded"] for r in ex1)
    _, wp2 = catalog(2)
    ex2_monotone = zero_count_vprime(wp2, np.linspace(-40, 40, 80001)) == 0
    lam_pos = np.linspace(1e-3, 10, 500)
    ex3_roots = [float(x) for x in lam_pos if abs(cf.evans_example3(x, 0.3, 1.0)) < 1e-12]
    ex3_real = cf.realness_certificate(cf.example3_problem(0.3, 1.0))
    ex4_roots = cf.example4_displayed_roots(0.3)
    try:
        catalog(1, c=0.5)
        d1_moving_pulse = "exists"
    except ParameterError:
        d1_moving_pulse = "no solutions"
    theory = [
        {"case": "D=1, c=0", "pulse": verdict(ex1_unstable), "front": verdict(not ex2_monotone),
         "evidence": {"example1_eigenvalues": ex1, "example2_monotone": ex2_monotone}},
        {"case": "D=0, c=0", "pulse": verdict(bool(ex3_roots)), "front": verdict(any(r > 0 for r in ex4_roots)),
         "evidence": {"example3_positive_roots": ex3_roots, "example3_real_spectrum": ex3_real,
                      "example4_roots": ex4_roots}},
        {"case": "D=1, c!=0", "pulse": d1_moving_pulse, "front": "stable if monotone"},
    ]

    ex5 = _real_roots(5, s, c=1.0)
    ex6 = _real_roots(6, s, delta=1.0, gamma=0.75)
    ex6_w = winding(build(*catalog(6, delta=1.0, gamma=0.75)), settings=s).winding
    ex7 = _real_roots(7, s, D=0.5)
    ex8 = _example8_zero_count(s)
    ex9 = _real_roots(9, s, D=0.5, c=1.5)
    ex10 = _front_root_check(10, s, D=0.3, c=0.3)
    numeric = [
        {"case": "D=0, c!=0", "pulse": verdict(bool(ex5)), "front": verdict(bool(ex6) or ex6_w > 0),
         "evidence": {"example5_roots": ex5, "example6_roots": ex6, "example6_winding": ex6_w}},
        {"case": "D!=0,1, c=0", "pulse": verdict(bool(ex7)), "front": verdict(ex8["zeros"] > 0),
         "evidence": {"example7_roots": ex7, "example8": ex8}},
        {"case": "D!=0,1, c!=0", "pulse": verdict(bool(ex9)), "front": verdict(bool(ex10)),
         "evidence": {"example9_roots": ex9, "example10_roots": ex10}},
    ]
    out = {"task": "summary-tables", "theoretical": theory, "numerical": numeric,
           "settings": s.to_dict(), "seconds": round(time.perf_counter() - t0, 2)}
    return out, False


RUNNERS = {"catalog": task_catalog, "profile-check": task_profile_check, "essential": task_essential,
           "evans-scan": task_evans_scan, "winding": task_winding, "summary-tables": task_summary_tables}


def run(cfg: JobConfig) -> int:
    result, unstable = RUNNERS[cfg.task](cfg)
    result["unstable"] = bool(unstable)
    _write(cfg, f"{cfg.task}.json", _json(result))
    sys.stdout.write(_json(result))
    return EXIT_UNSTABLE if (unstable and cfg.fail_on_unstable) else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors (exit 1)
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evanslab", description="Spectral stability of travelling waves via Riccati-Evans functions.",
                epilog=__doc__.split("\n", 2)[2], formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("task", nargs="?", choices=TASKS, help="job to run (may also come from --config)")
    p.add_argument("--config", help="TOML job document")
    p.add_argument("--print-defaults", action="store_true", help="print the default job document and exit")
    p.add_argument("--example", type=int, help="catalog example id 1..10")
    p.add_argument("--document", help="TOML reaction-term/profile document instead of --example")
    for k in ("D", "c", "gamma", "delta", "L", "beta"):
        p.add_argument(f"--{k}", type=float, dest=k)
    p.add_argument("--z0", type=float, help="matching point")
    p.add_argument("--grid", help="evans-scan: LO:HI:N; essential: RE0:RE1:IM0:IM1:NRE:NIM region map "
                   "(write --grid=... when the value starts with a minus sign)")
    p.add_argument("--contour-outer", type=float, dest="contour_outer")
    p.add_argument("--contour-inner", type=float, dest="contour_inner")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker cap (falls back to EVANSLAB_THREADS)")
    p.add_argument("--seed", type=int, help="seed for the re-chart retry")
    p.add_argument("--fail-on-unstable", action="store_true", help="exit 2 when instability is detected")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(tomli_w.dumps(DEFAULTS))
        return EXIT_OK
    try:
        cfg = resolve(args)
        return run(cfg)
    except (ConfigError, ParameterError, DocumentError) as exc:
        sys.stderr.write(f"evanslab: {_diagnostic(exc, args.config)}\n")
        return EXIT_CONFIG


def _diagnostic(exc: Exception, config: str | None) -> str:
    """Prefix the message with the config line it most likely refers to."""
    msg = str(exc)
    if not config or re.match(r"line \d+", msg):
        return msg
    try:
        text = Path(config).read_text(encoding="utf-8")
    except OSError:
        return msg
    for key in PARAM_KEYS + ("example", "document"):
        if re.search(rf"\b{re.escape(key)}\b", msg):
            line = _line_of(text, key)
            if line:
                return f"line {line}: {msg}"
    line = _line_of(text, "example") or _line_of(text, "task") or 1
    return f"line {line}: {msg}"


if __name__ == "__main__":
    raise SystemExit(main())
