"""Batch driver: ``ncspectral curvature|tfunc|verify --config FILE``.

Config file (YAML or JSON).  Top-level keys, all optional except ``metric``
for ``curvature`` and ``tfunc``::

    metric:
      family: conformal | twisted | doubly_twisted | constant | general | random
      interval: [lo, hi]            # spectral interval, default [-1, 1]
      f: "exp(t)"                   # conformal, twisted, doubly_twisted
      ft: "exp(-t) + 1"             # doubly_twisted
      g: [[...], ...]               # constant block (dim taken from it)
      gt: [[...], ...]              # second block for twisted / doubly_twisted
      dim: 2                        # conformal without g (identity), random
      entries: [["t + 2", 0], ...]  # general: numbers or whitelist expressions
    curvature:
      points: [[t0, t1, t2], ...]
      random_points: 0              # extra points drawn from the seed
      method: auto | quadrature     # how T-functions are evaluated
      quantities: [B21, B22, F_S]
    tfunc:
      alpha: [2, 1]
      n: [0, 1]                     # one component; all components if omitted
      points: [[t0, t1], ...]
      random_points: 0
    verify:
      criteria: [1, 2, ...]         # default: all
      options: {8: {samples: 100}}  # keyword arguments per criterion
      fault: sign_flip              # negative control for criteria 8 and 9
    quadrature: {order: 8, atol: 1.0e-10, rtol: 1.0e-13, max_depth: 10}
    format: json | csv
    seed: 0

Whitelist expressions use ``t``, numbers, ``+ - * / ^``, ``exp``, ``log``
and ``sqrt``.  Command line flags override ``format`` and ``seed``.

Reports are JSON (``schema/report.schema.json``, tag ``ncspectral-report/1``)
or CSV with the header :data:`CSV_HEADER` after the version line
:data:`CSV_VERSION`.  Floats are written with ``repr`` in both formats, so
they carry identical numbers.  Exit status: 0 ok, 1 a verify check failed,
2 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from . import curvature as C
from . import functions as fnc
from . import metrics as M
from . import verification as V
from .quadrature import QuadratureSpec
from .tfunc import tfunc_dim2, tfunc_dt4, twisted_branch

SCHEMA = "ncspectral-report/1"
CSV_VERSION = "# ncspectral-csv/1"
CSV_HEADER = ("quantity", "alpha", "index", "t0", "t1", "t2", "i", "j", "value", "branch", "method", "delta")
VERIFY_HEADER = ("criterion", "name", "tolerance", "observed", "passed")


class ConfigError(ValueError):
    pass


# -- configuration ---------------------------------------------------------------------

@dataclass
class RunConfig:
    metric: dict
    command: dict = field(default_factory=dict)
    quadrature: dict = field(default_factory=dict)
    format: str = "json"
    seed: int = 0

    @classmethod
    def load(cls, path: str | Path | None, command: str) -> "RunConfig":
        raw: dict = {}
        if path is not None:
            text = Path(path).read_text()
            raw = yaml.safe_load(text) or {}
            if not isinstance(raw, dict):
                raise ConfigError("config must be a mapping")
        known = {"metric", "curvature", "tfunc", "verify", "quadrature", "format", "seed"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        fmt = raw.get("format", "json")
        if fmt not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        metric = raw.get("metric")
        if metric is None and command != "verify":
            raise ConfigError("a metric section is required")
        return cls(metric or {}, dict(raw.get(command) or {}), dict(raw.get("quadrature") or {}),
                   fmt, int(raw.get("seed", 0)))

    def quad(self) -> QuadratureSpec:
        try:
            return QuadratureSpec(**self.quadrature)
        except TypeError as exc:
            raise ConfigError(f"bad quadrature section: {exc}") from None

    def build_metric(self, rng) -> M.FunctionalMetric:
        return build_metric(self.metric, rng)


def _fn(v):
    return fnc.parse(v) if isinstance(v, str) else fnc.const(float(v))


def _mat(v, what):
    if v is None:
        raise ConfigError(f"metric.{what} is required")
    return np.atleast_2d(np.asarray(v, dtype=float))


def build_metric(spec: dict, rng=None) -> M.FunctionalMetric:
    """Metric from the ``metric`` section described in the module docstring."""
    family = spec.get("family", "conformal")
    interval = tuple(spec.get("interval", (-1.0, 1.0)))
    try:
        if family == "constant":
            return M.build_constant(_mat(spec.get("g"), "g"), interval)
        if family == "conformal":
            g = spec.get("g")
            return M.build_conformal(_fn(spec.get("f", "1")), None if g is None else _mat(g, "g"),
                                     spec.get("dim"), interval)
        if family == "twisted":
            return M.build_twisted(_fn(spec.get("f", "t")), _mat(spec.get("g"), "g"),
                                   spec.get("gt") or None, interval)
        if family == "doubly_twisted":
            return M.build_doubly_twisted(_fn(spec.get("f")), _mat(spec.get("g"), "g"),
                                          _fn(spec.get("ft")), _mat(spec.get("gt"), "gt"), interval)
        if family == "general":
            entries = spec.get("entries")
            if entries is None:
                raise ConfigError("metric.entries is required for the general family")
            return M.build_general(entries, interval)
        if family == "random":
            rng = np.random.default_rng(0) if rng is None else rng
            return M.random_spd_metric(rng, int(spec.get("dim", 2)), interval)
    except (M.MetricError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid metric: {exc}") from None
    raise ConfigError(f"unknown metric family {family!r}")


def _points(section: dict, arity: int, rng, interval) -> list:
    pts = [tuple(float(x) for x in p) for p in section.get("points", [])]
    for p in pts:
        if len(p) < arity:
            raise ConfigError(f"points need at least {arity} coordinates")
    lo, hi = interval
    for _ in range(int(section.get("random_points", 0))):
        pts.append(tuple(float(x) for x in rng.uniform(lo, hi, size=arity)))
    if not pts:
        raise ConfigError("no evaluation points given (points or random_points)")
    return pts


# -- rows -------------------------------------------------------------------------------------

def _row(quantity, t, value, i=None, j=None, alpha="", index="", branch="", method="", delta=None):
    t = [float(x) for x in t] + [None] * (3 - len(t))
    return {"quantity": quantity, "alpha": alpha, "index": index, "t0": t[0], "t1": t[1], "t2": t[2],
            "i": i, "j": j, "value": float(value), "branch": branch, "method": method,
            "delta": None if delta is None else float(delta)}


def _closed_form_density(m: M.FunctionalMetric):
    """(K-like evaluator, H-like evaluator) returning full matrices, or None."""
    p = m.params
    if m.family == "conformal":
        KH = C.kh_conformal(m.dim, p["f"])
        g = p["g"]
        base = math.sqrt(np.linalg.det(g)) * np.linalg.inv(g)
        return (lambda a, b: base * KH.K(a, b)), (lambda a, b, c: base * KH.H(a, b, c))
    if m.family == "constant":
        z = np.zeros((m.dim, m.dim))
        return (lambda a, b: z), (lambda a, b, c: z)
    if m.family == "twisted":
        g, gt = p["g"], np.atleast_2d(p["gt"])
        r = g.shape[0]
        conf, til = C.kh_twisted(r, p["f"])
        vol = math.sqrt(np.linalg.det(g) * np.linalg.det(gt))
        gi, gti = np.linalg.inv(g), np.linalg.inv(gt)

        def block(K0, K1):
            out = np.zeros((m.dim, m.dim))
            out[:r, :r] = vol * gi * K0
            out[r:, r:] = vol * gti * K1
            return out

        return (lambda a, b: block(conf.K(a, b) if conf else 0.0, til.K(a, b)),
                lambda a, b, c: block(conf.H(a, b, c) if conf else 0.0, til.H(a, b, c)))
    return None


def _density_branch(m) -> str:
    """Branch of the closed-form T_{;1,1} behind the density, if any."""
    if m.family in ("conformal", "constant"):
        return twisted_branch(0, (1, 1), m.dim)
    if m.family == "twisted":
        return twisted_branch(0, (1, 1), m.params["g"].shape[0])
    return ""


def cmd_curvature(cfg: RunConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    m = cfg.build_metric(rng)
    sec = cfg.command
    pts = _points(sec, 3, rng, m.interval)
    method = sec.get("method", "auto")
    quad = cfg.quad()
    closed = _closed_form_density(m)
    engine = C.b2_engine(m, "quadrature" if method == "quadrature" else "auto", quad)
    want = sec.get("quantities", ["B21", "B22", "F_S"])
    rows = []
    branch = _density_branch(m)
    kernel = C.total_curvature_kernel(m, "quadrature" if method == "quadrature" else "auto", quad)
    for p in pts:
        t0, t1, t2 = p[:3]
        blocks = []
        if "B21" in want:
            blocks.append(("B21", (t0, t1), engine.B21(t0, t1), closed and closed[0](t0, t1)))
        if "B22" in want:
            blocks.append(("B22", (t0, t1, t2), engine.B22(t0, t1, t2), closed and closed[1](t0, t1, t2)))
        for name, ts, E, Cf in blocks:
            for i, j in itertools.product(range(m.dim), repeat=2):
                if Cf is not None:
                    rows.append(_row(name, ts, Cf[i, j], i, j, branch=branch, method="closed-form"))
                rows.append(_row(name, ts, E[i, j], i, j, branch=branch, method=f"engine/{engine.method}",
                                 delta=None if Cf is None else abs(E[i, j] - Cf[i, j])))
        if "F_S" in want and t0 != t1:
            F = kernel.F_S(t0, t1)
            br = C.branch_dim2(m, t0, t1) if m.dim == 2 else ""
            for i, j in itertools.product(range(m.dim), repeat=2):
                rows.append(_row("F_S", (t0, t1), F[i, j], i, j, branch=br, method=kernel.method))
    return {"rows": rows, "metric": repr(m)}


def cmd_tfunc(cfg: RunConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    m = cfg.build_metric(rng)
    sec = cfg.command
    alpha = tuple(int(a) for a in sec.get("alpha", (1, 1)))
    n_req = sec.get("n")
    pts = _points(sec, len(alpha), rng, m.interval)
    quadT_of = m.t_provider("quadrature", cfg.quad())
    rank = 2 * sum(alpha) - 4
    if rank < 0 or min(alpha) < 0:
        raise ConfigError("alpha needs non-negative entries with |alpha| >= 2")
    if n_req is not None and len(n_req) != rank:
        raise ConfigError(f"n must have {rank} entries for alpha={list(alpha)}")
    comps = [tuple(int(k) for k in n_req)] if n_req is not None else \
        list(itertools.combinations_with_replacement(range(m.dim), rank))
    a_str = " ".join(map(str, alpha))
    rows = []
    for p in pts:
        ts = p[:len(alpha)]
        quadT = quadT_of(alpha, ts, rank)
        methods = {"quadrature": (quadT, "")}
        if m.family in ("conformal", "constant", "twisted"):
            br = twisted_branch(0, alpha, m.params["g"].shape[0]) if m.family == "twisted" \
                else twisted_branch(rank, alpha, m.dim)
            methods["closed-form"] = (m.t_provider("closed-form")(alpha, ts, rank), br)
        if m.dim == 2 and alpha in ((1, 1), (2, 1), (1, 2)):
            r = tfunc_dim2(m.ginv, *ts)
            methods["dim2"] = ({(1, 1): r.T11, (2, 1): r.T21, (1, 2): r.T12}[alpha], r.branch)
        if m.family == "doubly_twisted" and m.dim == 4 and alpha in ((1, 1), (2, 1)):
            q = m.params
            r = tfunc_dt4(q["f"], q["ft"], q["g"], q["gt"], *ts)
            methods["dt4"] = (r.T11 if alpha == (1, 1) else r.T21,
                              "near-degenerate" if r.near_degenerate else "")
        for comp in comps:
            ref = float(np.asarray(quadT)[comp]) if rank else float(quadT)
            for name, (T, br) in methods.items():
                val = float(np.asarray(T)[comp]) if rank else float(T)
                rows.append(_row("T", ts, val, alpha=a_str, index=" ".join(map(str, comp)), branch=br,
                                 method=name, delta=None if name == "quadrature" else abs(val - ref)))
        if rank:
            T = np.asarray(quadT)
            dev = max(float(np.abs(np.transpose(T, q) - T).max()) for q in itertools.permutations(range(rank)))
            rows.append(_row("check:index_shuffle", ts, dev, alpha=a_str, method="quadrature"))
    return {"rows": rows, "metric": repr(m)}


def cmd_verify(cfg: RunConfig, progress=None) -> dict:
    sec = cfg.command
    unknown = set(sec) - {"criteria", "options", "fault"}
    if unknown:
        raise ConfigError(f"unknown verify keys: {sorted(unknown)}")
    criteria = sec.get("criteria")
    if criteria is not None and not set(criteria) <= set(V.CHECKS):
        raise ConfigError(f"criteria must be drawn from {sorted(V.CHECKS)}")
    fault = sec.get("fault")
    if fault not in (None, "sign_flip"):
        raise ConfigError("fault must be sign_flip or absent")
    options = {int(k): v for k, v in (sec.get("options") or {}).items()}
    try:
        checks = V.run_suite(cfg.seed, criteria, fault, options, progress)
    except TypeError as exc:
        raise ConfigError(f"bad verify option: {exc}") from None
    return {"checks": [c.to_dict() for c in checks], "passed": all(c.passed for c in checks)}


COMMANDS = {"curvature": cmd_curvature, "tfunc": cmd_tfunc, "verify": cmd_verify}


# -- output ------------------------------------------------------------------------------------

def _plain(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    return str(o)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(command: str, report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True, default=_plain) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(CSV_VERSION + "\n")
    if command == "verify":
        w.writerow(VERIFY_HEADER)
        for c in report["checks"]:
            w.writerow([_cell(c[k]) for k in VERIFY_HEADER])
    else:
        w.writerow(CSV_HEADER)
        for r in report["rows"]:
            w.writerow([_cell(r[k]) for k in CSV_HEADER])
    return buf.getvalue()


_FLOAT_COLS = {"value", "delta", "tolerance", "observed", "t0", "t1", "t2"}
_INT_COLS = {"i", "j", "criterion"}


def parse_csv(text: str) -> list:
    """Rows of a CSV report as dicts typed like the JSON rows."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    out = []
    for r in csv.DictReader(lines):
        row = {}
        for k, v in r.items():
            if k in _FLOAT_COLS or k in _INT_COLS:
                row[k] = None if v == "" else (int(v) if k in _INT_COLS else float(v))
            elif k == "passed":
                row[k] = v == "true"
            else:
                row[k] = v
        out.append(row)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="ncspectral", description="Heat coefficients and curvature of functional metrics.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="YAML or JSON file")
    ap.add_argument("--format", choices=("json", "csv"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="write the report here instead of stdout")
    ap.add_argument("--version", action="version", version=__version__)
    args = ap.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.command)
    except (OSError, yaml.YAMLError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.format:
        cfg.format = args.format
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
            return 2
        cfg.seed = args.seed
    progress = None
    if args.command == "verify":
        progress = lambda c: print(c.line(), file=sys.stderr)
    try:
        report = COMMANDS[args.command](cfg, progress) if progress else COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = {"schema": SCHEMA, "command": args.command, "seed": cfg.seed, **report}
    text = render(args.command, report, cfg.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.command == "verify" and not report["passed"]:
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
