"""Command-line runner: ``cproj {families,verify,scal,flow,jplanar,fit}``.

Exit codes: 0 when every check passes, 1 on a residual failure, 2 on a
configuration or domain error.  Errors are reported on stderr as one JSON
line so batch consumers can parse them.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import io
import json
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from . import dynamics as dy
from .families import FAMILY_IDS, DomainError, FamilySpec, catalog_entry
from .verifier import (ResidualReport, TOL_EXACT, fit_lie_constants, sample_points, verify_family)

FLOAT_PARAMS = ("beta", "c1", "c2", "d1", "d2", "c", "C", "c0")
INT_PARAMS = ("eps",)
LIST_PARAMS = ("rho", "sigma", "f", "gfun")
FORMATS = ("csv", "json", "text")


class ConfigError(ValueError):
    pass


# -- configuration ------------------------------------------------------------------

def _number(text: str):
    text = text.strip()
    for kind in (int, float, complex):
        try:
            return kind(text)
        except ValueError:
            pass
    raise ConfigError(f"not a number: {text!r}")


def _format_number(v) -> str:
    if isinstance(v, complex):
        return repr(v).strip("()")
    return repr(v)


def parse_param(name: str, text: str):
    if name in FLOAT_PARAMS:
        v = _number(text)
        if isinstance(v, complex):
            raise ConfigError(f"{name} must be real")
        return float(v)
    if name in INT_PARAMS:
        v = _number(text)
        if not isinstance(v, int):
            raise ConfigError(f"{name} must be an integer")
        return v
    if name in LIST_PARAMS:
        items = [s for s in text.split(",") if s.strip()]
        vals = tuple(_number(s) for s in items)
        return tuple(float(v) if isinstance(v, int) else v for v in vals)
    raise ConfigError(f"unknown parameter {name!r}")


def format_param(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(_format_number(x) for x in v)
    return _format_number(v)


def parse_box(text: str) -> tuple:
    try:
        ivs = [tuple(float(x) for x in part.split(":")) for part in text.split(",")]
    except ValueError:
        raise ConfigError(f"box must look like lo:hi,lo:hi,lo:hi,lo:hi, got {text!r}") from None
    if len(ivs) != 4 or any(len(iv) != 2 for iv in ivs):
        raise ConfigError("box needs four lo:hi intervals")
    return tuple(ivs)


def format_box(box) -> str:
    return ",".join(f"{lo!r}:{hi!r}" for lo, hi in box)


def parse_seed(text) -> int:
    try:
        s = int(text)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= s < 2**64:
        raise ConfigError("seed must fit in 64 unsigned bits")
    return s


@dataclass
class RunConfig:
    """Everything a run depends on; round-trips through the INI text form."""

    family: Optional[str] = None
    params: dict = field(default_factory=dict)
    box: Optional[tuple] = None
    n: int = 100
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    out: Optional[str] = None
    format: str = "text"

    def spec(self) -> FamilySpec:
        if self.family is None:
            raise ConfigError("no family given (use --family or [family] id)")
        kw = dict(self.params)
        if self.box is not None:
            kw["box"] = self.box
        return FamilySpec(self.family, **kw)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, self.tolerances.get("tol", default)))

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["family"] = {"id": self.family or ""}
        cp["params"] = {k: format_param(v) for k, v in self.params.items()}
        cp["sampling"] = {"n": str(self.n), "seed": str(self.seed)}
        if self.box is not None:
            cp["sampling"]["box"] = format_box(self.box)
        cp["tolerances"] = {k: repr(float(v)) for k, v in self.tolerances.items()}
        cp["output"] = {"format": self.format}
        if self.out:
            cp["output"]["path"] = self.out
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as err:
            raise ConfigError(f"unreadable configuration: {err}") from None
        unknown = set(cp.sections()) - {"family", "params", "sampling", "tolerances", "output"}
        if unknown:
            raise ConfigError(f"unknown configuration sections: {', '.join(sorted(unknown))}")
        cfg = cls()
        if cp.has_section("family"):
            cfg.family = cp["family"].get("id") or None
        if cp.has_section("params"):
            cfg.params = {k: parse_param(k, v) for k, v in cp["params"].items()}
        if cp.has_section("sampling"):
            s = cp["sampling"]
            if "n" in s:
                cfg.n = int(s["n"])
            if "seed" in s:
                cfg.seed = parse_seed(s["seed"])
            if "box" in s:
                cfg.box = parse_box(s["box"])
        if cp.has_section("tolerances"):
            cfg.tolerances = {k: float(v) for k, v in cp["tolerances"].items()}
        if cp.has_section("output"):
            cfg.out = cp["output"].get("path") or None
            cfg.format = cp["output"].get("format", "text")
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["params"] = {k: _plain(v) for k, v in self.params.items()}
        d["box"] = None if self.box is None else [list(iv) for iv in self.box]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        params = {}
        for k, v in d.get("params", {}).items():
            if k in LIST_PARAMS:
                params[k] = tuple(complex(*x) if isinstance(x, list) else x for x in v)
            else:
                params[k] = v
        box = d.get("box")
        cfg = cls(family=d.get("family"), params=params,
                  box=None if box is None else tuple(tuple(iv) for iv in box),
                  n=int(d.get("n", 100)), seed=parse_seed(d.get("seed", 0)),
                  tolerances=dict(d.get("tolerances", {})), out=d.get("out"),
                  format=d.get("format", "text"))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.family is not None and self.family not in FAMILY_IDS:
            raise ConfigError(f"unknown family {self.family!r}")


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


# -- argument parsing -----------------------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", metavar="PATH", help="INI file with [family], [params], [sampling], "
                   "[tolerances] and [output] sections; flags override it")
    p.add_argument("--seed", help="64-bit sampling seed")
    p.add_argument("--tol", type=float, help="tolerance override")
    p.add_argument("--out", metavar="PATH", help="also write the output to PATH")
    p.add_argument("--format", choices=FORMATS, help="output format")
    return p


def _family_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--family", choices=FAMILY_IDS, help="family id")
    for name in FLOAT_PARAMS + INT_PARAMS + LIST_PARAMS:
        p.add_argument(f"--{name}", dest=f"param_{name}", metavar="X",
                       help="comma-separated coefficients" if name in LIST_PARAMS else None)
    p.add_argument("--box", help="sampling box lo:hi,lo:hi,lo:hi,lo:hi")
    p.add_argument("--n", type=int, help="number of sample points")
    return p


def build_parser() -> argparse.ArgumentParser:
    common, fam = _common_parser(), _family_parser()
    parser = argparse.ArgumentParser(prog="cproj", parents=[common],
                                     description="Verification runs for c-projective structures "
                                                 "on four-dimensional Kähler charts.")
    parser.add_argument("--version", action="version", version=f"cproj {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("families", parents=[common], help="list the family catalog")
    p.add_argument("--id", choices=FAMILY_IDS, help="show one family in detail")
    p.add_argument("--json", action="store_true", help="machine-readable listing")

    p = sub.add_parser("verify", parents=[common, fam], help="run the residual suites for a family")
    p.add_argument("--perturb", type=float, default=0.0,
                   help="add a random perturbation of this size to A (negative control)")

    p = sub.add_parser("scal", parents=[common, fam], help="scalar curvature of the companion metric along the flow")
    p.add_argument("--tau", default="-2:2:81", help="grid a:b:n")
    p.add_argument("--p0", help="start point (default: origin of the chart)")
    p.add_argument("--compare", action="store_true", help="add the closed-form column (L2, D2)")
    p.add_argument("--sign", type=int, choices=(-1, 1), default=dy.SCAL_SIGN,
                   help="curvature sign convention: -1 contracts Ricci on the last index "
                        "(the closed-form convention), +1 makes round spheres positive")

    p = sub.add_parser("flow", parents=[common, fam], help="integrate the c-projective vector field")
    p.add_argument("--p0", help="start point (default: centre of the sampling box)")
    p.add_argument("--tau", type=float, default=1.0, help="flow time")
    p.add_argument("--steps", type=int, default=256, help="RK4 steps")
    p.add_argument("--domain", choices=("field", "metric"), default="field",
                   help="stop where the vector field (default) or the metric stops being regular")

    p = sub.add_parser("jplanar", parents=[common, fam], help="flow invariance of J-planar curves")
    p.add_argument("--p0", help="start point (default: centre of the sampling box)")
    p.add_argument("--v0", default="0.1,0.1,0.1,-0.1", help="initial velocity")
    p.add_argument("--t-max", type=float, default=0.5, dest="t_max")
    p.add_argument("--steps", type=int, default=128)
    p.add_argument("--taus", default="0.3,0.7", help="flow times")
    p.add_argument("--kappa", type=float, default=0.0, help="drive nabla x' x' = kappa J x' (0: geodesic)")
    p.add_argument("--control", action="store_true", help="also push a non-J-planar control curve")

    p = sub.add_parser("fit", parents=[common, fam], help="fit the Lie constants of the vector field")
    return parser


def _vector(text: str, name: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise ConfigError(f"{name} must be four comma-separated numbers") from None
    if v.shape != (4,):
        raise ConfigError(f"{name} must have four components")
    return v


def _grid(text: str) -> np.ndarray:
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise ConfigError(f"tau grid must look like a:b:n, got {text!r}") from None
    if n < 2:
        raise ConfigError("tau grid needs at least two points")
    return np.linspace(a, b, n)


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    args = vars(ns)
    if "config" in args:
        try:
            with open(args["config"], encoding="utf-8") as fh:
                cfg = RunConfig.from_ini(fh.read())
        except OSError as err:
            raise ConfigError(f"cannot read configuration: {err}") from None
    else:
        cfg = RunConfig()
    if "family" in args:
        cfg.family = args["family"]
    for name in FLOAT_PARAMS + INT_PARAMS + LIST_PARAMS:
        if f"param_{name}" in args:
            cfg.params[name] = parse_param(name, args[f"param_{name}"])
    if "box" in args:
        cfg.box = parse_box(args["box"])
    if "n" in args:
        cfg.n = args["n"]
    if "seed" in args:
        cfg.seed = parse_seed(args["seed"])
    if "tol" in args:
        cfg.tolerances["tol"] = args["tol"]
    if "out" in args:
        cfg.out = args["out"]
    if "format" in args:
        cfg.format = args["format"]
    cfg.validate()
    return cfg


# -- output ------------------------------------------------------------------------------

def _emit(text: str, cfg: RunConfig, stdout) -> None:
    stdout.write(text)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _reports_text(reps: list[ResidualReport], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([r for rep in reps for r in rep.records()], indent=2) + "\n"
    if fmt == "csv":
        cols = ("suite", "family", "check", "n_samples", "seed", "max_residual", "tolerance", "pass")
        rows = [[rec[c] for c in cols] for rep in reps for rec in rep.records()]
        buf = io.StringIO()
        import csv
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
        return buf.getvalue()
    return "\n".join(rep.to_text() for rep in reps) + "\n"


def _default_point(spec: FamilySpec) -> np.ndarray:
    return np.array([(lo + hi) / 2 for lo, hi in spec.sampling_box])


# -- commands ----------------------------------------------------------------------------

def cmd_families(ns, cfg: RunConfig, stdout) -> int:
    ids = [ns.id] if getattr(ns, "id", None) else list(FAMILY_IDS)
    entries = []
    for fid in ids:
        e = catalog_entry(fid)
        e["config"] = RunConfig(family=fid, params={k: FamilySpec(fid).params()[k] for k in e["params"]}).to_dict()
        entries.append(e)
    if getattr(ns, "json", False) or cfg.format == "json":
        _emit(json.dumps(entries if len(ids) > 1 else entries[0], indent=2) + "\n", cfg, stdout)
        return 0
    lines = []
    for e in entries:
        defaults = ", ".join(f"{k}={format_param(tuple(v) if isinstance(v, list) else v)}"
                             for k, v in e["defaults"].items())
        if len(ids) == 1:
            lines += [f"{e['id']}: {e['case']}",
                      f"  chart: {', '.join(e['chart'])}",
                      f"  functions: {e['functions']}",
                      f"  vector field: {e['v']}",
                      f"  parameters: {defaults}",
                      f"  domain: {e['domain']}",
                      f"  Lie constants (gamma,alpha;delta,beta): {e['lie_constants'] or 'none'}"]
        else:
            lines.append(f"{e['id']:<7s} {e['case']:<32s} {defaults}")
            lines.append(f"{'':<7s} domain: {e['domain']}")
    _emit("\n".join(lines) + "\n", cfg, stdout)
    return 0


def cmd_verify(ns, cfg: RunConfig, stdout) -> int:
    spec = cfg.spec()
    reps = verify_family(spec, cfg.n, cfg.seed, cfg.tol("tol", TOL_EXACT), perturb=ns.perturb)
    _emit(_reports_text(reps, cfg.format), cfg, stdout)
    return 0 if all(r.passed for r in reps) else 1


def cmd_scal(ns, cfg: RunConfig, stdout) -> int:
    if cfg.family == "L2" and "eps" not in cfg.params:
        # the closed form is the split-signature one
        cfg.params["eps"] = -1
    spec = cfg.spec()
    taus = _grid(ns.tau)
    p0 = _vector(ns.p0, "p0") if ns.p0 else np.zeros(4)
    num = dy.scal_along_flow(spec, p0, taus, sign=ns.sign)
    header = dy.CSV_HEADER + ("scal",)
    rows = num.rows()
    diff = None
    if ns.compare:
        closed = dy.scal_closed_form(spec, taus, p0, sign=ns.sign)
        header += ("scal_closed",)
        rows = [r + [v] for r, v in zip(rows, closed.values)]
        scale = np.maximum(np.abs(closed.values), 1.0)
        diff = float(np.max(np.abs(num.values - closed.values) / scale))
    tol = cfg.tol("scal", 1e-6)
    if cfg.format == "json":
        doc = dict(family=spec.id, columns=list(header), rows=rows)
        if diff is not None:
            doc.update(max_relative_difference=diff, tolerance=tol, **{"pass": diff < tol})
        text = json.dumps(doc, indent=2) + "\n"
    elif cfg.format == "text":
        text = f"scal family={spec.id} points={len(taus)} sign={ns.sign}\n"
        text += f"  numeric range [{num.values.min():.12g}, {num.values.max():.12g}]\n"
        if diff is not None:
            text += f"  max relative difference to closed form {diff:.3e} (tolerance {tol:.1e})\n"
    else:
        text = dy.write_csv(header, rows)
    _emit(text, cfg, stdout)
    return 0 if diff is None or diff < tol else 1


def cmd_flow(ns, cfg: RunConfig, stdout, stderr) -> int:
    spec = cfg.spec()
    p0 = _vector(ns.p0, "p0") if ns.p0 else _default_point(spec)
    curve = dy.integrate_flow(spec, p0, ns.tau, ns.steps, domain=ns.domain)
    text = dy.to_json(curve) + "\n" if cfg.format == "json" else curve.to_csv()
    _emit(text, cfg, stdout)
    if curve.exited:
        _error(stderr, "domain", curve.reason)
        return 2
    return 0


def cmd_jplanar(ns, cfg: RunConfig, stdout) -> int:
    spec = cfg.spec()
    p0 = _vector(ns.p0, "p0") if ns.p0 else _default_point(spec)
    v0 = _vector(ns.v0, "v0")
    try:
        taus = [float(t) for t in ns.taus.split(",")]
    except ValueError:
        raise ConfigError("taus must be comma-separated numbers") from None
    curve = dy.jplanar_curve(spec, p0, v0, ns.t_max, ns.steps, kappa=ns.kappa, seed=cfg.seed)
    if curve.exited:
        raise DomainError(f"curve integration stopped: {curve.reason}")
    reps = [dy.flow_invariance_check(spec, curve, taus, tol=cfg.tol("jplanar", 1e-4))]
    if ns.control:
        ctl = dy.jplanar_curve(spec, p0, v0, ns.t_max, ns.steps, kappa=0.0, normal=0.1, seed=cfg.seed)
        if ctl.exited:
            raise DomainError(f"control integration stopped: {ctl.reason}")
        reps.append(dy.flow_invariance_check(spec, ctl, taus, control=True))
    _emit(_reports_text(reps, cfg.format), cfg, stdout)
    return 0 if all(r.passed for r in reps) else 1


def cmd_fit(ns, cfg: RunConfig, stdout) -> int:
    spec = cfg.spec()
    pts = sample_points(spec, cfg.n, cfg.seed, stream="fit")
    fit = fit_lie_constants(spec, pts)
    tol = cfg.tol("fit", 1e-7)
    k = fit.constants
    if cfg.format == "json":
        text = json.dumps(dict(family=spec.id, constants=str(k), alpha=k.alpha, beta=k.beta, gamma=k.gamma,
                               delta=k.delta, consistency=fit.consistency, n_samples=fit.n_samples,
                               tolerance=tol), indent=2) + "\n"
    elif cfg.format == "csv":
        text = dy.write_csv(("gamma", "alpha", "delta", "beta", "consistency"),
                            [[k.gamma, k.alpha, k.delta, k.beta, fit.consistency]])
    else:
        text = f"{k}\nconsistency={fit.consistency:.3e} n_samples={fit.n_samples} tolerance={tol:.1e}\n"
    _emit(text, cfg, stdout)
    return 0 if fit.consistency < tol else 1


def _error(stderr, kind: str, reason: str) -> None:
    stderr.write(json.dumps({"status": "error", "kind": kind, "reason": reason}, ensure_ascii=False) + "\n")


VALUE_OPTIONS = {"--tau", "--p0", "--v0", "--box", "--taus", "--t-max", "--kappa", "--perturb", "--tol",
                 "--seed"} | {f"--{n}" for n in FLOAT_PARAMS + INT_PARAMS + LIST_PARAMS}


def _glue_values(argv: list[str]) -> list[str]:
    """Turn ``--tau -2:2:81`` into ``--tau=-2:2:81`` so dash-led values parse."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in VALUE_OPTIONS and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and not argv[i + 1].startswith("--"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parser.parse_args(_glue_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(ns)
        if ns.command == "families":
            return cmd_families(ns, cfg, stdout)
        if ns.command == "verify":
            return cmd_verify(ns, cfg, stdout)
        if ns.command == "scal":
            return cmd_scal(ns, cfg, stdout)
        if ns.command == "flow":
            return cmd_flow(ns, cfg, stdout, stderr)
        if ns.command == "jplanar":
            return cmd_jplanar(ns, cfg, stdout)
        return cmd_fit(ns, cfg, stdout)
    except ConfigError as err:
        _error(stderr, "config", str(err))
    except DomainError as err:
        _error(stderr, "domain", str(err))
    except (ValueError, np.linalg.LinAlgError) as err:
        _error(stderr, "domain", str(err))
    return 2


if __name__ == "__main__":
    sys.exit(main())
