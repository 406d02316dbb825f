"""YAML run configuration (schema ``hypertrack-config/1``).

A config has a ``design`` section (the :class:`DesignConfig` fields), a
``simulation`` section and optional ``robust`` and ``probe`` sections::

    schema: hypertrack-config/1
    name: tracking-3pi2
    design:
      plant: "1/(s^2 + 2*s + 1)"
      F_r: {weight: {omega: 3*pi/2, zeta: 0.1}}
      M: 8
      m: 4
    simulation:
      reference: [{omega: 3*pi/2}]
      duration: 60

Numbers may be arithmetic strings over ``pi``.  Transfer functions are
either a rational expression in ``s``, a ``{num, den}`` mapping with
ascending coefficients, ``{weight: {omega, zeta}}`` or
``{weight_product: {omegas, zeta}}``.
"""

from __future__ import annotations

import ast
import copy
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ValidationError
from .fsfh import DesignConfig, make_weight, make_weight_product
from .lti import RationalTransferFunction
from .simulation import Sinusoid, SignalSpec

__all__ = [
    "SCHEMA",
    "RunConfig",
    "load_config",
    "parse_config",
    "parse_number",
    "parse_tf",
    "dump_yaml",
    "bundled_configs",
]

SCHEMA = "hypertrack-config/1"

_DESIGN_DEFAULTS = {
    "F_d": None,
    "h": 1.0,
    "M": 8,
    "N": None,
    "m": 4,
    "gamma_range": [1e-2, 1e3],
    "eps_u": 1e-4,
    "eps_n": 1e-4,
    "bisect_tol": 1e-3,
}
_SIM_DEFAULTS = {
    "reference": [],
    "disturbance": [],
    "duration": 60.0,
    "n_sim": None,
    "prefilter": False,
    "window_fraction": 1.0 / 3.0,
}
_ROBUST_DEFAULTS = {"delta": None}
_PROBE_DEFAULTS = {"omegas": [], "duration": 120.0, "settle_tol": 0.05}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_CONSTANTS = {"pi": math.pi, "e": math.e}


class _Poly:
    """Ratio of ascending-coefficient polynomials, just enough for parsing."""

    def __init__(self, num, den=(1.0,)):
        self.num = np.atleast_1d(np.asarray(num, dtype=float))
        self.den = np.atleast_1d(np.asarray(den, dtype=float))

    @staticmethod
    def lift(x):
        return x if isinstance(x, _Poly) else _Poly([float(x)])

    def __add__(self, o):
        o = _Poly.lift(o)
        return _Poly(np.polynomial.polynomial.polyadd(
            np.polynomial.polynomial.polymul(self.num, o.den),
            np.polynomial.polynomial.polymul(o.num, self.den)),
            np.polynomial.polynomial.polymul(self.den, o.den))

    __radd__ = __add__

    def __neg__(self):
        return _Poly(-self.num, self.den)

    def __sub__(self, o):
        return self + (-_Poly.lift(o))

    def __rsub__(self, o):
        return _Poly.lift(o) - self

    def __mul__(self, o):
        o = _Poly.lift(o)
        return _Poly(np.polynomial.polynomial.polymul(self.num, o.num),
                     np.polynomial.polynomial.polymul(self.den, o.den))

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = _Poly.lift(o)
        return self * _Poly(o.den, o.num)

    def __rtruediv__(self, o):
        return _Poly.lift(o) / self

    def __pow__(self, k):
        if isinstance(k, _Poly) or int(k) != k or k < 0:
            raise ValidationError("only nonnegative integer powers are allowed")
        out = _Poly([1.0])
        for _ in range(int(k)):
            out = out * self
        return out


def _eval(node, allow_s):
    if isinstance(node, ast.Expression):
        return _eval(node.body, allow_s)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in _CONSTANTS:
            return _CONSTANTS[node.id]
        if allow_s and node.id == "s":
            return _Poly([0.0, 1.0])
        raise ValidationError(f"unknown name {node.id!r} in expression")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand, allow_s)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        left, right = _eval(node.left, allow_s), _eval(node.right, allow_s)
        if isinstance(node.op, ast.Pow) and isinstance(left, _Poly):
            return left ** right
        return _BINOPS[type(node.op)](left, right)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id == "sqrt" and len(node.args) == 1 and not allow_s:
        return math.sqrt(_eval(node.args[0], allow_s))
    raise ValidationError(f"unsupported expression element {ast.dump(node)[:40]}")


def _parse_expr(text, allow_s, field_name):
    try:
        tree = ast.parse(str(text).replace("^", "**"), mode="eval")
        return _eval(tree, allow_s)
    except ValidationError as exc:
        raise ValidationError(str(exc), field=field_name) from None
    except (SyntaxError, ZeroDivisionError, OverflowError, TypeError) as exc:
        raise ValidationError(f"cannot evaluate {text!r}: {exc}", field=field_name) from None


def parse_number(value, field_name=None) -> float:
    """Float from a number or an arithmetic string such as ``"3*pi/2"``."""
    if isinstance(value, bool):
        raise ValidationError("expected a number", field=field_name)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        out = _parse_expr(value, False, field_name)
        if isinstance(out, _Poly):
            raise ValidationError("expected a number", field=field_name)
        return float(out)
    raise ValidationError(f"expected a number, got {type(value).__name__}", field=field_name)


def parse_tf(spec, field_name=None) -> RationalTransferFunction:
    """Transfer function from any of the accepted config forms."""
    if isinstance(spec, RationalTransferFunction):
        return spec
    if isinstance(spec, (int, float, str)) and not isinstance(spec, bool):
        val = _parse_expr(spec, True, field_name) if isinstance(spec, str) else float(spec)
        val = _Poly.lift(val)
        lead = val.den[np.nonzero(val.den)[0][-1]] if np.any(val.den) else 0.0
        if lead == 0:
            raise ValidationError("zero denominator", field=field_name)
        return RationalTransferFunction(val.num / lead, val.den / lead)
    if isinstance(spec, dict):
        if "weight" in spec:
            w = spec["weight"]
            return make_weight(parse_number(w.get("omega"), f"{field_name}.omega"),
                               parse_number(w.get("zeta", 0.01), f"{field_name}.zeta"))
        if "weight_product" in spec:
            w = spec["weight_product"]
            omegas = [parse_number(x, f"{field_name}.omegas") for x in w.get("omegas", [])]
            return make_weight_product(omegas, parse_number(w.get("zeta", 0.01),
                                                            f"{field_name}.zeta"))
        if "num" in spec and "den" in spec:
            num = [parse_number(x, f"{field_name}.num") for x in spec["num"]]
            den = [parse_number(x, f"{field_name}.den") for x in spec["den"]]
            return RationalTransferFunction(num, den)
    raise ValidationError(f"unrecognized transfer-function spec {spec!r}", field=field_name)


def _resolve_signal(items, name):
    out = []
    for i, item in enumerate(items or []):
        if not isinstance(item, dict):
            raise ValidationError("sinusoid entries must be mappings", field=f"{name}[{i}]")
        out.append({
            "amplitude": parse_number(item.get("amplitude", 1.0), f"{name}[{i}].amplitude"),
            "omega": parse_number(item.get("omega"), f"{name}[{i}].omega"),
            "phase": parse_number(item.get("phase", 0.0), f"{name}[{i}].phase"),
        })
    return out


def _merge(defaults, given, section):
    given = dict(given or {})
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ValidationError(f"unknown key(s) {', '.join(unknown)}", field=f"{section}.{unknown[0]}")
    out = copy.deepcopy(defaults)
    out.update(given)
    return out


def _canonical_tf(spec):
    """Resolved form of a transfer-function spec: strings stay, numbers become floats."""
    if spec is None or isinstance(spec, str):
        return spec
    if isinstance(spec, dict):
        if "weight" in spec:
            w = spec["weight"]
            return {"weight": {"omega": parse_number(w.get("omega")),
                               "zeta": parse_number(w.get("zeta", 0.01))}}
        if "weight_product" in spec:
            w = spec["weight_product"]
            return {"weight_product": {"omegas": [parse_number(x) for x in w.get("omegas", [])],
                                       "zeta": parse_number(w.get("zeta", 0.01))}}
        if "num" in spec and "den" in spec:
            return {"num": [parse_number(x) for x in spec["num"]],
                    "den": [parse_number(x) for x in spec["den"]]}
    return float(spec) if isinstance(spec, (int, float)) else spec


@dataclass
class RunConfig:
    """Validated config plus its fully resolved dictionary form."""

    name: str
    design: DesignConfig
    bisect_tol: float
    reference: Optional[SignalSpec]
    disturbance: Optional[SignalSpec]
    duration: float
    n_sim: Optional[int]
    prefilter: bool
    window_fraction: float
    delta: Optional[RationalTransferFunction]
    probe_omegas: list
    probe_duration: float
    probe_settle_tol: float
    resolved: dict = field(default_factory=dict)
    source: Optional[str] = None

    @property
    def omegas(self):
        """Every signal frequency the loop is meant to follow or reject."""
        out = []
        for sig in (self.reference, self.disturbance):
            if sig is not None:
                out.extend(sig.omegas)
        return out


def parse_config(raw: Any, source: Optional[str] = None) -> RunConfig:
    """Validate a loaded YAML mapping; raises :class:`ValidationError` naming the field."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping", field="<root>")
    schema = raw.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ValidationError(f"unsupported schema {schema!r}, expected {SCHEMA}", field="schema")
    unknown = sorted(set(raw) - {"schema", "name", "design", "simulation", "robust", "probe"})
    if unknown:
        raise ValidationError(f"unknown key(s) {', '.join(unknown)}", field=unknown[0])
    d_in = raw.get("design")
    if not isinstance(d_in, dict):
        raise ValidationError("missing design section", field="design")
    for key in ("plant", "F_r"):
        if key not in d_in:
            raise ValidationError("required", field=f"design.{key}")
    d = _merge(dict(_DESIGN_DEFAULTS, plant=None, F_r=None), d_in, "design")
    s = _merge(_SIM_DEFAULTS, raw.get("simulation"), "simulation")
    r = _merge(_ROBUST_DEFAULTS, raw.get("robust"), "robust")
    p = _merge(_PROBE_DEFAULTS, raw.get("probe"), "probe")

    def integer(v, name):
        x = parse_number(v, name)
        if x != int(x):
            raise ValidationError("must be an integer", field=name)
        return int(x)

    gr = d["gamma_range"]
    if not isinstance(gr, (list, tuple)) or len(gr) != 2:
        raise ValidationError("must be [gamma_lo, gamma_hi]", field="design.gamma_range")
    resolved_design = {
        "plant": _canonical_tf(d["plant"]),
        "F_r": _canonical_tf(d["F_r"]),
        "F_d": _canonical_tf(d["F_d"]),
        "h": parse_number(d["h"], "design.h"),
        "M": integer(d["M"], "design.M"),
        "N": None if d["N"] is None else integer(d["N"], "design.N"),
        "m": integer(d["m"], "design.m"),
        "gamma_range": [parse_number(g, "design.gamma_range") for g in gr],
        "eps_u": parse_number(d["eps_u"], "design.eps_u"),
        "eps_n": parse_number(d["eps_n"], "design.eps_n"),
        "bisect_tol": parse_number(d["bisect_tol"], "design.bisect_tol"),
    }
    if resolved_design["N"] is None:
        resolved_design["N"] = resolved_design["M"]
    design = DesignConfig(
        plant=parse_tf(d["plant"], "design.plant"),
        F_r=parse_tf(d["F_r"], "design.F_r"),
        F_d=None if d["F_d"] is None else parse_tf(d["F_d"], "design.F_d"),
        h=resolved_design["h"], M=resolved_design["M"], N=resolved_design["N"],
        m=resolved_design["m"], gamma_range=tuple(resolved_design["gamma_range"]),
        eps_u=resolved_design["eps_u"], eps_n=resolved_design["eps_n"],
    )
    ref = _resolve_signal(s["reference"], "simulation.reference")
    dist = _resolve_signal(s["disturbance"], "simulation.disturbance")
    n_sim = None if s["n_sim"] is None else integer(s["n_sim"], "simulation.n_sim")
    resolved_sim = {
        "reference": ref,
        "disturbance": dist,
        "duration": parse_number(s["duration"], "simulation.duration"),
        "n_sim": 4 * design.M if n_sim is None else n_sim,
        "prefilter": bool(s["prefilter"]),
        "window_fraction": parse_number(s["window_fraction"], "simulation.window_fraction"),
    }
    if resolved_sim["duration"] < 0:
        raise ValidationError("must be nonnegative", field="simulation.duration")
    if resolved_sim["n_sim"] % design.M:
        raise ValidationError(f"must be a multiple of M={design.M}", field="simulation.n_sim")

    def signal(items, entry):
        if not items:
            return None
        return SignalSpec(tuple(Sinusoid(i["amplitude"], i["omega"], i["phase"]) for i in items),
                          entry)

    resolved_robust = {"delta": _canonical_tf(r["delta"])}
    resolved_probe = {
        "omegas": [parse_number(w, "probe.omegas") for w in p["omegas"]],
        "duration": parse_number(p["duration"], "probe.duration"),
        "settle_tol": parse_number(p["settle_tol"], "probe.settle_tol"),
    }
    name = str(raw.get("name", Path(source).stem if source else "run"))
    resolved = {
        "schema": SCHEMA,
        "name": name,
        "design": resolved_design,
        "simulation": resolved_sim,
        "robust": resolved_robust,
        "probe": resolved_probe,
    }
    return RunConfig(
        name=name,
        design=design,
        bisect_tol=resolved_design["bisect_tol"],
        reference=signal(ref, "reference"),
        disturbance=signal(dist, "input_disturbance"),
        duration=resolved_sim["duration"],
        n_sim=resolved_sim["n_sim"],
        prefilter=resolved_sim["prefilter"],
        window_fraction=resolved_sim["window_fraction"],
        delta=None if r["delta"] is None else parse_tf(r["delta"], "robust.delta"),
        probe_omegas=resolved_probe["omegas"],
        probe_duration=resolved_probe["duration"],
        probe_settle_tol=resolved_probe["settle_tol"],
        resolved=resolved,
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}", field="--config") from None
    except yaml.YAMLError as exc:
        raise ValidationError(f"malformed YAML: {exc}", field="--config") from None
    return parse_config(raw, str(path))


def dump_yaml(data) -> str:
    """Deterministic YAML text (insertion order, full float precision)."""
    return yaml.safe_dump(_plain(data), sort_keys=False, default_flow_style=None, width=100)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    return x


def bundled_configs():
    """Paths of the example configs shipped with the package, sorted by name."""
    return sorted((Path(__file__).parent / "examples").glob("*.yaml"))
