"""Experiment configuration files.

Configs are INI files with the sections ``[run]``, ``[model]``,
``[operator]``, ``[analysis]`` and ``[output]``.  Every key is checked
against :data:`SCHEMA`; violations raise :class:`ConfigError` carrying the
line number and ``section.key`` of the offending entry.
"""

import configparser
import hashlib
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import ConfigError, InputError

COMMANDS = ("spectrum", "pencil", "lap", "prop", "mourre", "calculus", "definitize",
            "model-dump")


@dataclass(frozen=True)
class Field:
    parse: Callable
    default: Any = None
    doc: str = ""


def _float(s):
    return float(s)


def _pos_float(s):
    x = float(s)
    if not x > 0:
        raise ValueError("must be positive")
    return x


def _nonneg_float(s):
    x = float(s)
    if x < 0:
        raise ValueError("must be non-negative")
    return x


def _int_at_least(lo):
    def parse(s):
        x = int(s)
        if x < lo:
            raise ValueError("must be an integer >= %d" % lo)
        return x
    return parse


def _choice(*opts):
    def parse(s):
        s = s.strip()
        if s not in opts:
            raise ValueError("must be one of %s" % ", ".join(opts))
        return s
    return parse


def _floats(count=None):
    def parse(s):
        vals = [float(t) for t in s.replace(",", " ").split()]
        if count is not None and len(vals) != count:
            raise ValueError("expected %d numbers, got %d" % (count, len(vals)))
        if not vals:
            raise ValueError("expected at least one number")
        return tuple(vals)
    return parse


def _interval(s):
    a, b = _floats(2)(s)
    if not a < b:
        raise ValueError("interval needs a < b")
    return (a, b)


def _window(s):
    a, b, ramp = _floats(3)(s)
    if not (a < b and ramp > 0 and b - a >= 2 * ramp):
        raise ValueError("window 'a b ramp' needs a < b and 0 < ramp <= (b-a)/2")
    return (a, b, ramp)


def _ladder(s):
    vals = _floats()(s)
    if any(v <= 0 for v in vals) or any(b >= a for a, b in zip(vals, vals[1:])):
        raise ValueError("eps ladder must be strictly decreasing positive numbers")
    return vals


def _delta(s):
    x = float(s)
    if not 0 <= x <= 1:
        raise ValueError("weight exponent must lie in [0, 1]")
    return x


def _matrix(s):
    """``"a b; c d"`` (rows separated by ``;``); entries may be complex."""
    rows = [r.split() for r in s.split(";") if r.strip()]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("ragged or empty matrix")
    M = np.array([[complex(t.replace("i", "j")) for t in r] for r in rows])
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    return M


def _functions(s):
    """``name p1 p2; ...`` with names gaussian, erf, pole."""
    out = []
    for item in s.split(";"):
        parts = item.split()
        if not parts:
            continue
        name, args = parts[0], [float(x) for x in parts[1:]]
        need = {"gaussian": 2, "erf": 3, "pole": 2}.get(name)
        if need is None:
            raise ValueError("unknown function %r (gaussian, erf, pole)" % name)
        if len(args) != need:
            raise ValueError("%s takes %d parameters" % (name, need))
        out.append((name, tuple(args)))
    if not out:
        raise ValueError("no functions given")
    return tuple(out)


def _names(s):
    vals = tuple(s.replace(",", " ").split())
    for v in vals:
        if v not in ("H", "K", "L"):
            raise ValueError("operators must be among H, K, L")
    return vals


SCHEMA = {
    "run": {
        "command": Field(_choice(*COMMANDS), None, "subcommand this config is meant for"),
        "seed": Field(int, 0, "seed for randomized property checks"),
    },
    "model": {
        "kind": Field(_choice("flat", "radial", "pair", "krein"), "flat",
                      "flat/radial grid models, explicit pair (h, k) or Krein operator"),
        "n": Field(_int_at_least(16), 64, "number of grid nodes"),
        "box_radius": Field(_pos_float, None, "box radius R (default from the potential decay)"),
        "d": Field(_int_at_least(3), 3, "space dimension of radial models"),
        "potential": Field(_choice("gaussian", "power", "step", "none"), "none",
                           "electric potential kind"),
        "v0": Field(_float, 0.0, "potential amplitude"),
        "mu0": Field(_pos_float, 1.0, "long-range decay exponent"),
        "width": Field(_pos_float, 1.0, "gaussian width"),
        "r0": Field(_pos_float, 1.0, "step radius / long-range onset"),
        "pot_delta": Field(_pos_float, 0.9, "massless long-range margin"),
        "m": Field(_nonneg_float, 1.0, "mass"),
        "m_inf": Field(_nonneg_float, None, "asymptotic mass (defaults to m)"),
        "h": Field(_matrix, None, "explicit h for kind = pair"),
        "k": Field(_matrix, None, "explicit k for kind = pair"),
        "matrix": Field(_matrix, None, "operator matrix for kind = krein"),
        "gram": Field(_matrix, None, "Gram form for kind = krein"),
    },
    "operator": {
        "which": Field(_choice("H", "K", "L"), "H", "generator to analyse"),
        "split_radius": Field(_pos_float, None, "radius of the k = k1 + k2 split for L"),
    },
    "analysis": {
        "interval": Field(_interval, (1.2, 1.5), "spectral window I"),
        "delta": Field(_delta, 0.6, "weight exponent"),
        "eps": Field(_ladder, (0.2, 0.1, 0.05), "Im z ladder"),
        "n_re": Field(_int_at_least(2), 31, "Re z samples across I"),
        "chi": Field(_window, None, "window 'a b ramp' (chi(H) for prop, chi(b^2) for mourre)"),
        "f_window": Field(_window, None, "Mourre window f"),
        "c1": Field(_pos_float, None, "Mourre constant (default: symbol prediction)"),
        "eta_radius": Field(_pos_float, None, "dilation cutoff radius"),
        "horizon": Field(_pos_float, None, "time horizon T"),
        "packet": Field(_floats(3), (0.0, 1.35, 1.0), "wave packet 'center momentum width'"),
        "functions": Field(_functions, (("gaussian", (1.5, 0.4)),), "test functions"),
        "order": Field(_int_at_least(1), 3, "almost-analytic extension order"),
        "tol": Field(_pos_float, 1e-7, "quadrature tolerance"),
        "max_level": Field(_int_at_least(0), 4, "quadrature refinement levels"),
        "resolvent_samples": Field(_int_at_least(0), 20, "random z for resolvent checks"),
        "operators": Field(_names, ("H", "K"), "operators listed by spectrum"),
    },
    "output": {
        "directory": Field(str, "out", "output directory"),
        "formats": Field(_choice("csv"), "csv", "table format"),
    },
}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    run: dict
    model: dict
    operator: dict
    analysis: dict
    output: dict
    text: str = ""
    path: Optional[str] = None
    lines: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.run["seed"]

    @property
    def command(self):
        return self.run["command"]

    @property
    def config_hash(self):
        return hashlib.sha256(self.text.encode()).hexdigest()

    def line_of(self, section, key):
        return self.lines.get((section, key))

    def error(self, section, key, msg):
        where = self.line_of(section, key)
        return ConfigError("%s.%s: %s" % (section, key, msg), where, "%s.%s" % (section, key))


def _key_lines(text):
    out, sec = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        ln = raw.strip()
        if not ln or ln[0] in "#;":
            continue
        if ln.startswith("[") and ln.endswith("]"):
            sec = ln[1:-1].strip()
            out[(sec, None)] = i
            continue
        for sep in ("=", ":"):
            if sep in ln:
                out[(sec, ln.split(sep, 1)[0].strip().lower())] = i
                break
    return out


def parse_config(text, path=None):
    lines = _key_lines(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.Error as exc:
        raise ConfigError("malformed config: %s" % exc, getattr(exc, "lineno", None)) from None
    values = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError("unknown section [%s]" % sec, lines.get((sec, None)), sec)
    for sec, fields in SCHEMA.items():
        got = cp[sec] if cp.has_section(sec) else {}
        for key in got:
            if key not in fields:
                raise ConfigError("%s.%s: unknown key" % (sec, key), lines.get((sec, key)),
                                  "%s.%s" % (sec, key))
        vals = {}
        for key, fd in fields.items():
            if key in got and got[key].strip() != "":
                try:
                    vals[key] = fd.parse(got[key])
                except (ValueError, TypeError) as exc:
                    raise ConfigError("%s.%s: %s" % (sec, key, exc), lines.get((sec, key)),
                                      "%s.%s" % (sec, key)) from None
            else:
                vals[key] = fd.default
        values[sec] = vals
    cfg = ExperimentConfig(values["run"], values["model"], values["operator"],
                           values["analysis"], values["output"], text, path, lines)
    _check_model(cfg)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from None
    return parse_config(text, path)


def _check_model(cfg):
    m = cfg.model
    if m["kind"] == "pair":
        for key in ("h", "k"):
            if m[key] is None:
                raise cfg.error("model", "kind", "kind = pair needs model.h and model.k")
        if m["h"].shape != m["k"].shape:
            raise cfg.error("model", "k", "h and k must have the same shape")
    if m["kind"] == "krein":
        if m["matrix"] is None or m["gram"] is None:
            raise cfg.error("model", "kind", "kind = krein needs model.matrix and model.gram")
        if m["matrix"].shape != m["gram"].shape:
            raise cfg.error("model", "gram", "matrix and gram must have the same shape")
    if cfg.operator["which"] == "L" and m["kind"] not in ("flat", "radial"):
        raise cfg.error("operator", "which", "L needs a grid model (kind = flat or radial)")


def schema_doc():
    """Plain-text listing of the key schema."""
    out = []
    for sec, fields in SCHEMA.items():
        out.append("[%s]" % sec)
        for key, fd in fields.items():
            out.append("  %-18s default %-12r %s" % (key, fd.default, fd.doc))
    return "\n".join(out)


# ---------------------------------------------------------------- builders

def potential_of(cfg):
    from .models import PotentialSpec
    m = cfg.model
    kind = m["potential"]
    try:
        return PotentialSpec(kind="gaussian" if kind == "none" else kind,
                             v0=0.0 if kind == "none" else m["v0"], mu0=m["mu0"],
                             width=m["width"], R0=m["r0"], delta=m["pot_delta"], m=m["m"],
                             m_inf=m["m_inf"])
    except InputError as exc:
        raise cfg.error("model", "potential", str(exc)) from None


def grid_of(cfg, refine=False):
    from .models import Grid1D, default_box_radius
    m = cfg.model
    R = m["box_radius"] if m["box_radius"] is not None else default_box_radius(potential_of(cfg))
    n = m["n"]
    if refine:
        n, R = 2 * n, 2 * R
    kind = "radial" if m["kind"] == "radial" else "flat"
    try:
        return Grid1D(n, R, kind)
    except InputError as exc:
        raise cfg.error("model", "n", str(exc)) from None


def pair_of(cfg, refine=False):
    """The :class:`KGPair` described by the model section."""
    from .models import build_flat_model, build_radial_model
    from .operators import KGPair
    m = cfg.model
    if m["kind"] == "pair":
        try:
            return KGPair(m["h"], m["k"], m_inf=m["m_inf"])
        except ValueError as exc:
            raise cfg.error("model", "h", str(exc)) from None
    if m["kind"] == "krein":
        raise cfg.error("model", "kind", "this command needs a Klein-Gordon pair, not kind = krein")
    grid = grid_of(cfg, refine)
    pot = potential_of(cfg)
    if m["kind"] == "flat":
        return build_flat_model(grid, pot)
    return build_radial_model(m["d"], grid, pot)
