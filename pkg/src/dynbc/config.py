"""INI run configuration: parsing, validation and problem construction.

Sections are ``[problem]``, ``[mesh]``, ``[integrator]``, ``[study]`` and
``[output]``; every value is a flat scalar or comma-separated list. Errors
carry the line number of the offending key.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .assembly import Lumping
from .errors import ConfigurationError, DynbcError
from .integrators import METHODS, STARTUPS, IntegratorConfig
from .mesh import DomainKind, build_mesh, read_mesh
from .problems import cosine_mode, builtin, saddle_mode, zero_solution
from .report import config_hash

SOURCES = ("mms", "none", "interpolant", "ritz")
STUDY_KINDS = ("spatial", "temporal", "stability")
EXACT_CHOICES = {"default": None, "none": None, "zero": zero_solution,
                 "cosine": cosine_mode, "saddle": saddle_mode}

# names visible to u0 expressions
_EXPR_NAMES = {name: getattr(np, name) for name in
               ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh",
                "cosh", "arctan2", "minimum", "maximum", "where", "pi")}

_SCHEMA = {
    "problem": {"name", "lumping", "source", "mu", "kappa", "beta", "u0", "exact"},
    "mesh": {"kind", "n", "levels", "file"},
    "integrator": {"method", "tau", "t", "startup", "newton_tol", "newton_max_iter",
                   "phi_tol", "phi_method", "linearly_implicit", "averaged_source",
                   "save_times"},
    "study": {"kind", "methods", "taus", "tau_rule", "tau_factor", "reference", "tau_ref",
              "ref_method", "eoc_rows", "n_random", "seed", "levels", "random_taus",
              "check_force_mnorm"},
    "output": {"dir", "vtk"},
}
_THRESHOLD = re.compile(r"^(min|max)_eoc\.(\w+)$")


@dataclass
class ProblemConfig:
    name: str
    lumping: Lumping = Lumping.CONSISTENT
    source: Optional[str] = None  # None keeps the builtin's own source
    mu: Optional[float] = None
    kappa: Optional[float] = None
    beta: Optional[float] = None
    u0: Optional[str] = None
    exact: str = "default"


@dataclass
class MeshConfig:
    kind: Optional[str] = None
    n: int = 8
    levels: tuple = ()
    file: Optional[str] = None


@dataclass
class IntegratorSettings:
    """Integrator keys; ``tau``/``T`` may be left to the study."""

    method: str = "bdf2"
    tau: Optional[float] = None
    T: Optional[float] = None
    options: dict = field(default_factory=dict)

    def build(self, tau=None, T=None, **overrides) -> IntegratorConfig:
        return IntegratorConfig(self.method, self.tau if tau is None else tau,
                                self.T if T is None else T, **{**self.options, **overrides})


@dataclass
class StudyConfig:
    kind: Optional[str] = None
    methods: tuple = ()
    taus: Optional[tuple] = None  # None when the key is absent
    tau_rule: str = "h2"
    tau_factor: float = 0.25
    reference: str = "exact"
    tau_ref: Optional[float] = None
    ref_method: Optional[str] = None
    thresholds: dict = field(default_factory=dict)
    eoc_rows: int = 2
    n_random: int = 100
    seed: int = 0
    levels: tuple = (2, 4, 8)
    random_taus: tuple = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
    check_force_mnorm: bool = True


@dataclass
class OutputConfig:
    dir: str = "out"
    vtk: bool = True


@dataclass
class RunConfig:
    problem: ProblemConfig
    mesh: MeshConfig
    integrator: IntegratorSettings
    study: StudyConfig
    output: OutputConfig
    text: str = ""
    path: Optional[str] = None

    @property
    def hash(self) -> str:
        return config_hash(self.text)

    def out_dir(self) -> Path:
        d = Path(self.output.dir)
        if not d.is_absolute() and self.path is not None:
            d = Path(self.path).parent / d
        d.mkdir(parents=True, exist_ok=True)
        return d

    def build_problem(self):
        """The builtin problem with the configured overrides applied."""
        return build_problem(self.problem)

    def build_mesh(self, n=None):
        if self.mesh.file:
            path = Path(self.mesh.file)
            if not path.is_absolute() and self.path is not None:
                path = Path(self.path).parent / path
            return read_mesh(path)
        kind = self.mesh.kind or self.build_problem().domain_kind
        return build_mesh(kind, self.mesh.n if n is None else n)

    @property
    def discrete_source(self) -> str:
        """Source mode of the semi-discrete system."""
        return self.problem.source if self.problem.source in ("interpolant", "ritz") \
            else "continuous"


def _line_map(text: str) -> dict:
    """(section, key) -> 1-based line number."""
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            out[(section, None)] = i
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = i
    return out


class _Reader:
    def __init__(self, parser, lines):
        self.parser = parser
        self.lines = lines

    def fail(self, section, key, msg):
        line = self.lines.get((section, key))
        where = f"line {line}: " if line else ""
        label = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigurationError(f"{where}{label}: {msg}")

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.has(section, key):
            return default
        return self.parser.get(section, key).strip()

    def conv(self, section, key, func, default=None, what="value"):
        v = self.raw(section, key)
        if v is None or v == "":
            return default
        try:
            return func(v)
        except (ValueError, TypeError, KeyError, ZeroDivisionError, DynbcError) as exc:
            self.fail(section, key, f"invalid {what} {v!r} ({exc})")

    def get_float(self, section, key, default=None):
        return self.conv(section, key, float, default, "number")

    def get_int(self, section, key, default=None):
        return self.conv(section, key, int, default, "integer")

    def get_bool(self, section, key, default=None):
        def parse(v):
            v = v.lower()
            if v in ("1", "yes", "true", "on"):
                return True
            if v in ("0", "no", "false", "off"):
                return False
            raise ValueError("expected true/false")
        return self.conv(section, key, parse, default, "flag")

    def get_list(self, section, key, func=str, default=()):
        v = self.raw(section, key)
        if v is None:
            return default
        items = [s.strip() for s in v.replace("\n", ",").split(",") if s.strip()]
        try:
            return tuple(func(s) for s in items)
        except (ValueError, ZeroDivisionError) as exc:
            self.fail(section, key, f"invalid list {v!r} ({exc})")


def _rational(s: str) -> float:
    """Float that also accepts ``a/b``."""
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def compile_expression(expr: str):
    """Compile a nodal expression in ``x`` and ``y`` into f(points) -> values.

    Only the numpy functions in a fixed whitelist, ``pi`` and the coordinates
    are visible; attribute access and builtins are not.
    """
    code = compile(expr, "<u0>", "eval")
    for name in code.co_names:
        if name not in _EXPR_NAMES and name not in ("x", "y"):
            raise ValueError(f"name {name!r} not allowed")

    def f(points):
        env = dict(_EXPR_NAMES, x=points[:, 0], y=points[:, 1])
        return np.broadcast_to(eval(code, {"__builtins__": {}}, env), (len(points),))
    return f


def parse_config(text: str, path=None) -> RunConfig:
    """Parse and validate configuration text."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None)
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigurationError(f"line {line}: {exc.message}" if line else str(exc)) from None
    lines = _line_map(text)
    rd = _Reader(parser, lines)
    for section in parser.sections():
        if section not in _SCHEMA:
            rd.fail(section, None, f"unknown section; expected one of {', '.join(_SCHEMA)}")
        for key in parser.options(section):
            if key not in _SCHEMA[section] and not (section == "study" and _THRESHOLD.match(key)):
                rd.fail(section, key, "unknown key")
    if not parser.has_section("problem") or not rd.raw("problem", "name"):
        raise ConfigurationError("[problem] name is required")

    pc = ProblemConfig(
        name=rd.raw("problem", "name"),
        lumping=rd.conv("problem", "lumping", Lumping.parse, Lumping.CONSISTENT, "lumping"),
        source=(rd.raw("problem", "source") or "").lower() or None,
        mu=rd.get_float("problem", "mu"),
        kappa=rd.get_float("problem", "kappa"),
        beta=rd.get_float("problem", "beta"),
        u0=rd.raw("problem", "u0"),
        exact=rd.raw("problem", "exact", "default").lower(),
    )
    if pc.source is not None and pc.source not in SOURCES:
        rd.fail("problem", "source", f"must be one of {', '.join(SOURCES)}")
    if pc.exact not in EXACT_CHOICES:
        rd.fail("problem", "exact", f"must be one of {', '.join(EXACT_CHOICES)}")
    if pc.u0 is not None:
        try:
            compile_expression(pc.u0)
        except (SyntaxError, ValueError) as exc:
            rd.fail("problem", "u0", f"bad expression ({exc})")
    try:
        build_problem(pc)
    except ConfigurationError as exc:
        key = "name" if "unknown problem" in str(exc) else "source"
        rd.fail("problem", key, str(exc))

    mc = MeshConfig(
        kind=rd.conv("mesh", "kind", lambda v: DomainKind(v.lower()).value, None, "mesh kind"),
        n=rd.get_int("mesh", "n", 8),
        levels=rd.get_list("mesh", "levels", int),
        file=rd.raw("mesh", "file"),
    )
    if mc.n < 1:
        rd.fail("mesh", "n", "must be positive")

    opts = {}
    if rd.has("integrator", "startup"):
        opts["startup"] = rd.raw("integrator", "startup")
        if opts["startup"] not in STARTUPS:
            rd.fail("integrator", "startup", f"must be one of {', '.join(STARTUPS)}")
    for key, getter in (("newton_tol", rd.get_float), ("newton_max_iter", rd.get_int),
                        ("phi_tol", rd.get_float), ("linearly_implicit", rd.get_bool),
                        ("averaged_source", rd.get_bool)):
        v = getter("integrator", key)
        if v is not None:
            opts[key] = v
    if rd.has("integrator", "phi_method"):
        opts["phi_method"] = rd.raw("integrator", "phi_method")
    save = rd.get_list("integrator", "save_times", _rational)
    if save:
        opts["save_times"] = save
    ic = IntegratorSettings(
        method=rd.raw("integrator", "method", "bdf2").lower(),
        tau=rd.conv("integrator", "tau", _rational, None, "number"),
        T=rd.conv("integrator", "t", _rational, None, "number"),
        options=opts,
    )
    if ic.method not in METHODS:
        rd.fail("integrator", "method", f"must be one of {', '.join(METHODS)}")
    if ic.T is None:
        ic.T = builtin(pc.name).T

    thresholds = {}
    if parser.has_section("study"):
        for key in parser.options("study"):
            m = _THRESHOLD.match(key)
            if m:
                lo, hi = thresholds.get(m.group(2), (None, None))
                val = rd.get_float("study", key)
                thresholds[m.group(2)] = (val, hi) if m.group(1) == "min" else (lo, val)
    sc = StudyConfig(
        kind=rd.raw("study", "kind"),
        methods=rd.get_list("study", "methods", lambda s: s.lower()),
        taus=rd.get_list("study", "taus", _rational, None),
        tau_rule=rd.raw("study", "tau_rule", "h2"),
        tau_factor=rd.conv("study", "tau_factor", _rational, 0.25, "number"),
        reference=rd.raw("study", "reference", "exact"),
        tau_ref=rd.conv("study", "tau_ref", _rational, None, "number"),
        ref_method=rd.raw("study", "ref_method"),
        thresholds=thresholds,
        eoc_rows=rd.get_int("study", "eoc_rows", 2),
        n_random=rd.get_int("study", "n_random", 100),
        seed=rd.get_int("study", "seed", 0),
        levels=rd.get_list("study", "levels", int, (2, 4, 8)),
        random_taus=rd.get_list("study", "random_taus", _rational,
                                (1e-3, 1e-2, 1e-1, 1.0, 10.0)),
        check_force_mnorm=rd.get_bool("study", "check_force_mnorm", True),
    )
    if sc.kind is not None and sc.kind not in STUDY_KINDS:
        rd.fail("study", "kind", f"must be one of {', '.join(STUDY_KINDS)}")
    if sc.tau_rule not in ("h2", "h", "fixed"):
        rd.fail("study", "tau_rule", "must be h2, h or fixed")
    if sc.reference not in ("exact", "tau_ref"):
        rd.fail("study", "reference", "must be exact or tau_ref")
    for m in sc.methods:
        if m not in METHODS:
            rd.fail("study", "methods", f"unknown method {m!r}")
    if sc.taus is not None and sc.kind in ("temporal", "stability") and not sc.taus:
        rd.fail("study", "taus", "empty tau grid")
    if any(t <= 0 for t in sc.taus or ()):
        rd.fail("study", "taus", "step sizes must be positive")

    oc = OutputConfig(dir=rd.raw("output", "dir", "out"),
                      vtk=rd.get_bool("output", "vtk", True))
    return RunConfig(pc, mc, ic, sc, oc, text=text, path=None if path is None else str(path))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path)


def build_problem(pc: ProblemConfig):
    """Builtin problem with coefficient, exact-solution and u0 overrides."""
    prob = builtin(pc.name)
    if any(v is not None for v in (pc.mu, pc.kappa, pc.beta)):
        prob = prob.with_coefficients(pc.mu, pc.kappa, pc.beta)
    if pc.exact not in ("default", "none"):
        prob = prob.with_exact(EXACT_CHOICES[pc.exact]())
    elif pc.exact == "none":
        prob = replace(prob, exact=None, source="none")
    if pc.u0 is not None:
        prob = replace(prob, u0=compile_expression(pc.u0), exact=None, source="none")
    if pc.source == "none":
        prob = replace(prob, source="none")
    elif pc.source is not None and prob.exact is None:
        raise ConfigurationError(f"source {pc.source!r} needs an exact solution")
    elif pc.source == "mms":
        prob = replace(prob, source="mms")
    return prob
