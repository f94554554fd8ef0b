"""TOML configuration files.

Schema (all sections except ``[problem]``, ``[windows]`` and
``[electric.q1]`` are optional)::

    [problem]
    n = 1                    # dimension, 1 or 2
    s = 0.5                  # fractional power in (0, 1)
    r = 0.6                  # support radius of A and Omega
    box_halfwidth = 2.5      # R, the grid covers [-R, R]^n
    h = 0.125                # grid spacing
    omega = { kind = "box", lower = [-0.5], upper = [0.5] }
    # or  omega = { kind = "ball", center = [0.0], radius = 0.5 }
    seed = 0

    [kernel]
    mode = "closed_form"     # closed_form | heat_identity | heat_numeric
    order = 4                # element-pair quadrature order

    [magnetic]               # the field A; omitted means A = 0
    family = "smooth_bump"   # zero | constant_in_ball | smooth_bump
    amplitude = [1.5]
    center = [0.1]
    radius = 0.5

    [electric.q1]            # scalar fields; q2 defaults to q1
    family = "piecewise_cells"
    lower = [-0.5]
    upper = [0.5]
    divisions = 4
    values = [1.0, 1.0, 1.5, 1.0]

    [windows]
    W1 = { lower = [0.65], upper = [2.45] }
    W2 = { lower = [-2.45], upper = [-0.65] }

    [solver]
    identity_pairs = 20      # random (g1, g2) pairs for the identity check
    check_samples = 20       # random grid functions for norm checks

    [inverse]
    divisions = 4            # reconstruction cells per axis
    reg = "default"          # "default" (reg_scale * sigma_max^2) or a number
    reg_scale = 1e-8
    runge_tol = 1e-2
    budget = 0               # sources per window, 0 = all
    target = "one"           # Runge target for the runge command: one | cell:<k>
    source_window = "W1"
    sign = 1                 # +1 uses A, -1 uses -A
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .geometry import ConfigError, DomainShape, FieldSpec, ProblemConfig, WindowSpec
from .kernel import KERNEL_MODES, KernelSpec

KNOWN_SECTIONS = ("problem", "kernel", "magnetic", "electric", "windows", "solver", "inverse")


@dataclass(frozen=True)
class InverseSettings:
    divisions: int = 4
    reg: float | None = None
    reg_scale: float = 1e-8
    runge_tol: float = 1e-2
    budget: int | None = None
    target: str = "one"
    source_window: str = "W1"
    sign: int = 1


@dataclass(frozen=True)
class SolverSettings:
    identity_pairs: int = 20
    check_samples: int = 20


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig
    kernel: KernelSpec
    order: int = 4
    seed: int = 0
    solver: SolverSettings = field(default_factory=SolverSettings)
    inverse: InverseSettings = field(default_factory=InverseSettings)
    source: str = ""
    path: str = ""

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()


class ConfigFileError(ConfigError):
    """Configuration error with the file location of the offending key."""

    def __init__(self, field_name: str, message: str, line: int | None = None, path: str = ""):
        self.line = line
        self.path = path
        where = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        ValueError.__init__(self, f"{where}{field_name}: {message}")
        self.field = field_name


def _line_of(text: str, dotted: str) -> int | None:
    """Best-effort line number of ``section.key`` in the TOML source."""
    parts = dotted.split(".")
    key = parts[-1]
    section = ".".join(parts[:-1])
    lines = text.splitlines()
    start = 0
    if section:
        pat = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]")
        for k, ln in enumerate(lines):
            if pat.match(ln):
                start = k
                break
        else:
            head = re.compile(r"^\s*\[\s*" + re.escape(parts[0]) + r"\s*\]")
            start = next((k for k, ln in enumerate(lines) if head.match(ln)), None)
            if start is None:
                return None
            return start + 1
    kpat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for k in range(start, len(lines)):
        if k > start and lines[k].lstrip().startswith("[") and section:
            break
        if kpat.match(lines[k]):
            return k + 1
    return start + 1 if section else None


class _Reader:
    def __init__(self, data: dict, text: str, path: str):
        self.data = data
        self.text = text
        self.path = path

    def fail(self, dotted: str, message: str):
        raise ConfigFileError(dotted, message, _line_of(self.text, dotted), self.path)

    def section(self, name: str, required: bool = False) -> dict:
        node = self.data
        for part in name.split("."):
            if not isinstance(node, dict) or part not in node:
                if required:
                    self.fail(name, "missing section")
                return {}
            node = node[part]
        if not isinstance(node, dict):
            self.fail(name, "expected a table")
        return node

    def get(self, sec: dict, name: str, key: str, kind, default=..., check=None):
        dotted = f"{name}.{key}"
        if key not in sec:
            if default is ...:
                self.fail(dotted, "missing required key")
            return default
        val = sec[key]
        try:
            if kind is float and isinstance(val, bool):
                raise TypeError
            if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
                raise TypeError
            out = kind(val)
        except (TypeError, ValueError):
            self.fail(dotted, f"expected {kind.__name__}, got {val!r}")
        if check is not None:
            msg = check(out)
            if msg:
                self.fail(dotted, msg)
        return out

    def vector(self, sec: dict, name: str, key: str, n: int, default=...):
        dotted = f"{name}.{key}"
        if key not in sec:
            if default is ...:
                self.fail(dotted, "missing required key")
            return default
        val = sec[key]
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            val = [val] * n
        if not isinstance(val, list) or len(val) != n:
            self.fail(dotted, f"expected a list of {n} numbers")
        try:
            return tuple(float(v) for v in val)
        except (TypeError, ValueError):
            self.fail(dotted, "expected numbers")

    def unknown(self, sec: dict, name: str, allowed):
        for key in sec:
            if key not in allowed:
                self.fail(f"{name}.{key}", "unknown key")


def _field(rd: _Reader, sec: dict, name: str, n: int, vector: bool) -> FieldSpec:
    rd.unknown(sec, name, ("family", "amplitude", "center", "radius", "lower", "upper", "divisions", "values"))
    family = rd.get(sec, name, "family", str, "zero")
    k = n if vector else 1
    if family == "zero":
        return FieldSpec.zero(vector, n)
    if family in ("constant_in_ball", "smooth_bump"):
        amp = rd.vector(sec, name, "amplitude", k)
        center = rd.vector(sec, name, "center", n, (0.0,) * n)
        radius = rd.get(sec, name, "radius", float, check=lambda v: None if v > 0 else "must be positive")
        return FieldSpec(family, amplitude=amp, center=center, radius=radius, vector=vector)
    if family == "piecewise_cells":
        if vector:
            rd.fail(f"{name}.family", "piecewise_cells is only available for q")
        lower = rd.vector(sec, name, "lower", n)
        upper = rd.vector(sec, name, "upper", n)
        div = rd.get(sec, name, "divisions", int, 1, check=lambda v: None if v >= 1 else "must be >= 1")
        vals = sec.get("values")
        if not isinstance(vals, list) or len(vals) != div ** n:
            rd.fail(f"{name}.values", f"expected a list of {div ** n} numbers")
        return FieldSpec(family, lower=lower, upper=upper, divisions=div, values=tuple(float(v) for v in vals))
    rd.fail(f"{name}.family", f"unknown family {family!r}")


def _omega(rd: _Reader, sec: dict, n: int) -> DomainShape:
    om = sec.get("omega")
    if not isinstance(om, dict):
        rd.fail("problem.omega", "expected an inline table with kind = box | ball")
    kind = om.get("kind", "box")
    if kind == "box":
        return DomainShape.box(rd.vector(om, "problem.omega", "lower", n), rd.vector(om, "problem.omega", "upper", n))
    if kind == "ball":
        center = rd.vector(om, "problem.omega", "center", n, (0.0,) * n)
        radius = rd.get(om, "problem.omega", "radius", float, check=lambda v: None if v > 0 else "must be positive")
        return DomainShape.ball(center, radius)
    rd.fail("problem.omega", f"unknown kind {kind!r}")


def parse_config(text: str, path: str = "") -> RunConfig:
    """Parse and validate configuration text."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigFileError("syntax", str(exc), int(m.group(1)) if m else None, path) from exc
    rd = _Reader(data, text, path)
    for key in data:
        if key not in KNOWN_SECTIONS:
            rd.fail(key, "unknown section")

    p = rd.section("problem", required=True)
    rd.unknown(p, "problem", ("n", "s", "r", "box_halfwidth", "h", "omega", "seed"))
    n = rd.get(p, "problem", "n", int, check=lambda v: None if v in (1, 2) else "dimension must be 1 or 2")
    s = rd.get(p, "problem", "s", float, check=lambda v: None if 0 < v < 1 else f"must lie in (0, 1), got {v}")
    r = rd.get(p, "problem", "r", float, check=lambda v: None if v > 0 else "must be positive")
    R = rd.get(p, "problem", "box_halfwidth", float)
    h = rd.get(p, "problem", "h", float, check=lambda v: None if v > 0 else "must be positive")
    seed = rd.get(p, "problem", "seed", int, 0)
    omega = _omega(rd, p, n)

    ksec = rd.section("kernel")
    rd.unknown(ksec, "kernel", ("mode", "order"))
    mode = rd.get(ksec, "kernel", "mode", str, "closed_form",
                  check=lambda v: None if v in KERNEL_MODES else f"unknown mode {v!r}")
    order = rd.get(ksec, "kernel", "order", int, 4, check=lambda v: None if v >= 2 else "quadrature order must be >= 2")

    a_spec = _field(rd, rd.section("magnetic"), "magnetic", n, vector=True)
    q1 = _field(rd, rd.section("electric.q1", required=True), "electric.q1", n, vector=False)
    q2_sec = rd.section("electric.q2")
    q2 = _field(rd, q2_sec, "electric.q2", n, vector=False) if q2_sec else q1

    wsec = rd.section("windows", required=True)
    windows = []
    for name, spec in wsec.items():
        if not isinstance(spec, dict):
            rd.fail(f"windows.{name}", "expected an inline table with lower and upper")
        windows.append(WindowSpec(name, rd.vector(spec, f"windows.{name}", "lower", n),
                                  rd.vector(spec, f"windows.{name}", "upper", n)))

    ssec = rd.section("solver")
    rd.unknown(ssec, "solver", ("identity_pairs", "check_samples"))
    solver = SolverSettings(
        rd.get(ssec, "solver", "identity_pairs", int, 20, check=lambda v: None if v >= 1 else "must be >= 1"),
        rd.get(ssec, "solver", "check_samples", int, 20, check=lambda v: None if v >= 1 else "must be >= 1"),
    )

    isec = rd.section("inverse")
    rd.unknown(isec, "inverse", ("divisions", "reg", "reg_scale", "runge_tol", "budget", "target",
                                 "source_window", "sign"))
    reg_raw = isec.get("reg", "default")
    if reg_raw == "default":
        reg = None
    else:
        reg = rd.get(isec, "inverse", "reg", float, check=lambda v: None if v >= 0 else "must be >= 0")
    budget = rd.get(isec, "inverse", "budget", int, 0, check=lambda v: None if v >= 0 else "must be >= 0")
    target = rd.get(isec, "inverse", "target", str, "one",
                    check=lambda v: None if v == "one" or re.fullmatch(r"cell:\d+", v) else "expected one or cell:<k>")
    inverse = InverseSettings(
        divisions=rd.get(isec, "inverse", "divisions", int, 4, check=lambda v: None if v >= 1 else "must be >= 1"),
        reg=reg,
        reg_scale=rd.get(isec, "inverse", "reg_scale", float, 1e-8, check=lambda v: None if v >= 0 else "must be >= 0"),
        runge_tol=rd.get(isec, "inverse", "runge_tol", float, 1e-2),
        budget=budget or None,
        target=target,
        source_window=rd.get(isec, "inverse", "source_window", str, "W1"),
        sign=rd.get(isec, "inverse", "sign", int, 1, check=lambda v: None if v in (1, -1) else "must be 1 or -1"),
    )

    cfg = ProblemConfig(n=n, s=s, r=r, R=R, h=h, omega=omega, windows=tuple(windows),
                        a_spec=a_spec, q_specs=(q1, q2))
    try:
        cfg.validate()
    except ConfigError as exc:
        rd.fail(exc.field, str(exc).split(": ", 1)[-1])
    if inverse.source_window not in {w.name for w in windows}:
        rd.fail("inverse.source_window", f"no window named {inverse.source_window!r}")
    return RunConfig(cfg, KernelSpec(mode, n, s), order, seed, solver, inverse, text, path)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError("path", f"cannot read configuration: {exc}", None, str(path)) from exc
    return parse_config(text, str(path))
