"""Strict reader for experiment files.

The format is INI with a fixed set of sections and keys; anything unknown is
an error, reported with its line number::

    [experiment]
    name = reflected
    seed = 0

    [problem]
    coefficients = obstacle-drift
    terminal = call
    phi = nonnegative
    delay = none              ; or dirac:0.5, lebesgue:0.5

    [numerics]
    T = 0.5
    N = 6
    beta = 1.0
    gamma = 1.0
    picard_tol = 1e-8         ; optional
    picard_max = 50

    [schedule]
    eps = 0.25, 0.125, 0.0625

    [sampling]
    mode = tree               ; or mc
    paths = 100000
    degree = 2

    [output]
    directory = out

    [checks]
    skip = cauchy             ; checks recorded but not gating the exit code

Only ``[problem] coefficients`` and ``[problem] terminal`` are required;
``[schedule] eps`` may be left empty for an unpenalised run.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import replace
from pathlib import Path

from ..errors import InvalidArgumentError
from .catalog import DelaySpec, ExperimentSpec

__all__ = ["ConfigError", "parse_spec", "load_spec", "dump_spec", "with_overrides"]


class ConfigError(InvalidArgumentError):
    """Invalid experiment file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source="<config>"):
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {message}")
        self.line = line


# section -> key -> (field name, converter)
def _floats(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return tuple(float(p) for p in parts)


def _names(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


_SCHEMA = {
    "experiment": {"name": ("name", str), "seed": ("seed", int)},
    "problem": {
        "coefficients": ("coefficients", str),
        "terminal": ("terminal", str),
        "phi": ("phi", str),
        "delay": ("delay", DelaySpec.parse),
    },
    "numerics": {
        "t": ("T", float), "n": ("N", int), "beta": ("beta", float),
        "gamma": ("gamma", float), "picard_tol": ("picard_tol", float),
        "picard_max": ("picard_max", int),
    },
    "schedule": {"eps": ("schedule", _floats)},
    "sampling": {"mode": ("mode", str), "paths": ("paths", int), "degree": ("degree", int)},
    "output": {"directory": ("output", str)},
    "checks": {"skip": ("skip", _names)},
}
_REQUIRED = (("problem", "coefficients"), ("problem", "terminal"))

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:;#\[\s][^=:]*?)\s*[=:]")


def _line_index(text):
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    index = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip().lower()
            index.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            index.setdefault((section, m.group(1).strip().lower()), no)
    return index


def parse_spec(text: str, source: str = "<config>") -> ExperimentSpec:
    """Parse and validate an experiment file's contents."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                   interpolation=None, default_section="\x00")
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header", exc.lineno, source) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1], exc.lineno, source) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line, source) from None

    where = _line_index(text)
    values = {}
    for section in cp.sections():
        name = section.strip().lower()
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]",
                              where.get((name, None)), source)
        for key, raw in cp.items(section):
            line = where.get((name, key))
            if key not in _SCHEMA[name]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line, source)
            field_name, conv = _SCHEMA[name][key]
            raw = raw.strip()
            if raw == "" and field_name in ("schedule", "skip"):
                values[field_name] = ()
                continue
            if raw == "":
                raise ConfigError(f"empty value for {key!r}", line, source)
            try:
                values[field_name] = conv(raw)
            except (ValueError, InvalidArgumentError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", line, source) from None
            values.setdefault("_lines", {})[field_name] = line

    lines = values.pop("_lines", {})
    for section, key in _REQUIRED:
        field_name = _SCHEMA[section][key][0]
        if field_name not in values:
            raise ConfigError(f"missing required key {key!r} in [{section}]",
                              where.get((section, None)), source)
    values.setdefault("name", Path(source).stem if source != "<config>" else "experiment")
    spec = ExperimentSpec(**values)
    try:
        return spec.validate()
    except InvalidArgumentError as exc:
        line = lines.get(getattr(exc, "field", None))
        raise ConfigError(str(exc), line, source) from None


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", None, str(path)) from None
    return parse_spec(text, str(path))


def dump_spec(spec: ExperimentSpec) -> str:
    """Render ``spec`` in the file format (round-trips through :func:`parse_spec`)."""
    tol = "" if spec.picard_tol is None else f"picard_tol = {spec.picard_tol!r}\n"
    return (
        f"[experiment]\nname = {spec.name}\nseed = {spec.seed}\n\n"
        f"[problem]\ncoefficients = {spec.coefficients}\nterminal = {spec.terminal}\n"
        f"phi = {spec.phi}\ndelay = {spec.delay}\n\n"
        f"[numerics]\nT = {spec.T!r}\nN = {spec.N}\nbeta = {spec.beta!r}\n"
        f"gamma = {spec.gamma!r}\n{tol}picard_max = {spec.picard_max}\n\n"
        f"[schedule]\neps = {', '.join(repr(float(e)) for e in spec.schedule)}\n\n"
        f"[sampling]\nmode = {spec.mode}\npaths = {spec.paths}\ndegree = {spec.degree}\n\n"
        f"[output]\ndirectory = {spec.output}\n\n"
        f"[checks]\nskip = {', '.join(spec.skip)}\n"
    )


def with_overrides(spec: ExperimentSpec, **kw) -> ExperimentSpec:
    """Copy of ``spec`` with the non-``None`` keyword values applied, validated."""
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(spec, **kw).validate()
