"""Experiment configuration: INI-style files with one level of sections.

Example::

    [experiment]
    kind = stability_sweep
    seed = 42
    output = trefoil

    [domain]
    type = fourier
    mode = 3

    [mesh]
    h = 0.02

    [sweep]
    eps = 0.02, 0.05, 0.1

Diagnostics carry the file name and line of the offending entry.
"""
from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("stability_sweep", "cone_duality", "mean_value", "poincare_constants",
         "inequality_audit", "identity_checks")
DOMAIN_TYPES = ("fourier", "ellipse", "sector", "rectangle", "polygon")
OUTPUT_ENV = "OVERDET_LAB_OUTPUT"
DEFAULT_OUTPUT_ROOT = "overdet_runs"

# (section, key) pairs each kind cannot run without, in reporting order
REQUIRED = {
    "stability_sweep": [("domain", "type"), ("mesh", "h"), ("sweep", "eps")],
    "cone_duality": [("domain", "type"), ("mesh", "h")],
    "mean_value": [("domain", "type"), ("mesh", "h")],
    "poincare_constants": [("domain", "type"), ("mesh", "h"), ("sweep", "alpha")],
    "inequality_audit": [("domain", "type"), ("mesh", "h"), ("sweep", "trials")],
    "identity_checks": [("domain", "type"), ("mesh", "h")],
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the file, line and field."""


@dataclass
class ExperimentConfig:
    kind: str
    domain: dict
    h: float
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    output: str = ""
    source: str = "<config>"
    lines: dict = field(default_factory=dict, repr=False)

    def where(self, section: str, key: str) -> str:
        line = self.lines.get((section, key))
        return f"{self.source}:{line}" if line else self.source

    def get_list(self, key: str, default=None) -> list[float]:
        if key not in self.sweep:
            if default is None:
                raise ConfigError(f"{self.source}: missing required field [sweep] {key}")
            return list(default)
        return _floats(self.sweep[key], self.where("sweep", key), f"[sweep] {key}")

    def get_float(self, section: str, key: str, default=None) -> float:
        table = {"domain": self.domain, "sweep": self.sweep}[section]
        if key not in table:
            if default is None:
                raise ConfigError(f"{self.source}: missing required field [{section}] {key}")
            return float(default)
        vals = _floats(table[key], self.where(section, key), f"[{section}] {key}")
        if len(vals) != 1:
            raise ConfigError(f"{self.where(section, key)}: [{section}] {key}: expected a single number")
        return vals[0]

    def output_dir(self, override: str | None = None) -> Path:
        if override:
            return Path(override)
        root = Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT_ROOT))
        return root / (self.output or self.kind)


def _floats(text: str, where: str, name: str) -> list[float]:
    out = []
    for tok in re.split(r"[,\s]+", text.strip()):
        if not tok:
            continue
        try:
            val = float(eval_number(tok))
        except ValueError:
            raise ConfigError(f"{where}: {name}: {tok!r} is not a number") from None
        if not math.isfinite(val):
            raise ConfigError(f"{where}: {name}: {tok!r} is not finite")
        out.append(val)
    if not out:
        raise ConfigError(f"{where}: {name}: empty value")
    return out


_NUMBER = re.compile(r"^(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\*?)?(?P<pi>pi)?(?:/(?P<den>\d+(?:\.\d*)?))?$")


def eval_number(token: str) -> float:
    """Parse a number, allowing the forms ``pi``, ``pi/2``, ``2pi/3`` and ``2*pi/3``."""
    m = _NUMBER.match(token.strip())
    if not m or (m.group("num") is None and m.group("pi") is None):
        raise ValueError(token)
    val = float(m.group("num")) if m.group("num") is not None else 1.0
    if m.group("pi"):
        val *= math.pi
    elif "*" in token:
        raise ValueError(token)
    if m.group("den"):
        val /= float(m.group("den"))
    return val


def _line_map(text: str) -> dict:
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
            lines[(section, None)] = no
        elif section is not None:
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            lines[(section, key)] = no
    return lines


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    lines = _line_map(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        msg = getattr(exc, "message", str(exc)).splitlines()[0]
        raise ConfigError(f"{source}:{line}: {msg}" if line else f"{source}: {msg}") from None

    def where(section, key=None):
        line = lines.get((section, key))
        return f"{source}:{line}" if line else source

    if not parser.has_option("experiment", "kind"):
        raise ConfigError(f"{source}: missing required field [experiment] kind")
    kind = parser.get("experiment", "kind").strip()
    if kind not in KINDS:
        raise ConfigError(f"{where('experiment', 'kind')}: [experiment] kind: unknown kind {kind!r} "
                          f"(expected one of {', '.join(KINDS)})")
    for section, key in REQUIRED[kind]:
        if not parser.has_option(section, key):
            raise ConfigError(f"{source}: missing required field [{section}] {key}")

    known = {"experiment", "domain", "mesh", "sweep"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"{where(section)}: unknown section [{section}]")

    dtype = parser.get("domain", "type").strip()
    if dtype not in DOMAIN_TYPES:
        raise ConfigError(f"{where('domain', 'type')}: [domain] type: unknown domain type {dtype!r}")
    h_vals = _floats(parser.get("mesh", "h"), where("mesh", "h"), "[mesh] h")
    if len(h_vals) != 1 or h_vals[0] <= 0:
        raise ConfigError(f"{where('mesh', 'h')}: [mesh] h: must be a single positive number")
    seed = 0
    if parser.has_option("experiment", "seed"):
        try:
            seed = int(parser.get("experiment", "seed"))
        except ValueError:
            raise ConfigError(f"{where('experiment', 'seed')}: [experiment] seed: not an integer") from None
    for key in parser.options("mesh"):
        if key != "h":
            raise ConfigError(f"{where('mesh', key)}: [mesh] {key}: unknown key")
    return ExperimentConfig(
        kind=kind,
        domain=dict(parser.items("domain")),
        h=h_vals[0],
        sweep=dict(parser.items("sweep")) if parser.has_section("sweep") else {},
        seed=seed,
        output=parser.get("experiment", "output", fallback="").strip(),
        source=source,
        lines=lines,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, source=str(path))


def parse_domain_spec(spec: str) -> tuple[dict, float]:
    """``kind:key=value,key=value`` (lists separated by ';') into a domain table and h."""
    kind, _, rest = spec.partition(":")
    table = {"type": kind.strip()}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"domain spec: {item!r} is not key=value")
        table[key.strip().lower()] = value.replace(";", ",").strip()
    if table["type"] not in DOMAIN_TYPES:
        raise ConfigError(f"domain spec: unknown domain type {table['type']!r}")
    if "h" not in table:
        raise ConfigError("domain spec: missing required field h")
    h = _floats(table.pop("h"), "domain spec", "h")
    if len(h) != 1 or h[0] <= 0:
        raise ConfigError("domain spec: h must be a single positive number")
    return table, h[0]
