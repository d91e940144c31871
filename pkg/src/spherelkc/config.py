"""Structured-text run configuration: INI sections with flat ``key = value`` pairs.

Unknown sections or keys are errors. ``RunConfig.to_text`` writes every
key in a canonical order and format, so parsing it back gives an equal
config and the hash of that text is stable across platforms.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace

from .spectra import NeedletWindow, PowerSpectrum, SmoothingKernel, load_tabulated

__all__ = ["RunConfig", "ConfigError", "COMMANDS", "load_config", "parse_config"]

COMMANDS = ("spectra", "lkc-theory", "simulate", "mc-validate", "mc-sup", "cum4")
MANIFEST_SECTION = "manifest"


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _floats(text):
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in text.replace(";", ",").split(",") if t.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(conv):
    return lambda text: None if text.strip().lower() in ("", "none") else conv(text)


def _fmt_num(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt_num(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# (section, key) -> (attribute, parser)
_SCHEMA = {
    ("run", "command"): ("command", str),
    ("run", "seed"): ("seed", int),
    ("run", "replicates"): ("replicates", int),
    ("run", "levels"): ("levels", _floats),
    ("run", "grid"): ("grid", _ints),
    ("run", "geometry_grid"): ("geometry_grid", _opt(_ints)),
    ("run", "replicate"): ("replicate", int),
    ("run", "format"): ("format", str),
    ("run", "j_list"): ("j_list", _ints),
    ("spectrum", "model"): ("model", str),
    ("spectrum", "G"): ("G", float),
    ("spectrum", "alpha"): ("alpha", float),
    ("spectrum", "ellmax"): ("ellmax", _opt(int)),
    ("spectrum", "path"): ("path", _opt(str)),
    ("window", "B"): ("B", float),
    ("window", "j"): ("j", int),
    ("kernel", "L_K"): ("L_K", int),
    ("kernel", "kappa"): ("kappa", _opt(_floats)),
    ("kernel", "monopole"): ("monopole", _bool),
    ("field", "kind"): ("kind", str),
    ("field", "q"): ("q", int),
    ("field", "ell"): ("ell", _opt(int)),
}


@dataclass(frozen=True)
class RunConfig:
    command: str = "lkc-theory"
    seed: int = 0
    replicates: int = 200
    levels: tuple = (0.0, 0.5, 1.0, 2.0)
    grid: tuple = (96, 193)
    geometry_grid: tuple | None = None
    replicate: int = 0
    format: str = "binary"
    j_list: tuple = (3, 4, 5)
    model: str = "sachs-wolfe"
    G: float = 1.0
    alpha: float = 3.0
    ellmax: int | None = None
    path: str | None = None
    B: float = 2.0
    j: int = 4
    L_K: int = 8
    kappa: tuple | None = None
    monopole: bool = False
    kind: str = "subordinated"
    q: int = 2
    ell: int | None = None
    output: str = field(default=".", compare=False)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.model not in ("sachs-wolfe", "bardeen", "tabulated"):
            raise ConfigError(f"unknown spectrum model {self.model!r}")
        if self.model == "tabulated" and not self.path:
            raise ConfigError("tabulated spectrum needs spectrum.path")
        if self.kind not in ("subordinated", "eigen"):
            raise ConfigError(f"unknown field kind {self.kind!r}")
        if self.kind == "eigen" and not self.ell:
            raise ConfigError("field.kind = eigen needs field.ell")
        if self.format not in ("binary", "text"):
            raise ConfigError("run.format must be binary or text")
        if len(self.grid) != 2 or (self.geometry_grid is not None and len(self.geometry_grid) != 2):
            raise ConfigError("grids are given as n_theta, n_phi")
        if self.replicates < 1 or self.seed < 0:
            raise ConfigError("replicates must be positive and seed non-negative")
        if not (self.B > 1 and math.isfinite(self.B)):
            raise ConfigError("B must exceed 1")
        if self.kappa is not None and len(self.kappa) != self.L_K + 1:
            raise ConfigError(f"kernel.kappa needs L_K + 1 = {self.L_K + 1} values")

    # -- serialization

    def to_text(self, include_output=False):
        lines = []
        section = None
        for (sec, key), (attr, _) in _SCHEMA.items():
            if sec != section:
                if section is not None:
                    lines.append("")
                lines.append(f"[{sec}]")
                section = sec
            lines.append(f"{key} = {_fmt(getattr(self, attr))}")
            if include_output and (sec, key) == ("run", "command"):
                lines.append(f"output = {self.output}")
        return "\n".join(lines) + "\n"

    def hash(self):
        """SHA-256 prefix of the canonical text (the output path is excluded)."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    # -- model objects

    def spectrum_ellmax(self):
        if self.ellmax is not None:
            return self.ellmax
        jmax = max((self.j,) + tuple(self.j_list))
        return int(math.ceil(self.B ** (jmax + 1)))

    def spectrum(self):
        try:
            if self.model == "tabulated":
                return load_tabulated(self.path, self.ellmax)
            if self.model == "bardeen":
                return PowerSpectrum.bardeen(self.spectrum_ellmax(), self.G)
            return PowerSpectrum.sachs_wolfe(self.G, self.alpha, self.spectrum_ellmax())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"spectrum: {exc}") from exc

    def window(self, j=None):
        return NeedletWindow(self.B, self.j if j is None else j)

    def kernel(self):
        if self.kappa is not None:
            return SmoothingKernel(self.kappa)
        return SmoothingKernel.flat(self.L_K, monopole=self.monopole)

    def with_command(self, command):
        return replace(self, command=command)


def parse_config(text, output=None):
    """Parse config text; a ``[manifest]`` section (written by runs) is skipped."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    known = {sec for sec, _ in _SCHEMA}
    values = {}
    for sec in cp.sections():
        if sec == MANIFEST_SECTION:
            continue
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if sec == "run" and key == "output":
                values["output"] = raw.strip()
                continue
            spec = _SCHEMA.get((sec, key))
            if spec is None:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            attr, conv = spec
            try:
                values[attr] = conv(raw.strip())
            except ValueError as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {raw!r} ({exc})") from exc
    if output is not None:
        values["output"] = output
    names = {f.name for f in fields(RunConfig)}
    assert set(values) <= names
    return RunConfig(**values)


def load_config(path, output=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), output)
