"""Experiment configuration: INI-style files, validation, manifests.

Config files are line-oriented ``key = value`` text with section headers,
parsed by configparser.  Squeezing strengths may be written either in dB
(``r_a_db = 10`` meaning 10 dB of power gain, field gain 10^(db/20)) or as
linear power gain (``r_a_pow = 10``); the conversion happens exactly once,
at parse time, and manifests always echo the canonical linear values along
with every default that influenced the run.

Example::

    [protocol]
    name = cat

    [physical]
    g = 1.0
    r_a_db = 10
    r_b_db = 10
    tau = 1.0
    w_a = 1.1180339887498949
    xi_sq = 4 8 12 16
    delta_p_b = 0.5

    [numerical]
    dim_a = 56
    dim_b = 100
    seed = 2026

    [output]
    dir = out/fig1
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from math import sqrt

from .errors import ConfigError

PROTOCOLS = ("cat", "cubic-phase", "qe-study", "negativity-sweep")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in str(text).replace(",", " ").split())


@dataclass
class ExperimentConfig:
    """All physical and numerical parameters for one named protocol run."""

    # protocol
    protocol: str = "cat"

    # physical (canonical linear power gains; dB keys are converted at parse)
    g: float = 1.0
    r_a_pow: float = 10.0
    r_b_pow: float = 10.0
    tau: float = 1.0
    w_a: float = sqrt(5.0) / 2.0
    xi_sq: tuple = (4.0, 8.0, 12.0, 16.0)
    delta_p_b: float = 0.5
    epr_delta_sq: float = 0.1
    kappa_a: float = 0.0              # in units of g
    kappa_b: float = 0.0
    eta: tuple = (1.0,)
    gain: tuple = (1.0,)

    # numerical
    dim_a: int = 56
    dim_b: int = 100
    dim_b_amplified: int = 0          # 0: automatic
    n_points: int = 512
    n_traj: int = 2000
    seed: int = 2026
    leak_tol_a: float = 1e-4
    leak_tol_b: float = 5e-2
    hamiltonian: str = "full"
    qe_method: str = "mcwf"
    master_tol: float = 1e-9
    master_dim_limit: int = 192
    window_mode: str = "window"       # "window" or "zero-width"
    wigner_x: tuple = (-3.4, 3.4, 171)
    wigner_p: tuple = (-8.5, 8.5, 241)
    # negativity-sweep axes
    sweep_xi: tuple = (2.5, 3.5, 4.5)
    sweep_tau: tuple = (0.35, 0.55, 0.75)
    # cubic-phase sweep axes (single-point default)
    sweep_epr_delta_sq: tuple = ()
    sweep_cubic_tau: tuple = ()

    # output
    out_dir: str = "out"

    def validate(self) -> "ExperimentConfig":
        """Fail fast with the violated constraint named."""
        def need(cond: bool, constraint: str):
            if not cond:
                raise ConfigError(f"config violates: {constraint}")

        need(self.protocol in PROTOCOLS, f"protocol.name in {PROTOCOLS}")
        need(self.g > 0, "physical.g > 0")
        need(self.r_a_pow >= 1, "physical.r_a power gain >= 1")
        need(self.r_b_pow >= 1, "physical.r_b power gain >= 1")
        need(self.tau > 0, "physical.tau > 0")
        need(self.w_a > 0, "physical.w_a > 0")
        need(all(x > 0 for x in self.xi_sq), "physical.xi_sq entries > 0")
        need(self.delta_p_b >= 0, "physical.delta_p_b >= 0")
        need(0 < self.epr_delta_sq <= 1, "physical.epr_delta_sq in (0, 1]")
        need(self.kappa_a >= 0 and self.kappa_b >= 0, "physical.kappa_a, kappa_b >= 0")
        need(all(0 < e <= 1 for e in self.eta), "physical.eta in (0, 1]")
        need(all(gn >= 1 for gn in self.gain), "physical.gain >= 1")
        need(self.dim_a >= 2 and self.dim_b >= 2, "numerical.dim_a, dim_b >= 2")
        need(self.dim_b_amplified == 0 or self.dim_b_amplified >= self.dim_b,
             "numerical.dim_b_amplified >= dim_b (or 0 for automatic)")
        need(self.n_points >= 2, "numerical.n_points >= 2")
        need(self.n_traj >= 1, "numerical.n_traj >= 1")
        need(self.leak_tol_a > 0 and self.leak_tol_b > 0, "numerical.leak_tol > 0")
        need(self.hamiltonian in ("full", "leading"), "numerical.hamiltonian in (full, leading)")
        need(self.qe_method in ("exact", "mcwf"), "numerical.qe_method in (exact, mcwf)")
        need(self.master_tol > 0, "numerical.master_tol > 0")
        need(self.window_mode in ("window", "zero-width"),
             "numerical.window_mode in (window, zero-width)")
        for name in ("wigner_x", "wigner_p"):
            lo, hi, n = getattr(self, name)
            need(hi > lo and int(n) >= 2, f"numerical.{name} is (min, max, n>=2)")
        return self

    @property
    def r_a(self) -> float:
        return sqrt(self.r_a_pow)

    @property
    def r_b(self) -> float:
        return sqrt(self.r_b_pow)


_TUPLE_FIELDS = {"xi_sq", "eta", "gain", "wigner_x", "wigner_p",
                 "sweep_xi", "sweep_tau", "sweep_epr_delta_sq", "sweep_cubic_tau"}
_INT_FIELDS = {"dim_a", "dim_b", "dim_b_amplified", "n_points", "n_traj", "seed",
               "master_dim_limit"}
_STR_FIELDS = {"protocol", "hamiltonian", "qe_method", "window_mode", "out_dir"}

_SECTION_OF = {
    "protocol": "protocol",
    "g": "physical", "r_a_pow": "physical", "r_b_pow": "physical",
    "tau": "physical", "w_a": "physical", "xi_sq": "physical",
    "delta_p_b": "physical", "epr_delta_sq": "physical",
    "kappa_a": "physical", "kappa_b": "physical", "eta": "physical",
    "gain": "physical",
    "out_dir": "output",
}


def _assign(cfg: ExperimentConfig, key: str, raw: str):
    if key in _TUPLE_FIELDS:
        value = _parse_floats(raw)
        if key in ("wigner_x", "wigner_p"):
            if len(value) != 3:
                raise ConfigError(f"config violates: {key} needs exactly (min, max, n)")
            value = (value[0], value[1], int(value[2]))
    elif key in _INT_FIELDS:
        value = int(raw)
    elif key in _STR_FIELDS:
        value = str(raw).strip()
    else:
        value = float(raw)
    setattr(cfg, key, value)


def load_config(path_or_text, overrides: dict | None = None) -> ExperimentConfig:
    """Parse an INI config file (path or text) into a validated config."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if hasattr(path_or_text, "read"):
        parser.read_file(path_or_text)
    elif "\n" in str(path_or_text) or "=" in str(path_or_text):
        parser.read_string(str(path_or_text))
    else:
        read = parser.read(str(path_or_text))
        if not read:
            raise ConfigError(f"config file not found: {path_or_text}")
    cfg = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    for section in parser.sections():
        if section == "meta":  # manifests carry a [meta] block; ignore on re-run
            continue
        for key, raw in parser.items(section):
            if section == "protocol" and key == "name":
                cfg.protocol = raw.strip()
                continue
            if section == "output" and key == "dir":
                cfg.out_dir = raw.strip()
                continue
            # dB spellings convert exactly once, here
            if key == "r_a_db":
                cfg.r_a_pow = 10.0 ** (float(raw) / 10.0)
                continue
            if key == "r_b_db":
                cfg.r_b_pow = 10.0 ** (float(raw) / 10.0)
                continue
            if key == "epr_db":
                cfg.epr_delta_sq = 10.0 ** (-float(raw) / 10.0)
                continue
            if key not in known:
                raise ConfigError(f"config violates: unknown key {section}.{key}")
            _assign(cfg, key, raw)
    if overrides:
        for key, value in overrides.items():
            if key not in known:
                raise ConfigError(f"config violates: unknown override key {key}")
            _assign(cfg, key, str(value))
    return cfg.validate()


def manifest_text(cfg: ExperimentConfig, version: str) -> str:
    """Canonical INI echo of every resolved parameter, defaults included.

    The manifest is itself a valid config: re-running it reproduces the run
    bitwise in single-threaded mode.
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str
    sections = {"meta": {"version": version},
                "protocol": {"name": cfg.protocol},
                "physical": {}, "numerical": {}, "output": {"dir": cfg.out_dir}}
    for f in fields(ExperimentConfig):
        if f.name in ("protocol", "out_dir"):
            continue
        section = _SECTION_OF.get(f.name, "numerical")
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            text = " ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        sections[section][f.name] = text
    for name, items in sections.items():
        parser[name] = items
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
