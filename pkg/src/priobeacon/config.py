"""Experiment configuration: flat key-value text with sections, plus seed derivation.

The file format is INI (configparser): sections [scenario], [policy],
[contention], [mac], [sim], [seeds], [report], [output].  Every key has a
default, so an empty file is a valid configuration.  `canonical_text`
re-serializes a configuration into a normalized form whose parse round-trips
exactly.

Seeds: all randomness derives from [seeds] master through splitmix64.
Derived seed k is the k-th output of a splitmix64 stream whose state starts
at master: seed_k = mix(master + (k+1) * 0x9E3779B97F4A7C15).  Index 0 seeds
the scenario drop; grid point i (0-based, enumeration order: policies, then
cw values, then n_sta values as listed) uses index 1+2i for the simulation
and 2+2i for the sweep subsample.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from io import StringIO

from .geometry import Category, CategoryThresholds, DropMode, Point2D, RegionSpec, category_from_token
from .analytic import MacParameters

__all__ = ["ExperimentConfig", "parse_config", "parse_config_text", "canonical_text", "derive_seed", "splitmix64"]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One splitmix64 step: advance the state by the golden gamma and finalize."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master: int, index: int) -> int:
    """index-th output of the splitmix64 stream seeded at master."""
    if index < 0:
        raise ValueError("seed index must be non-negative")
    return splitmix64((master + index * _GOLDEN) & _MASK64)


@dataclass(frozen=True)
class ExperimentConfig:
    # scenario
    width: float = 2000.0
    height: float = 2000.0
    danger_x: float | None = None
    danger_y: float | None = None
    density: float = 2e-5
    th1: float = 300.0
    th2: float = 500.0
    th3: float = 700.0
    drop_mode: str = "fixedcount"
    # policy grid
    policies: tuple[str, ...] = ("traditional", "proposed")
    cw_values: tuple[int, ...] = (15, 127, 511)
    categories: tuple[str, ...] = ("cat1", "cat2", "cat3")
    # contention grid
    n_sta: tuple[int, ...] = (10, 20, 40, 80)
    sweep_mode: str = "subsample"  # subsample | rescale
    # mac
    t_ibi: float = 100e-3
    t_slot: float = 50e-6
    difs: float = 128e-6
    sifs: float = 28e-6
    header_airtime: float = 40e-6
    payload_bytes: int = 40
    data_rate: float = 6e6
    t_prop: float = 1e-6
    # sim
    periods: int = 1000
    sense_range: float = 700.0
    full_connectivity: bool = False
    random_phase_offsets: bool = False
    uncategorized: str = "contend"
    zero_based_irt: bool = False
    # seeds
    master_seed: int = 1
    # report tolerances (tau absolute, the rest relative)
    tau_tol: float = 0.05
    e_nbo_tol: float | None = None
    delay_tol: float | None = None
    r_tol: float | None = None
    # output
    out_dir: str = "out"

    def region(self) -> RegionSpec:
        danger = None
        if self.danger_x is not None and self.danger_y is not None:
            danger = Point2D(self.danger_x, self.danger_y)
        return RegionSpec(width=self.width, height=self.height, danger=danger)

    def thresholds(self) -> CategoryThresholds:
        try:
            return CategoryThresholds(self.th1, self.th2, self.th3)
        except ValueError as exc:
            raise ValueError(f"scenario.th1/th2/th3: {exc}") from None

    def drop_mode_enum(self) -> DropMode:
        try:
            return DropMode.from_token(self.drop_mode)
        except ValueError as exc:
            raise ValueError(f"scenario.drop_mode: {exc}") from None

    def mac_params(self) -> MacParameters:
        return MacParameters(
            t_ibi=self.t_ibi,
            t_slot=self.t_slot,
            difs=self.difs,
            sifs=self.sifs,
            header_airtime=self.header_airtime,
            payload_bytes=self.payload_bytes,
            data_rate=self.data_rate,
            t_prop=self.t_prop,
        )

    def category_enums(self) -> tuple[Category, ...]:
        return tuple(category_from_token(tok) for tok in self.categories)

    def tolerances(self) -> dict[str, float]:
        tols = {"tau": self.tau_tol}
        for name, value in (("e_nbo", self.e_nbo_tol), ("delay", self.delay_tol), ("r", self.r_tol)):
            if value is not None:
                tols[name] = value
        return tols

    def grid_points(self) -> list[tuple[int, str, int, int]]:
        """(index, policy, cw, n_sta) in the documented enumeration order."""
        points = []
        idx = 0
        for pol in self.policies:
            for cw in self.cw_values:
                for n in self.n_sta:
                    points.append((idx, pol, cw, n))
                    idx += 1
        return points

    def scenario_seed(self) -> int:
        return derive_seed(self.master_seed, 0)

    def sim_seed(self, point_index: int) -> int:
        return derive_seed(self.master_seed, 1 + 2 * point_index)

    def subsample_seed(self, point_index: int) -> int:
        return derive_seed(self.master_seed, 2 + 2 * point_index)

    def validate(self) -> "ExperimentConfig":
        if not self.policies:
            raise ValueError("policy.policies must not be empty")
        for pol in self.policies:
            if pol not in ("traditional", "proposed"):
                raise ValueError(f"policy.policies: unknown policy {pol!r}")
        if not self.cw_values:
            raise ValueError("policy.cw must not be empty")
        if any(cw < 1 for cw in self.cw_values):
            raise ValueError("policy.cw values must be positive")
        if not self.categories:
            raise ValueError("policy.categories must not be empty")
        for tok in self.categories:
            category_from_token(tok)
        if not self.n_sta:
            raise ValueError("contention.n_sta must not be empty")
        if any(n < 1 for n in self.n_sta):
            raise ValueError("contention.n_sta values must be positive")
        if self.sweep_mode not in ("subsample", "rescale"):
            raise ValueError("contention.sweep_mode must be subsample or rescale")
        if self.uncategorized not in ("contend", "report", "silent"):
            raise ValueError("sim.uncategorized must be contend, report or silent")
        if self.periods < 1:
            raise ValueError("sim.periods must be at least 1")
        self.thresholds()
        self.drop_mode_enum()
        self.region()
        self.mac_params()
        return self


_SCHEMA: dict[str, dict[str, str]] = {
    "scenario": {
        "width": "float", "height": "float", "danger_x": "optfloat", "danger_y": "optfloat",
        "density": "float", "th1": "float", "th2": "float", "th3": "float", "drop_mode": "str",
    },
    "policy": {"policies": "strlist", "cw": "intlist", "categories": "strlist"},
    "contention": {"n_sta": "intlist", "sweep_mode": "str"},
    "mac": {
        "t_ibi": "float", "t_slot": "float", "difs": "float", "sifs": "float",
        "header_airtime": "float", "payload_bytes": "int", "data_rate": "float", "t_prop": "float",
    },
    "sim": {
        "periods": "int", "sense_range": "float", "full_connectivity": "bool",
        "random_phase_offsets": "bool", "uncategorized": "str", "zero_based_irt": "bool",
    },
    "seeds": {"master": "int"},
    "report": {"tau_tol": "float", "e_nbo_tol": "optfloat", "delay_tol": "optfloat", "r_tol": "optfloat"},
    "output": {"dir": "str"},
}

_KEY_TO_FIELD = {
    ("policy", "cw"): "cw_values",
    ("seeds", "master"): "master_seed",
    ("output", "dir"): "out_dir",
}


def _field_name(section: str, key: str) -> str:
    return _KEY_TO_FIELD.get((section, key), key)


def _parse_value(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "optfloat":
            return None if raw in ("", "none") else float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "str":
            return raw
        if kind == "strlist":
            return tuple(raw.split())
        if kind == "intlist":
            return tuple(int(tok) for tok in raw.split())
    except ValueError as exc:
        raise ValueError(f"{where}: {exc}") from None
    raise AssertionError(f"unknown kind {kind}")


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.read_string(text)
    overrides = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ValueError(f"unknown config key {section}.{key}")
            overrides[_field_name(section, key)] = _parse_value(_SCHEMA[section][key], raw, f"{section}.{key}")
    return ExperimentConfig(**overrides).validate()


def parse_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "optfloat":
        return "none" if value is None else repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("int", "str"):
        return str(value)
    if kind == "strlist":
        return " ".join(value)
    if kind == "intlist":
        return " ".join(str(v) for v in value)
    raise AssertionError(kind)


def canonical_text(config: ExperimentConfig) -> str:
    """Normalized config serialization; parse_config_text round-trips it exactly."""
    out = StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key, kind in keys.items():
            value = getattr(config, _field_name(section, key))
            out.write(f"{key} = {_format_value(kind, value)}\n")
        out.write("\n")
    return out.getvalue()
