"""Experiment specifications and their flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Union

from .core import LINKS, ScenarioConfig, dbm_to_watt

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentSpec",
    "defaults_for",
    "load_config",
    "parse_config",
    "dump_config",
]

EXPERIMENTS = (
    "convergence",
    "tradeoff",
    "feasible_prob",
    "error_floor",
    "ambiguity",
    "ber_vs_power_primary",
    "ber_vs_power_secondary",
    "mrtzf_ber",
    "mrtzf_alloc",
)


class ConfigError(ValueError):
    """Bad configuration; the message names the key or line."""


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment run. Tuple fields are sweep grids."""

    name: str
    M: int = 4
    N: tuple = (16,)
    delta: tuple = (0.5,)
    P_t_dbm: tuple = (30.0,)
    sigma2_dbm: float = -100.0
    draws: int = 50
    trials: int = 200000
    seed: int = 0
    restarts: int = 5
    max_outer: int = 50
    tol: float = 1e-4
    schedule: str = "interleaved"
    scheme: str = "proposed"
    primary: str = "QPSK"
    secondary: str = "BPSK"
    labeling: str = "Gray"
    blocked: tuple = ()

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"name: unknown experiment {self.name!r}")
        checks = [
            ("M", self.M >= 1, "must be >= 1"),
            ("N", len(self.N) > 0 and all(n >= 0 for n in self.N), "must be >= 0"),
            ("delta", len(self.delta) > 0 and all(0.0 <= d <= 1.0 for d in self.delta), "must lie in [0, 1]"),
            ("P_t_dbm", len(self.P_t_dbm) > 0 and all(-50.0 <= p <= 80.0 for p in self.P_t_dbm), "must lie in [-50, 80] dBm"),
            ("sigma2_dbm", -200.0 <= self.sigma2_dbm <= 50.0, "must lie in [-200, 50] dBm"),
            ("draws", self.draws >= 1, "must be >= 1"),
            ("trials", self.trials >= 1, "must be >= 1"),
            ("seed", 0 <= self.seed < 2**64, "must be a 64-bit unsigned integer"),
            ("restarts", self.restarts >= 1, "must be >= 1"),
            ("max_outer", self.max_outer >= 1, "must be >= 1"),
            ("tol", self.tol > 0, "must be positive"),
            ("schedule", self.schedule in ("interleaved", "inner"), "must be interleaved or inner"),
            ("scheme", self.scheme in ("proposed", "conventional", "both"), "must be proposed, conventional or both"),
            ("primary", self.primary in ("BPSK", "QPSK"), "must be BPSK or QPSK"),
            ("secondary", self.secondary in ("BPSK", "QPSK"), "must be BPSK or QPSK"),
            ("labeling", self.labeling in ("Gray", "Natural"), "must be Gray or Natural"),
            ("blocked", all(b in LINKS for b in self.blocked), f"entries must be among {LINKS}"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}")

    def scenario(self, N: int = None, P_t_dbm: float = None, delta: float = None) -> ScenarioConfig:
        sigma2 = float(dbm_to_watt(self.sigma2_dbm))
        return ScenarioConfig(
            M=self.M,
            N=self.N[0] if N is None else N,
            P_t=float(dbm_to_watt(self.P_t_dbm[0] if P_t_dbm is None else P_t_dbm)),
            sigma2_p=sigma2,
            sigma2_s=sigma2,
            delta=self.delta[0] if delta is None else delta,
            seed=self.seed,
            blocked=frozenset(self.blocked),
        )

    def replace(self, **kw) -> "ExperimentSpec":
        return dataclasses.replace(self, **kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_DEFAULTS = {
    "convergence": dict(M=4, N=(16,), delta=(0.5,), draws=20),
    "tradeoff": dict(M=4, N=(16,), delta=(0.0, 0.2, 0.4, 0.6, 0.8, 1.0), draws=50),
    "feasible_prob": dict(
        M=4, N=(16,), delta=tuple(round(0.1 * k, 1) for k in range(11)), draws=50, scheme="both"
    ),
    "error_floor": dict(
        M=4, N=(0, 50, 100, 150, 200, 250, 500, 1000, 2000), P_t_dbm=(10.0,), draws=50,
        scheme="both",
    ),
    "ambiguity": dict(
        M=4, N=(16,), P_t_dbm=tuple(float(p) for p in range(10, 41, 5)), draws=50,
        trials=200000, scheme="conventional", blocked=("h_p",), delta=(0.5,),
    ),
    "ber_vs_power_primary": dict(
        M=4, N=(8, 16), P_t_dbm=tuple(float(p) for p in range(10, 41, 5)), delta=(0.5,), draws=20
    ),
    "ber_vs_power_secondary": dict(
        M=4, N=(8, 16), P_t_dbm=tuple(float(p) for p in range(10, 41, 5)), delta=(0.5,), draws=20
    ),
    "mrtzf_ber": dict(
        M=1, N=(40,), P_t_dbm=tuple(float(p) for p in range(10, 41, 5)), delta=(0.2, 0.5, 0.8),
        draws=50,
    ),
    "mrtzf_alloc": dict(M=1, N=(10, 20, 40, 80, 160, 320, 640), delta=(0.4, 0.8), draws=50),
}


def defaults_for(name: str) -> ExperimentSpec:
    if name not in EXPERIMENTS:
        raise ConfigError(f"name: unknown experiment {name!r}")
    return ExperimentSpec(name=name, **_DEFAULTS[name])


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Text format
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
_TYPES = {f.name: f.type for f in fields(ExperimentSpec)}
_INT_LISTS = {"N"}
_FLOAT_LISTS = {"delta", "P_t_dbm"}
_STR_LISTS = {"blocked"}
_INTS = {"M", "draws", "trials", "seed", "restarts", "max_outer"}
_FLOATS = {"sigma2_dbm", "tol"}


def _convert(key: str, raw: str):
    items = [x.strip() for x in raw.split(",") if x.strip()]
    if key in _INT_LISTS:
        return tuple(int(x) for x in items)
    if key in _FLOAT_LISTS:
        return tuple(float(x) for x in items)
    if key in _STR_LISTS:
        return tuple(items)
    if key in _INTS:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if key in _FLOATS:
        return float(raw)
    return raw.strip()


def parse_config(text: str) -> ExperimentSpec:
    """Parse ``key = value`` lines; ``#`` starts a comment; lists are comma-separated.

    Keys missing from the file take the experiment's documented defaults.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None
    if "name" not in values:
        raise ConfigError("name: missing experiment name")
    base = defaults_for(values["name"]).as_dict()
    base.update(values)
    return ExperimentSpec(**base)


def load_config(path: Union[str, Path]) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(spec: ExperimentSpec) -> str:
    lines = [f"# experiment template: {spec.name}"]
    for key, value in spec.as_dict().items():
        lines.append(f"{key} = {_format(value)}")
    return "\n".join(lines) + "\n"
