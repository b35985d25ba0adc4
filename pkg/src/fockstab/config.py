"""Experiment configuration shared by the CLI and the scenario runners.

Unset fields resolve to scenario-dependent defaults: the convergence and
ladder scenarios run disturbance-free with theta2 = 1/sqrt(nbar), while the
trajectory, steady-state and robustness scenarios use the realistic cavity
environment (1/kappa = 0.1 s, n_th = 0.05, Ts = 60 us, atom presence 0.3)
and the empirically optimal theta2 * sqrt(nbar) = 3*pi/4.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Any

from .dynamics import default_dim
from .errors import ConfigError

SCENARIOS = (
    "converge",
    "trajectory",
    "steady",
    "tune-phase",
    "sweep-theta2",
    "robustness",
    "ladder",
    "validate",
)

_THERMAL_SCENARIOS = {"trajectory", "steady", "sweep-theta2", "robustness"}

CAVITY_KAPPA = 10.0
CAVITY_NTH = 0.05
CAVITY_TS = 60e-6
CAVITY_PAT = 0.3
TRAJECTORY_SECONDS = 4.0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    nbar: int = 3
    theta2: float | None = None
    eta: float = 0.5
    dim: int | None = None
    steps: int | None = None
    kappa: float | None = None
    nth: float | None = None
    ts: float = CAVITY_TS
    pat: float | None = None
    phi: float | None = None  # None -> tune on the numeric path, 0 on the analytic one
    theta1_err: float = 0.0
    channel: str | None = None
    scheme: str = "symmetric"
    init: str | None = None
    nbars: tuple[int, ...] | None = None
    sample_atoms: bool = False
    seed: int | None = None
    out: str | None = None
    fmt: str = "csv"

    def resolved(self) -> "ExperimentConfig":
        """Fill scenario defaults and validate the result."""
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.nbar < 1:
            raise ConfigError(f"nbar must be >= 1, got {self.nbar}")
        thermal = self.scenario in _THERMAL_SCENARIOS
        cfg = replace(
            self,
            theta2=self.theta2 if self.theta2 is not None else default_theta2(self.scenario, self.nbar),
            dim=self.dim if self.dim is not None else default_dim(self.nbar),
            steps=self.steps if self.steps is not None else default_steps(self.scenario, self.ts),
            kappa=self.kappa if self.kappa is not None else (CAVITY_KAPPA if thermal else 0.0),
            nth=self.nth if self.nth is not None else (CAVITY_NTH if thermal else 0.0),
            pat=self.pat if self.pat is not None else (CAVITY_PAT if thermal else 1.0),
            channel=self.channel
            if self.channel is not None
            else ("analytic" if self.scenario == "ladder" else "numeric"),
            init=self.init if self.init is not None else default_init(self.scenario, self.nbar),
            nbars=self.nbars if self.nbars is not None else tuple(range(1, 9)),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.nbar < 1:
            raise ConfigError(f"nbar must be >= 1, got {self.nbar}")
        if self.steps is not None and self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.channel not in (None, "numeric", "analytic"):
            raise ConfigError(f"channel must be 'numeric' or 'analytic', got {self.channel!r}")
        if self.scheme not in ("symmetric", "walther"):
            raise ConfigError(f"scheme must be 'symmetric' or 'walther', got {self.scheme!r}")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"format must be 'csv' or 'json', got {self.fmt!r}")
        if self.nbars is not None and len(self.nbars) == 0:
            raise ConfigError("nbars grid must not be empty")
        if self.dim is not None and self.init is not None:
            for idx in _init_levels(self.init):
                if idx >= self.dim:
                    raise ConfigError(f"initial state level {idx} does not fit dim {self.dim}")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["nbars"] = list(self.nbars) if self.nbars is not None else None
        return d

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "ExperimentConfig":
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "nbars" in data and data["nbars"] is not None:
            data = dict(data)
            data["nbars"] = tuple(int(n) for n in data["nbars"])
        return ExperimentConfig(**data)

    @staticmethod
    def from_json_file(path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return ExperimentConfig.from_dict(data)


def default_theta2(scenario: str, nbar: int) -> float:
    if scenario in ("converge", "ladder"):
        return 1.0 / math.sqrt(nbar)
    return 0.75 * math.pi / math.sqrt(nbar)


def default_steps(scenario: str, ts: float) -> int:
    if scenario in ("trajectory",):
        return int(TRAJECTORY_SECONDS / ts)
    if scenario == "ladder":
        return 20_000
    return 2000


def default_init(scenario: str, nbar: int) -> str:
    if scenario == "ladder":
        return f"fock:{4 * nbar + 3}"
    return "vacuum"


def _init_levels(init: str) -> list[int]:
    """Levels referenced by an initial-state descriptor (for bounds checks)."""
    kind, _, rest = init.partition(":")
    if kind == "vacuum":
        return [0]
    if kind == "fock":
        return [int(rest)]
    if kind == "uniform":
        lo, _, hi = rest.partition(":")
        return [int(lo), int(hi)]
    if kind == "diag":
        return [len(rest.split(",")) - 1]
    raise ConfigError(f"unknown initial state descriptor {init!r}")
