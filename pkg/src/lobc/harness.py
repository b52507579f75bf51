"""Experiment configuration, dispatch and report serialization."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any

import numpy as np

from . import __version__
from .engine import BranchOverflow
from .entanglement import eta_d, report as entanglement_report
from .linalg import CNOT, CZ, ISWAP, SWAP, StateVector, X, Z, bell_state, haar_random_unitary
from .magic import (
    NotUnitaryError,
    canonical_class,
    canonical_decompose,
    canonical_invariants,
    in_L,
    is_nonentangling,
    m_gate,
    omega_from_angles,
)
from .protocols import (
    U2,
    U2E,
    ControlledHermitian,
    LOCCBaseline,
    ProtocolValidationError,
    QuditSwap,
    random_hermitian_unitary,
    random_projector,
    run_protocol,
)
from .protocols import bounds

COMMANDS = ("decompose", "classify", "run", "enumerate", "entanglement", "bounds")
PROTOCOLS = ("u2e", "u2", "chermitian", "qswap", "locc-baseline")
NAMED_GATES = {
    "identity": np.eye(4, dtype=complex),
    "cnot": CNOT,
    "cz": CZ,
    "swap": SWAP,
    "iswap": ISWAP,
}
REPORT_KEYS = ("config", "protocol", "predicted", "measured", "ledger", "version", "seed", "timestamp")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    command: str
    protocol: str | None = None
    gate: str | None = None
    angles: tuple[float, float, float] | None = None
    rounds: int = 1
    trials: int | None = None
    mode: str | None = None
    seed: int = 0
    dA: int = 2
    dB: int = 2
    s: int = 8
    d: int = 2
    inputs: int = 16
    state: str | None = None
    epsilon: float | None = None
    out: str | None = None
    format: str = "json"
    workers: int | None = None
    max_branches: int = 1 << 20

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.command in ("run", "enumerate"):
            if self.protocol not in PROTOCOLS:
                raise ConfigError(f"--protocol must be one of {', '.join(PROTOCOLS)}")
        if self.mode not in (None, "sample", "enumerate"):
            raise ConfigError("--mode must be sample or enumerate")
        if self.format not in ("json", "csv"):
            raise ConfigError("--format must be json or csv")
        for name in ("rounds", "inputs", "dA", "dB", "s", "d"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"--{name} must be positive")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("--trials must be positive")
        if self.gate is not None and self.angles is not None:
            raise ConfigError("give --gate or --angles, not both")
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if self.angles is not None:
            out["angles"] = list(self.angles)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if data.get("angles") is not None:
            data["angles"] = tuple(float(a) for a in data["angles"])
        return cls(**data)


def parse_gate(spec: str, angle_gate=None) -> np.ndarray:
    """Named gate, ``haar:<seed>``, or ``a,b,c`` angles.

    Angle triples become ``angle_gate(a, b, c)``, Ω by default.
    """
    angle_gate = angle_gate or omega_from_angles
    key = spec.strip().lower()
    if key in NAMED_GATES:
        return NAMED_GATES[key].copy()
    if key.startswith("haar:"):
        try:
            seed = int(key[5:])
        except ValueError:
            raise ConfigError(f"bad Haar seed in {spec!r}") from None
        return haar_random_unitary(4, np.random.default_rng(seed))
    if "," in key:
        return angle_gate(*parse_angles(key))
    raise ConfigError(f"unknown gate spec {spec!r}")


def parse_angles(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"angles must be three numbers, got {text!r}") from None
    if len(vals) != 3 or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"angles must be three finite numbers, got {text!r}")
    return vals


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _matrix(m: np.ndarray) -> dict:
    return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}


@dataclass
class ReportFile:
    config: dict
    protocol: dict | None
    predicted: dict
    measured: dict
    ledger: dict | None
    version: str
    seed: int
    timestamp: str
    rows: list[dict] | None = None

    def payload(self) -> dict:
        return {k: _jsonable(getattr(self, k)) for k in REPORT_KEYS}

    def to_json(self, include_timestamp: bool = True) -> str:
        p = self.payload()
        if not include_timestamp:
            p.pop("timestamp")
        return json.dumps(p, indent=2, allow_nan=False)

    def to_csv(self) -> str:
        rows = self.rows
        if rows is None:
            rows = [{"key": k, "value": json.dumps(v)} for k, v in _flatten(self.measured).items()]
        buf = io.StringIO()
        if rows:
            w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        return buf.getvalue()

    def render(self, fmt: str = "json") -> str:
        return self.to_csv() if fmt == "csv" else self.to_json() + "\n"


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = _jsonable(v)
    return out


# -- command flows -----------------------------------------------------------


def _gate_from_config(cfg: ExperimentConfig, default: str | None = None) -> np.ndarray:
    # protocols take M angles, gate analysis takes canonical Ω angles
    angle_gate = m_gate if cfg.command in ("run", "enumerate") else omega_from_angles
    if cfg.angles is not None:
        return angle_gate(*cfg.angles)
    spec = cfg.gate or default
    if spec is None:
        raise ConfigError("a gate is required (--gate or --angles)")
    return parse_gate(spec, angle_gate)


def _decompose(cfg: ExperimentConfig) -> tuple[dict, dict]:
    u = _gate_from_config(cfg)
    form = canonical_decompose(u, seed=cfg.seed)
    err = float(np.max(np.abs(form.rebuild() - u)))
    measured = {
        "angles": list(form.angles),
        "canonical_class": list(canonical_class(u)),
        "invariants": canonical_invariants(u).tolist(),
        "phase": form.phase,
        "local_pre": [_matrix(m) for m in form.local_pre],
        "local_post": [_matrix(m) for m in form.local_post],
        "reconstruction_error": err,
    }
    return {}, measured


def _classify(cfg: ExperimentConfig) -> tuple[dict, dict]:
    u = _gate_from_config(cfg)
    return {}, {
        "in_L": in_L(u),
        "nonentangling": is_nonentangling(u),
        "canonical_class": list(canonical_class(u)),
    }


def _entanglement(cfg: ExperimentConfig) -> tuple[dict, dict]:
    state = (cfg.state or "eta").lower()
    if state == "eta":
        if cfg.d < 2:
            raise ConfigError("--d must be at least 2 for eta")
        psi = eta_d(cfg.d)
    elif state == "bell":
        psi = StateVector(("A", "B"), (cfg.d, cfg.d), bell_state(cfg.d))
    elif state == "random":
        psi = StateVector.random(("A", "B"), (cfg.dA, cfg.dB), np.random.default_rng(cfg.seed))
    else:
        raise ConfigError(f"unknown state {cfg.state!r}; use eta, bell or random")
    return {}, entanglement_report(psi).as_dict()


def _bounds(cfg: ExperimentConfig) -> tuple[dict, dict]:
    n = cfg.rounds
    p = bounds.predicted_success(n)
    eps = cfg.epsilon if cfg.epsilon is not None else 2 * (1 - p)
    exact, bound = bounds.epsilon_ebits(eps)
    predicted = {
        "rounds": n,
        "success_probability": p,
        "ebit_budget": bounds.ebit_budget(n),
        "step_budgets": bounds.step_budgets(n),
        "epsilon": eps,
        "epsilon_ebits_exact": exact,
        "epsilon_ebits_bound": bound,
        "s": cfg.s,
        "lobc_lower_bound_ebits": bounds.lobc_lower_bound(cfg.s),
    }
    return predicted, {}


def build_protocol(cfg: ExperimentConfig):
    """Protocol object for ``cfg``; random ingredients derive from the seed."""
    name = cfg.protocol
    rng = np.random.default_rng([cfg.seed, 1])
    if name == "u2e":
        return U2E(_gate_from_config(cfg, "cnot"), gate_name=cfg.gate)
    if name == "u2":
        if cfg.angles is not None:
            return U2(cfg.rounds, angles=cfg.angles)
        return U2(cfg.rounds, u=_gate_from_config(cfg, "cnot"), gate_name=cfg.gate or "cnot")
    if name == "chermitian":
        if cfg.gate in ("cnot", "cz"):
            p = np.diag([0, 1]).astype(complex)
            return ControlledHermitian(p, X if cfg.gate == "cnot" else Z)
        if cfg.gate is not None or cfg.angles is not None:
            raise ConfigError("chermitian accepts --gate cnot or cz, or random P and V from --dA/--dB")
        return ControlledHermitian(random_projector(cfg.dA, rng), random_hermitian_unitary(cfg.dB, rng))
    if name == "qswap":
        return QuditSwap(cfg.d)
    if name == "locc-baseline":
        return LOCCBaseline(cfg.s)
    raise ConfigError(f"unknown protocol {name!r}")


def input_states(cfg: ExperimentConfig, dims) -> list[StateVector]:
    rng = np.random.default_rng([cfg.seed, 0])
    return [StateVector.random(("A", "B"), dims, rng) for _ in range(cfg.inputs)]


def _run(cfg: ExperimentConfig) -> tuple[dict, dict, dict, dict, list[dict]]:
    proto = build_protocol(cfg)
    mode = cfg.mode
    if cfg.command == "enumerate":
        mode = "enumerate"
    if mode is None:
        mode = "sample" if cfg.trials is not None else "enumerate"
    psi = input_states(cfg, proto.dims)
    try:
        rep = run_protocol(proto, psi, mode, seed=cfg.seed, trials=cfg.trials,
                           workers=cfg.workers or os.cpu_count() or 1,
                           max_branches=cfg.max_branches, keep_branches=False)
    except BranchOverflow as e:
        raise ConfigError(f"{e}; rerun with --mode sample --trials T") from None

    predicted = {"success_probability": proto.predicted_success(), "ebit_budget": proto.ebit_budget()}
    if isinstance(proto, U2):
        n = proto.n
        predicted["success_probability"] = bounds.predicted_success(n)
        predicted["ebit_budget"] = bounds.ebit_budget(n)
        predicted["step_budgets"] = bounds.step_budgets(n)
        predicted["epsilon"] = 2 * (1 - bounds.predicted_success(n))
    if isinstance(proto, LOCCBaseline):
        predicted["locc_ebits"] = 2.0
        predicted["lobc_lower_bound_ebits"] = bounds.lobc_lower_bound(proto.s)
        predicted["gap_ebits"] = bounds.lobc_lower_bound(proto.s) - 2.0

    measured = {
        "mode": rep.mode,
        "branches_or_trials": rep.branches_or_trials,
        "n_inputs": rep.n_inputs,
        "success_probability": rep.success_probability,
        "success_stderr": rep.success_stderr,
        "mean_fidelity_on_success": rep.mean_fidelity_on_success,
        "min_fidelity_on_success": rep.min_fidelity_on_success,
        "pruned_mass": rep.pruned_mass,
        "oracle_checked": rep.oracle_checked,
        "oracle_recovered_failures": rep.oracle_recovered_failures,
    }
    if rep.mode == "sample":
        z = (rep.success_probability - rep.predicted_success) / rep.success_stderr if rep.success_stderr > 0 else 0.0
        measured["z_score"] = z
        measured["within_4sigma"] = bool(abs(z) <= 4) if rep.success_stderr > 0 else \
            bool(rep.success_probability == rep.predicted_success)
    ledger = {
        "allocated_ebits": rep.allocated_ebits,
        "touched_ebits": rep.touched_ebits,
        "ebit_budget": rep.ebit_budget,
        "cbits_broadcast": rep.cbits_broadcast,
        "cbits_sent": rep.cbits_sent,
        "interactive": rep.interactive,
        "breakdown": dict(sorted(rep.ebit_breakdown.items())),
    }
    protocol = {"name": rep.protocol, "parameters": rep.parameters, "annotations": rep.annotations}
    rows = []
    cols = list(rep.per_trial)
    data = [np.asarray(rep.per_trial[c]) for c in cols]
    for i in range(rep.branches_or_trials):
        rows.append({c: _jsonable(v[i].item()) for c, v in zip(cols, data)})
    return protocol, predicted, measured, ledger, rows


def execute(cfg: ExperimentConfig, now: datetime | None = None) -> ReportFile:
    """Run one configured experiment and assemble its report."""
    cfg.validate()
    protocol = ledger = rows = None
    try:
        if cfg.command == "decompose":
            predicted, measured = _decompose(cfg)
        elif cfg.command == "classify":
            predicted, measured = _classify(cfg)
        elif cfg.command == "entanglement":
            predicted, measured = _entanglement(cfg)
        elif cfg.command == "bounds":
            predicted, measured = _bounds(cfg)
        else:
            protocol, predicted, measured, ledger, rows = _run(cfg)
    except (NotUnitaryError, ProtocolValidationError) as e:
        raise ConfigError(str(e)) from e
    stamp = (now or datetime.now(timezone.utc)).isoformat()
    return ReportFile(cfg.to_dict(), protocol, predicted, measured, ledger, __version__, cfg.seed, stamp, rows)


def write_report(report: ReportFile, path: str | None, fmt: str = "json") -> str:
    text = report.render(fmt)
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    return text
