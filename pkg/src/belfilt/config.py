"""Run configuration: a flat JSON file with documented keys.

Keys (matrices are sparse entry lists ``[[row, col, re, im], ...]``):

    dim                 Hilbert space dimension (int >= 1)
    hamiltonian         Hermitian system Hamiltonian
    channels            list of coupling matrices (filters need exactly one)
    rho0                initial density matrix
    scheme              "homodyne" | "imperfect" | "counting"
    kappa               corrupting-noise strength (imperfect only, default 0)
    phase               quadrature phase (default 0)
    dt                  step size (> 0)
    T                   time horizon (> 0)
    seed                base seed (unsigned 64-bit int, default 0)
    n_trajectories      ensemble size (default 1)
    observables         {name: sparse entries} expectation outputs
    control_expression  optional feedback law over t, Y, ma(Y, window)
    control_h1          control Hamiltonian (required with control_expression)
    filter_kind         "auto" | "bks" | "zakai" for the filter command

Validation errors name the offending key.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .filters import ControlLaw, MeasurementScheme
from .operators import DensityState, SystemModel

_KNOWN_KEYS = {
    "dim",
    "hamiltonian",
    "channels",
    "rho0",
    "scheme",
    "kappa",
    "phase",
    "dt",
    "T",
    "seed",
    "n_trajectories",
    "observables",
    "control_expression",
    "control_h1",
    "filter_kind",
}


def matrix_from_entries(entries, dim: int, name: str) -> np.ndarray:
    """Dense matrix from a sparse (row, col, re, im) list."""
    out = np.zeros((dim, dim), dtype=complex)
    if not isinstance(entries, list):
        raise ValidationError(f"{name}: expected a list of [row, col, re, im] entries")
    seen = set()
    for i, entry in enumerate(entries):
        if not (isinstance(entry, (list, tuple)) and len(entry) == 4):
            raise ValidationError(f"{name}: entry {i} must be [row, col, re, im]")
        row, col, re, im = entry
        if not (isinstance(row, int) and isinstance(col, int)):
            raise ValidationError(f"{name}: entry {i}: row/col must be integers")
        if not (0 <= row < dim and 0 <= col < dim):
            raise ValidationError(f"{name}: entry {i}: index ({row}, {col}) out of range for dim {dim}")
        if (row, col) in seen:
            raise ValidationError(f"{name}: entry {i}: duplicate index ({row}, {col})")
        seen.add((row, col))
        try:
            out[row, col] = float(re) + 1j * float(im)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{name}: entry {i}: non-numeric value") from exc
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"{name}: entries must be finite")
    return out


def matrix_to_entries(matrix: np.ndarray) -> list:
    out = []
    for row in range(matrix.shape[0]):
        for col in range(matrix.shape[1]):
            v = matrix[row, col]
            if v != 0:
                out.append([row, col, float(v.real), float(v.imag)])
    return out


@dataclass(frozen=True)
class RunConfig:
    dim: int
    hamiltonian: np.ndarray
    channels: tuple
    rho0: DensityState
    scheme: MeasurementScheme
    dt: float
    horizon: float
    seed: int
    n_trajectories: int
    observables: dict
    control_expression: str | None
    control_h1: np.ndarray | None
    filter_kind: str
    config_hash: str

    def model(self) -> SystemModel:
        return SystemModel(self.hamiltonian, self.channels)

    def law(self) -> ControlLaw | None:
        if self.control_expression is None:
            return None
        return ControlLaw.from_expression(self.control_expression, self.hamiltonian, self.control_h1)

    def require_single_channel(self) -> None:
        if len(self.channels) != 1:
            raise ValidationError(f"channels: filtering requires exactly one channel, got {len(self.channels)}")


def _require_number(raw: dict, key: str, default=None, positive=False, integer=False):
    if key not in raw:
        if default is None:
            raise ValidationError(f"{key}: missing required key")
        return default
    val = raw[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(f"{key}: expected a number, got {val!r}")
    if integer and not isinstance(val, int):
        raise ValidationError(f"{key}: expected an integer, got {val!r}")
    if positive and val <= 0:
        raise ValidationError(f"{key}: must be positive, got {val!r}")
    return val


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config: top level must be an object")
    for key in raw:
        if key not in _KNOWN_KEYS:
            raise ValidationError(f"{key}: unknown config key")

    dim = _require_number(raw, "dim", positive=True, integer=True)
    dt = float(_require_number(raw, "dt", positive=True))
    horizon = float(_require_number(raw, "T", positive=True))
    seed = _require_number(raw, "seed", default=0, integer=True)
    if seed < 0:
        raise ValidationError("seed: must be a nonnegative integer")
    n_traj = _require_number(raw, "n_trajectories", default=1, positive=True, integer=True)

    if "hamiltonian" not in raw:
        raise ValidationError("hamiltonian: missing required key")
    hamiltonian = matrix_from_entries(raw["hamiltonian"], dim, "hamiltonian")

    channels_raw = raw.get("channels", [])
    if not isinstance(channels_raw, list):
        raise ValidationError("channels: expected a list of matrices")
    channels = tuple(matrix_from_entries(c, dim, f"channels[{i}]") for i, c in enumerate(channels_raw))

    if "rho0" not in raw:
        raise ValidationError("rho0: missing required key")
    try:
        rho0 = DensityState(matrix_from_entries(raw["rho0"], dim, "rho0"))
    except ValidationError as exc:
        raise ValidationError(f"rho0: {exc}") from exc

    kind = raw.get("scheme")
    if kind is None:
        raise ValidationError("scheme: missing required key")
    try:
        scheme = MeasurementScheme(kind, float(raw.get("kappa", 0.0)), float(raw.get("phase", 0.0)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"scheme: {exc}") from exc

    observables_raw = raw.get("observables", {})
    if not isinstance(observables_raw, dict):
        raise ValidationError("observables: expected an object of name -> entries")
    observables = {
        str(name): matrix_from_entries(entries, dim, f"observables[{name}]")
        for name, entries in observables_raw.items()
    }

    control_expression = raw.get("control_expression")
    control_h1 = None
    if control_expression is not None:
        if not isinstance(control_expression, str):
            raise ValidationError("control_expression: expected a string")
        if "control_h1" not in raw:
            raise ValidationError("control_h1: required when control_expression is set")
        control_h1 = matrix_from_entries(raw["control_h1"], dim, "control_h1")
    elif "control_h1" in raw:
        raise ValidationError("control_h1: set without control_expression")

    filter_kind = raw.get("filter_kind", "auto")
    if filter_kind not in ("auto", "bks", "zakai"):
        raise ValidationError(f"filter_kind: expected auto, bks or zakai, got {filter_kind!r}")

    # Validate the model eagerly so errors carry the config key.
    try:
        SystemModel(hamiltonian, channels)
    except ValidationError as exc:
        raise ValidationError(str(exc)) from exc
    if control_expression is not None:
        ControlLaw.from_expression(control_expression, hamiltonian, control_h1)

    digest = hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()

    return RunConfig(
        dim=dim,
        hamiltonian=hamiltonian,
        channels=channels,
        rho0=rho0,
        scheme=scheme,
        dt=dt,
        horizon=horizon,
        seed=seed,
        n_trajectories=n_traj,
        observables=observables,
        control_expression=control_expression,
        control_h1=control_h1,
        filter_kind=filter_kind,
        config_hash=digest,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config: invalid JSON in {path}: {exc}") from exc
    return config_from_dict(raw)
