"""CSV persistence for records, filter paths, ensembles and references.

Every file starts with a metadata block of ``# key: value`` lines (format
tag, package version, generator name, seed, config hash, scheme data)
sufficient to reproduce the run, followed by a CSV header row and data.
Floats are serialized with 17 significant digits, so read(write(x)) is
bit-exact for binary64.  No timestamps: identical runs produce identical
bytes.
"""

from __future__ import annotations

import math

import numpy as np

from . import __version__
from .errors import RecordFormatError
from .filters import COUNTING, MeasurementScheme
from .trajectories import GENERATOR_NAME, ObservationRecord

RECORD_FORMAT = "belfilt-record-v1"
PATH_FORMAT = "belfilt-path-v1"
ENSEMBLE_FORMAT = "belfilt-ensemble-v1"
MASTER_FORMAT = "belfilt-master-v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _metadata_lines(fmt: str, extra: dict) -> list:
    meta = {"format": fmt, "version": __version__, "generator": GENERATOR_NAME}
    meta.update(extra)
    return [f"# {key}: {value}" for key, value in meta.items()]


def _parse_metadata(lines):
    """Consume leading '# key: value' lines; return (meta, header_index)."""
    meta = {}
    for idx, line in enumerate(lines):
        stripped = line.strip()
        if not stripped.startswith("#"):
            return meta, idx
        body = stripped.lstrip("#").strip()
        if ":" not in body:
            raise RecordFormatError("malformed metadata line (expected 'key: value')", line=idx + 1)
        key, _, value = body.partition(":")
        meta[key.strip()] = value.strip()
    raise RecordFormatError("file contains no CSV header row")


def write_record(record: ObservationRecord, path, config_hash: str = "-") -> None:
    scheme = record.scheme
    lines = _metadata_lines(
        RECORD_FORMAT,
        {
            "config_hash": config_hash,
            "seed": record.seed,
            "scheme": scheme.kind,
            "kappa": _fmt(scheme.kappa),
            "phase": _fmt(scheme.phase),
            "dt": _fmt(record.dt),
            "steps": record.steps,
        },
    )
    lines.append("t,dY")
    times = record.times()
    for t, dy in zip(times, record.increments):
        lines.append(f"{_fmt(t)},{_fmt(dy)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_record(path) -> ObservationRecord:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta, header_idx = _parse_metadata(lines)
    if meta.get("format") != RECORD_FORMAT:
        raise RecordFormatError(f"not a record file (format {meta.get('format')!r})")
    if lines[header_idx].strip() != "t,dY":
        raise RecordFormatError("expected header 't,dY'", line=header_idx + 1)
    required = ("scheme", "dt", "steps", "seed", "kappa", "phase")
    for key in required:
        if key not in meta:
            raise RecordFormatError(f"missing metadata key {key!r}")
    try:
        dt = float(meta["dt"])
        steps = int(meta["steps"])
        seed = int(meta["seed"])
        kappa = float(meta["kappa"])
        phase = float(meta["phase"])
    except ValueError as exc:
        raise RecordFormatError(f"malformed metadata value: {exc}") from exc
    scheme = MeasurementScheme(meta["scheme"], kappa, phase)
    rows = [line for line in lines[header_idx + 1 :] if line.strip()]
    if len(rows) != steps:
        raise RecordFormatError(f"declared steps = {steps} but found {len(rows)} data rows")
    increments = np.empty(steps)
    counting = scheme.kind == COUNTING
    for k, row in enumerate(rows):
        line_no = header_idx + 2 + k
        parts = row.split(",")
        if len(parts) != 2:
            raise RecordFormatError("expected two columns t,dY", line=line_no)
        try:
            t_val = float(parts[0])
            dy = float(parts[1])
        except ValueError as exc:
            raise RecordFormatError(f"non-numeric value: {exc}", line=line_no) from exc
        if not math.isfinite(dy):
            raise RecordFormatError("non-finite increment", line=line_no)
        expected_t = (k + 1) * dt
        if abs(t_val - expected_t) > 1e-6 * dt:
            raise RecordFormatError(f"time column {t_val} does not match step grid value {expected_t}", line=line_no)
        if counting and dy not in (0.0, 1.0):
            raise RecordFormatError(f"counting increment {dy} is not 0 or 1", line=line_no)
        increments[k] = dy
    return ObservationRecord(scheme, dt, increments, seed=seed)


def read_metadata(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta, _ = _parse_metadata(lines)
    return meta


def write_path_csv(path, times, expectations: dict, likelihoods=None, extra_meta=None) -> None:
    """Filter path: t, Re/Im of each named expectation, likelihood if given."""
    names = list(expectations)
    columns = ["t"]
    for name in names:
        columns.append(f"re_{name}")
        columns.append(f"im_{name}")
    if likelihoods is not None:
        columns.append("likelihood")
    lines = _metadata_lines(PATH_FORMAT, dict(extra_meta or {}))
    lines.append(",".join(columns))
    for idx, t in enumerate(times):
        row = [_fmt(t)]
        for name in names:
            val = expectations[name][idx]
            row.append(_fmt(val.real))
            row.append(_fmt(val.imag))
        if likelihoods is not None:
            row.append(_fmt(likelihoods[idx]))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_ensemble_csv(path, summary, extra_meta=None) -> None:
    names = list(summary.means)
    columns = ["t"]
    for name in names:
        columns += [f"mean_re_{name}", f"mean_im_{name}", f"stderr_re_{name}", f"stderr_im_{name}"]
    meta = {"n_trajectories": summary.n_trajectories}
    meta.update(extra_meta or {})
    lines = _metadata_lines(ENSEMBLE_FORMAT, meta)
    lines.append(",".join(columns))
    for idx, t in enumerate(summary.times):
        row = [_fmt(t)]
        for name in names:
            row.append(_fmt(summary.means[name][idx].real))
            row.append(_fmt(summary.means[name][idx].imag))
            row.append(_fmt(summary.stderrs_re[name][idx]))
            row.append(_fmt(summary.stderrs_im[name][idx]))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_master_csv(path, times, expectations: dict, extra_meta=None) -> None:
    names = list(expectations)
    columns = ["t"]
    for name in names:
        columns += [f"re_{name}", f"im_{name}"]
    lines = _metadata_lines(MASTER_FORMAT, dict(extra_meta or {}))
    lines.append(",".join(columns))
    for idx, t in enumerate(times):
        row = [_fmt(t)]
        for name in names:
            val = expectations[name][idx]
            row += [_fmt(val.real), _fmt(val.imag)]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
