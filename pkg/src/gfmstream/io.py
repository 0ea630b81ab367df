"""Persistence: binary model checkpoints, CSV convergence traces, JSON
reports and flat JSON configs.

Checkpoints are bit-exact (little-endian IEEE-754, column-major arrays) so
a reloaded model resumes training on the same stream indistinguishably from
an uninterrupted run.  Traces and reports are text for inspection and
plotting; floats are written with 17 significant digits, which round-trips
every IEEE double exactly.  No format ever contains d x d data.
The byte-level layouts are documented in docs/FORMATS.md.
"""

import dataclasses
import json
import struct

import numpy as np

from .model import ConvergenceTrace, GfmModel, SolverConfig, TraceRecord

MAGIC = b"GFM1"
VERSION = 1
# magic, version u32, then d k seed batches n t_max oversamp power_iters
# max_iters as u64 and spectral_tol as f64
_HEADER = struct.Struct("<4sIQQQQQQQQQd")
TRACE_COLUMNS = ("t", "beta", "gamma", "epsilon", "alpha", "h2", "step_millis")


class CheckpointError(ValueError):
    """Base class for unreadable checkpoint files."""


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


@dataclasses.dataclass(frozen=True)
class CheckpointMeta:
    config: SolverConfig
    batches_consumed: int


def _fmt(value):
    return format(float(value), ".17g")


def save_checkpoint(model, meta, path):
    """Write model + meta to ``path``; total size is 88 + 8*d*(1+2k) bytes."""
    cfg = meta.config
    header = _HEADER.pack(MAGIC, VERSION, model.d, model.k, cfg.seed,
                          meta.batches_consumed, cfg.n, cfg.t_max,
                          cfg.init_oversampling, cfg.init_power_iters,
                          cfg.spectral_max_iters, cfg.spectral_tol)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.w.astype("<f8").tobytes())
        fh.write(np.asfortranarray(model.u).astype("<f8").tobytes(order="F"))
        fh.write(np.asfortranarray(model.v).astype("<f8").tobytes(order="F"))


def load_checkpoint(path):
    """Read a checkpoint; bad magic, version or size each raise distinctly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        if not MAGIC.startswith(blob[:4]):
            raise CheckpointMagicError(f"{path}: not a checkpoint file")
        raise CheckpointTruncatedError(f"{path}: header cut short at {len(blob)} bytes")
    (magic, version, d, k, seed, batches, n, t_max, oversamp, power_iters,
     max_iters, tol) = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: version {version}, expected {VERSION}")
    expected = _HEADER.size + 8 * d * (1 + 2 * k)
    if len(blob) < expected:
        raise CheckpointTruncatedError(
            f"{path}: expected {expected} bytes, found {len(blob)}")
    if len(blob) > expected:
        raise CheckpointError(f"{path}: {len(blob) - expected} trailing bytes")
    off = _HEADER.size
    w = np.frombuffer(blob, "<f8", d, off).copy()
    off += 8 * d
    u = np.frombuffer(blob, "<f8", d * k, off).reshape((d, k), order="F").copy()
    off += 8 * d * k
    v = np.frombuffer(blob, "<f8", d * k, off).reshape((d, k), order="F").copy()
    cfg = SolverConfig(d=d, k=k, n=n, t_max=t_max, seed=seed,
                       init_oversampling=oversamp, init_power_iters=power_iters,
                       spectral_tol=tol, spectral_max_iters=max_iters)
    return GfmModel(w=w, u=u, v=v), CheckpointMeta(config=cfg,
                                                   batches_consumed=batches)


def write_trace(trace, path):
    """Comma-separated trace: header row then one row per iteration."""
    lines = [",".join(TRACE_COLUMNS)]
    for r in trace.records:
        lines.append(",".join([str(r.t), _fmt(r.beta), _fmt(r.gamma),
                               _fmt(r.epsilon), _fmt(r.alpha), _fmt(r.h2),
                               _fmt(r.step_millis)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or tuple(lines[0].split(",")) != TRACE_COLUMNS:
        raise ValueError(f"{path}: missing or malformed trace header")
    records = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(TRACE_COLUMNS):
            raise ValueError(f"{path}: malformed trace row {ln!r}")
        records.append(TraceRecord(t=int(cells[0]), beta=float(cells[1]),
                                   gamma=float(cells[2]), epsilon=float(cells[3]),
                                   alpha=float(cells[4]), h2=float(cells[5]),
                                   step_millis=float(cells[6])))
    return ConvergenceTrace(tuple(records))


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)  # "inf"/"nan" are not valid JSON literals
    return obj


def write_report(report, path):
    """Serialize a report (dataclass, dict, or list of either) as stable JSON."""
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path):
    with open(path) as fh:
        return json.load(fh)


def save_config(cfg, path):
    """Flat key-value JSON mirroring the SolverConfig field names."""
    write_report(dataclasses.asdict(cfg), path)


def load_config(path):
    return SolverConfig(**read_report(path))
