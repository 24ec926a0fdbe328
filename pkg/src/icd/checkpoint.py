"""Binary checkpoints for denoisers and consistency students.

Layout (all little-endian):

    b"ICD1"                      magic
    u32                          format version
    u32 N, u32 T_max, u32 t_min  schedule grid
    f64 beta_start, f64 beta_end
    u32 count                    number of tensor blocks
    count x block:
        u32 name length, name (utf-8), u32 rank, rank x u32 dims, f64 data

Model structure, guidance scales and the boundary plan travel as ordinary
tensor blocks under the ``meta/`` prefix, so one reader handles everything.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .boundaries import BoundaryPlan
from .diffusion import Denoiser, DenoiserConfig, NoiseSchedule, make_schedule
from .solver import OdeDirection

MAGIC = b"ICD1"
FORMAT_VERSION = 1

_CFG_FIELDS = ("n_classes", "dim", "hidden", "depth", "time_dim", "class_dim", "guidance_dim")
_DIRECTIONS = {OdeDirection.REVERSE: -1.0, OdeDirection.FORWARD: 1.0}


class CheckpointError(ValueError):
    pass


class VersionMismatch(CheckpointError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"checkpoint format version {found}, reader supports {expected}")
        self.found = found
        self.expected = expected


@dataclass
class Checkpoint:
    den: Denoiser
    plan: BoundaryPlan | None = None
    direction: OdeDirection | None = None

    @property
    def kind(self) -> str:
        if self.direction is OdeDirection.REVERSE:
            return "cd"
        if self.direction is OdeDirection.FORWARD:
            return "fcd"
        return "guided" if self.den.has_guidance else "teacher"


def write_tensors(buf, tensors: dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr).tobytes())


def _read(buf, n: int) -> bytes:
    b = buf.read(n)
    if len(b) != n:
        raise CheckpointError("truncated checkpoint")
    return b


def read_tensors(buf) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read(buf, 4))
    out = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", _read(buf, 4))
        name = _read(buf, n).decode("utf-8")
        (rank,) = struct.unpack("<I", _read(buf, 4))
        dims = struct.unpack(f"<{rank}I", _read(buf, 4 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        out[name] = np.frombuffer(_read(buf, 8 * size), dtype="<f8").reshape(dims).astype(np.float64)
    return out


def dumps(den: Denoiser, plan: BoundaryPlan | None = None, direction: OdeDirection | None = None) -> bytes:
    sched = den.schedule
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<3I2d", sched.N, sched.T_max, sched.t_min, sched.beta_start, sched.beta_end))
    tensors = {"meta/model": np.array([getattr(den.cfg, f) for f in _CFG_FIELDS], dtype=np.float64)}
    if den.w_set is not None:
        tensors["meta/w_set"] = np.array(den.w_set)
    if plan is not None:
        tensors["meta/plan_grid"] = np.asarray(plan.grid, dtype=np.float64)
        tensors["meta/plan_edges"] = np.asarray(plan.edges, dtype=np.float64)
    if direction is not None:
        tensors["meta/direction"] = np.array([_DIRECTIONS[direction]])
    tensors.update(den.state())
    write_tensors(buf, tensors)
    return buf.getvalue()


def loads(data: bytes) -> Checkpoint:
    buf = io.BytesIO(data)
    if _read(buf, 4) != MAGIC:
        raise CheckpointError("not an ICD1 checkpoint")
    (version,) = struct.unpack("<I", _read(buf, 4))
    if version != FORMAT_VERSION:
        raise VersionMismatch(version, FORMAT_VERSION)
    N, T_max, t_min, b0, b1 = struct.unpack("<3I2d", _read(buf, 28))
    sched = make_schedule(N, T_max, t_min, b0, b1)
    tensors = read_tensors(buf)
    if buf.read(1):
        raise CheckpointError("trailing bytes after tensor blocks")
    try:
        cfg = DenoiserConfig(**{f: int(v) for f, v in zip(_CFG_FIELDS, tensors.pop("meta/model"))})
    except KeyError:
        raise CheckpointError("checkpoint has no model description") from None
    w_set = tensors.pop("meta/w_set", None)
    grid = tensors.pop("meta/plan_grid", None)
    edges = tensors.pop("meta/plan_edges", None)
    dflag = tensors.pop("meta/direction", None)
    den = Denoiser(cfg, sched)
    den.w_set = None if w_set is None else tuple(float(w) for w in w_set)
    den.params = {k: ad.parameter(v, k) for k, v in tensors.items()}
    plan = None
    if grid is not None:
        plan = BoundaryPlan(tuple(int(g) for g in grid), tuple(int(e) for e in edges))
    direction = None
    if dflag is not None:
        direction = OdeDirection.REVERSE if dflag[0] < 0 else OdeDirection.FORWARD
    return Checkpoint(den, plan, direction)


def save(path, den: Denoiser, plan: BoundaryPlan | None = None, direction: OdeDirection | None = None) -> None:
    path = os.fspath(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(dumps(den, plan, direction))


def load(path) -> Checkpoint:
    with open(path, "rb") as f:
        return loads(f.read())


def same_schedule(a: NoiseSchedule, b: NoiseSchedule) -> bool:
    return a.params() == b.params()
