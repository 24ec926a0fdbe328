"""Deterministic encode / decode with the distilled students, and roundtrip metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .distill import ConsistencyModel
from .solver import GuidanceSchedule, OdeDirection, ddim_solve, dynamic_w

LOG_2PI = math.log(2 * math.pi)
STANDARD_NORMAL_ENTROPY = 0.5 * (1.0 + LOG_2PI)


class PipelineError(RuntimeError):
    pass


def latent_nll(z: np.ndarray) -> float:
    """Mean over samples and dimensions of 0.5 (z^2 + ln 2 pi)."""
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("latent_nll of an empty batch")
    return float(np.mean(0.5 * (z * z + LOG_2PI)))


def encode(fcd: ConsistencyModel, x0: np.ndarray, c=None):
    """Map data to latent noise with m forward jumps at w = 1; returns ``(z, trajectory)``."""
    if fcd.direction is not OdeDirection.FORWARD:
        raise ValueError("encode needs a forward consistency model")
    x = np.array(x0, dtype=np.float64, copy=True)
    t = fcd.plan.grid[0]
    traj = [(t, x.copy())]
    for t in fcd.plan.forward_timesteps:
        s = fcd.boundary(t)
        x = fcd.jump(x, t, s, c, 1.0)
        traj.append((s, x.copy()))
    if not np.all(np.isfinite(x)):
        raise PipelineError("encode produced a non-finite latent")
    return x, traj


def decode(cd: ConsistencyModel, z: np.ndarray, c=None, gsched: GuidanceSchedule | None = None,
           return_trajectory: bool = False):
    """Map latents back to data with m reverse jumps; w per jump from ``gsched``."""
    if cd.direction is not OdeDirection.REVERSE:
        raise ValueError("decode needs a reverse consistency model")
    gsched = gsched or GuidanceSchedule.unguided()
    x = np.array(z, dtype=np.float64, copy=True)
    traj = [(cd.plan.grid[-1], x.copy())]
    T_max = cd.schedule.T_max
    for t in reversed(cd.plan.reverse_timesteps):
        s = cd.boundary(t)
        x = cd.jump(x, t, s, c, dynamic_w(gsched, t, T_max))
        traj.append((s, x.copy()))
    if not np.all(np.isfinite(x)):
        raise PipelineError("decode produced a non-finite output")
    return (x, traj) if return_trajectory else x


def encode_guided_ddim(den, x0: np.ndarray, c, gsched: GuidanceSchedule, grid=None) -> np.ndarray:
    """Fine-grid DDIM encoding with a (possibly) guided teacher.

    Exists for studying what guidance does to latents; the student encode path
    is always unguided.
    """
    grid = den.schedule.grid if grid is None else grid
    z, _ = ddim_solve(den, x0, OdeDirection.FORWARD, grid, c, gsched, record=False)
    return z


def teacher_roundtrip(den, x0: np.ndarray, c, gsched: GuidanceSchedule | None = None, grid=None):
    """Reference inversion: unguided fine-grid DDIM encode, DDIM decode under ``gsched``."""
    grid = den.schedule.grid if grid is None else grid
    z, _ = ddim_solve(den, x0, OdeDirection.FORWARD, grid, c, record=False)
    xr, _ = ddim_solve(den, z, OdeDirection.REVERSE, grid, c, gsched, record=False)
    return xr, z


@dataclass
class InversionReport:
    mse: float
    nll: float
    per_sample_se: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.per_sample_se)

    def summary(self) -> dict:
        out = {"mse": self.mse, "nll": self.nll, "n": self.n}
        out.update(self.config)
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _report(x0, xr, z, config) -> InversionReport:
    if len(x0) == 0:
        return InversionReport(0.0, float("nan"), [], config)
    se = np.mean((xr - x0) ** 2, axis=1)
    return InversionReport(float(np.mean(se)), latent_nll(z), se.tolist(), config)


def roundtrip_eval(fcd: ConsistencyModel, cd: ConsistencyModel, x0: np.ndarray, c,
                   gsched: GuidanceSchedule | None = None, config: dict | None = None) -> InversionReport:
    """Encode each sample, decode it with its own label, and aggregate MSE and latent NLL."""
    if fcd.plan != cd.plan:
        raise ValueError("forward and reverse models use different boundary plans")
    gsched = gsched or GuidanceSchedule.unguided()
    config = {"m": cd.plan.m, "guidance": gsched.describe(), **(config or {})}
    if len(x0) == 0:
        return _report(x0, x0, x0, config)
    z, _ = encode(fcd, x0, c)
    xr = decode(cd, z, c, gsched)
    return _report(x0, xr, z, config)


def teacher_reference(den, x0, c, gsched: GuidanceSchedule | None = None, config: dict | None = None) -> InversionReport:
    gsched = gsched or GuidanceSchedule.unguided()
    config = {"m": "ddim-%d" % (len(den.schedule.grid) - 1), "guidance": gsched.describe(), **(config or {})}
    if len(x0) == 0:
        return _report(x0, x0, x0, config)
    xr, z = teacher_roundtrip(den, x0, c, gsched)
    return _report(x0, xr, z, config)


def reports_csv(rows: list[tuple[str, InversionReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "m", "guidance", "losses", "mse", "nll", "n"])
    for name, r in rows:
        w.writerow([name, r.config.get("m", ""), r.config.get("guidance", ""), r.config.get("losses", ""),
                    repr(r.mse), repr(r.nll), r.n])
    return buf.getvalue()


def trajectory_csv(traj) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample", "stage", "t", "x", "y"])
    for stage, (t, x) in enumerate(traj):
        for i, p in enumerate(x):
            w.writerow([i, stage, int(t), repr(float(p[0])), repr(float(p[1]))])
    return buf.getvalue()

