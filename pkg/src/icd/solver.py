"""DDIM stepping, classifier-free guidance and guidance schedules.

Also hosts the closed-form posterior noise prediction for Gaussian-mixture
data, used as an exact stand-in for a converged teacher.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from .autodiff import Node
from .data import GaussianMixture
from .diffusion import NoiseSchedule


class SolverError(RuntimeError):
    def __init__(self, msg: str, step: int):
        super().__init__(f"{msg} at step {step}")
        self.step = step


class OdeDirection(enum.Enum):
    REVERSE = "reverse"  # noise -> data
    FORWARD = "forward"  # data -> noise


# ----------------------------------------------------------------------------
# guidance


@dataclass(frozen=True)
class GuidanceSchedule:
    mode: str = "step"  # constant | step | ramp
    w_max: float = 8.0
    tau1: float = 0.7
    tau2: float = 0.7

    def __post_init__(self):
        if self.mode not in ("constant", "step", "ramp"):
            raise ValueError(f"unknown guidance mode {self.mode!r}")
        if self.w_max < 1:
            raise ValueError(f"w_max must be >= 1, got {self.w_max}")
        if not (0 <= self.tau1 <= 1 and 0 <= self.tau2 <= 1) or self.tau1 > self.tau2:
            raise ValueError(f"need 0 <= tau1 <= tau2 <= 1, got {self.tau1}, {self.tau2}")
        if self.mode == "step" and self.tau1 != self.tau2:
            raise ValueError("step mode requires tau1 == tau2")

    @classmethod
    def constant(cls, w: float) -> "GuidanceSchedule":
        return cls("constant", w, 0.0, 0.0)

    @classmethod
    def step(cls, w_max: float, tau: float) -> "GuidanceSchedule":
        return cls("step", w_max, tau, tau)

    @classmethod
    def unguided(cls) -> "GuidanceSchedule":
        return cls.constant(1.0)

    def describe(self) -> str:
        if self.mode == "constant":
            return f"const(w={self.w_max:g})"
        if self.mode == "step":
            return f"step(w={self.w_max:g},tau={self.tau1:g})"
        return f"ramp(w={self.w_max:g},tau1={self.tau1:g},tau2={self.tau2:g})"


def dynamic_w(gs: GuidanceSchedule, t, T_max: int) -> float:
    """Guidance scale at timestep ``t`` (thresholds compare against t / T_max)."""
    u = float(t) / T_max
    if gs.mode == "constant":
        return gs.w_max
    if gs.mode == "step" or gs.tau1 == gs.tau2:
        return 1.0 if u > gs.tau2 else gs.w_max
    if u >= gs.tau2:
        return 1.0
    if u <= gs.tau1:
        return gs.w_max
    frac = (gs.tau2 - u) / (gs.tau2 - gs.tau1)
    return 1.0 + frac * (gs.w_max - 1.0)


def cfg_epsilon(den, x, t, c, w) -> np.ndarray:
    """eps(x,t,null) + w * (eps(x,t,c) - eps(x,t,null)); one call when w == 1.

    ``w`` may be a scalar or one scale per row of ``x``.
    """
    if np.isscalar(w) and w == 1:
        return den(x, t, c)
    if np.any(np.asarray(w) < 0):
        raise ValueError("guidance scale must be non-negative")
    uncond = den(x, t, None)
    cond = den(x, t, c)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    return uncond + w * (cond - uncond)


def guided_epsilon(den, x, t, c, w) -> np.ndarray:
    """Guided noise prediction: one call on a guidance-embedded net, else explicit CFG."""
    if getattr(den, "has_guidance", False):
        return den(x, t, c, w)
    return cfg_epsilon(den, x, t, c, w)


# ----------------------------------------------------------------------------
# DDIM


def ddim_coefficients(sched: NoiseSchedule, t, s, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (a, b) with x_s = a * x_t + b * eps; exactly (1, 0) where s == t."""
    at = np.asarray(sched.ab(t), dtype=np.float64)
    as_ = np.asarray(sched.ab(s), dtype=np.float64)
    ratio = as_ / at
    a = np.sqrt(ratio)
    b = np.sqrt(1.0 - as_) - a * np.sqrt(1.0 - at)
    return (np.broadcast_to(a.reshape(-1, 1), (n, 1)), np.broadcast_to(b.reshape(-1, 1), (n, 1)))


def ddim_update(sched: NoiseSchedule, x, t, s, eps):
    """Apply the DDIM map to given noise; graph-aware when ``eps`` is a Node."""
    if isinstance(eps, Node):
        xn = x if isinstance(x, Node) else ad.constant(x)
        a, b = ddim_coefficients(sched, t, s, xn.shape[0])
        shape = xn.shape
        return ad.add(ad.mul(xn, ad.constant(np.broadcast_to(a, shape))),
                      ad.mul(eps, ad.constant(np.broadcast_to(b, shape))))
    a, b = ddim_coefficients(sched, t, s, len(x))
    return a * x + b * eps


def ddim_step(den, x_t: np.ndarray, t, s, c=None, w=1.0) -> np.ndarray:
    if np.all(np.asarray(t) == np.asarray(s)):
        return np.array(x_t, dtype=np.float64, copy=True)
    eps = guided_epsilon(den, x_t, t, c, w)
    return ddim_update(den.schedule, x_t, t, s, eps)


def ddim_solve(den, x: np.ndarray, direction: OdeDirection, grid, c=None,
               gsched: GuidanceSchedule | None = None, record: bool = True):
    """Integrate over consecutive grid points; returns ``(x, trajectory)``.

    ``grid`` is ascending. w is taken from ``gsched`` at each step's starting
    timestep. The trajectory lists (timestep, state) pairs, including the start.
    """
    gsched = gsched or GuidanceSchedule.unguided()
    grid = [int(g) for g in grid]
    ts = grid if direction is OdeDirection.FORWARD else grid[::-1]
    x = np.array(x, dtype=np.float64, copy=True)
    traj = [(ts[0], x.copy())] if (record and ts) else []
    T_max = den.schedule.T_max
    for i, (t, s) in enumerate(zip(ts[:-1], ts[1:])):
        x = ddim_step(den, x, t, s, c, dynamic_w(gsched, t, T_max))
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite state", i)
        if record:
            traj.append((s, x.copy()))
    return x, traj


# ----------------------------------------------------------------------------
# analytic oracle


def analytic_epsilon(mix: GaussianMixture, sched: NoiseSchedule, x: np.ndarray, t, c=None) -> np.ndarray:
    """Exact E[eps | x_t = x] for mixture data; ``c`` restricts to one component.

    Each component k gives x_t ~ N(sqrt(a) mu_k, (a s_k^2 + 1 - a) I) and
    E[eps | x_t, k] = sqrt(1 - a) (x_t - sqrt(a) mu_k) / (a s_k^2 + 1 - a).
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    a = np.broadcast_to(np.asarray(sched.ab(t), dtype=np.float64), (n,))[:, None, None]
    mu = mix.means[None]  # (1, K, D)
    var = a[..., 0] * mix.sigmas[None] ** 2 + 1.0 - a[..., 0]  # (n, K)
    diff = x[:, None, :] - np.sqrt(a) * mu  # (n, K, D)
    post_eps = np.sqrt(1.0 - a) * diff / var[..., None]
    logp = np.log(mix.weights)[None] - 0.5 * (diff ** 2).sum(-1) / var - 0.5 * d * np.log(var)
    if c is not None:
        c = np.broadcast_to(np.asarray(c), (n,))
        mask = np.full_like(logp, -np.inf)
        rows = np.arange(n)
        null = c >= mix.n_classes
        mask[rows[~null], c[~null]] = 0.0
        mask[null] = 0.0
        logp = logp + mask
    r = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
    return (r[..., None] * post_eps).sum(1)


class AnalyticDenoiser:
    """Exact posterior noise prediction with the same call surface as ``Denoiser``.

    Class labels select a component; ``None`` or the null label uses the full mixture.
    """

    has_guidance = False

    def __init__(self, mix: GaussianMixture, schedule: NoiseSchedule):
        self.mix = mix
        self.schedule = schedule
        self.n_evals = 0

    @property
    def null_class(self) -> int:
        return self.mix.n_classes

    def __call__(self, x, t, c=None, w=None) -> np.ndarray:
        self.n_evals += 1
        return analytic_epsilon(self.mix, self.schedule, x, t, c)


# ----------------------------------------------------------------------------
# CFG turn-on threshold sweep


def threshold_sweep(den, x0: np.ndarray, c, thresholds, w_max: float = 8.0, grid=None) -> list[dict]:
    """Reconstruction MSE when guidance is switched on only for t / T_max <= T.

    Encoding is unguided; decoding uses w_max below each threshold and w = 1 above.
    """
    grid = den.schedule.grid if grid is None else grid
    for thr in thresholds:
        if not 0 <= thr <= 1:
            raise ValueError(f"threshold {thr} outside [0, 1]")
    z, _ = ddim_solve(den, x0, OdeDirection.FORWARD, grid, c, record=False)
    rows = []
    for thr in thresholds:
        xr, _ = ddim_solve(den, z, OdeDirection.REVERSE, grid, c, GuidanceSchedule.step(w_max, thr), record=False)
        rows.append({"threshold": float(thr), "mse": float(np.mean((xr - x0) ** 2)), "n_samples": len(x0)})
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "mse", "n_samples"])
    for r in rows:
        w.writerow([repr(r["threshold"]), repr(r["mse"]), r["n_samples"]])
    return buf.getvalue()
