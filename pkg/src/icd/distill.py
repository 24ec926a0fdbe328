"""Guidance distillation and forward / reverse multi-boundary consistency distillation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .boundaries import BoundaryPlan
from .diffusion import Denoiser, TrainingError, lr_at, q_sample
from .rng import stream
from .solver import OdeDirection, cfg_epsilon, ddim_update, guided_epsilon

log = logging.getLogger(__name__)

DEFAULT_W_SET = (1.0, 8.0, 12.0, 16.0, 20.0)


# ----------------------------------------------------------------------------
# guidance distillation


@dataclass
class CfgDistillConfig:
    w_set: tuple[float, ...] = DEFAULT_W_SET
    steps: int = 6000
    batch: int = 256
    lr: float = 1e-3
    lr_final: float = 1e-4
    seed: int = 0


def distill_cfg(teacher: Denoiser, x0: np.ndarray, c: np.ndarray, cfg: CfgDistillConfig):
    """Train a guidance-embedded copy of ``teacher`` to match its explicit CFG output.

    Queries use data-marginal x_t at uniform t and w uniform over ``cfg.w_set``.
    Returns ``(student, losses)``.
    """
    if 1.0 not in [float(w) for w in cfg.w_set]:
        raise ValueError("w_set must contain 1")
    sched = teacher.schedule
    student = teacher.with_guidance(cfg.w_set, stream(cfg.seed, "cfg", "init"))
    ws = np.asarray(student.w_set)
    rng = stream(cfg.seed, "cfg", "batches")
    opt = ad.AdamState()
    losses: list[float] = []
    for step in range(cfg.steps):
        idx = rng.integers(0, len(x0), cfg.batch)
        t = rng.integers(0, sched.T_max, cfg.batch)
        w = ws[rng.integers(0, len(ws), cfg.batch)]
        xt = q_sample(sched, x0[idx], t, rng.standard_normal((cfg.batch, x0.shape[1])))
        target = cfg_epsilon(teacher, xt, t, c[idx], w)
        ad.zero_grads(student.params.values())
        pred = student.forward(xt, t, c[idx], w)
        loss = ad.scale(ad.total(ad.square(ad.sub(pred, ad.constant(target)))), 1.0 / cfg.batch)
        val = float(loss.value)
        if not math.isfinite(val):
            raise TrainingError("guidance distillation diverged", step)
        ad.backward(loss)
        ad.adam_step(student.state(), ad.grads_of(student.params), opt, lr_at(step, cfg.steps, cfg.lr, cfg.lr_final))
        losses.append(val)
        if step % 1000 == 0:
            log.info("cfg-distill step %d loss %.4f", step, val)
    return student, losses


# ----------------------------------------------------------------------------
# consistency models


@dataclass
class ConsistencyModel:
    """f(x_t, t, s, w) = DDIM(x_t, t, s) driven by the student's own noise prediction."""

    den: Denoiser
    plan: BoundaryPlan
    direction: OdeDirection

    @property
    def schedule(self):
        return self.den.schedule

    def boundary(self, t):
        return self.plan.boundary_for(t, self.direction)

    def jump_node(self, x, t, s, c, w=1.0) -> Node:
        eps = self.den.forward(x, t, c, w)
        return ddim_update(self.schedule, x, t, s, eps)

    def jump(self, x, t, s, c=None, w=1.0) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if np.all(np.asarray(t) == np.asarray(s)):
            return x.copy()
        return ddim_update(self.schedule, x, t, s, self.den(x, t, c, w))

    def copy(self) -> "ConsistencyModel":
        return ConsistencyModel(self.den.copy(), self.plan, self.direction)


def consistency_student_step(cm: ConsistencyModel, x_t, t, c=None, w=1.0) -> np.ndarray:
    """One jump from ``t`` to its boundary in the model's direction."""
    return cm.jump(x_t, t, cm.boundary(t), c, w)


# ----------------------------------------------------------------------------
# losses


def distance(a: Node, b: Node, kind: str = "l2", huber_c: float = 0.03, reduce: bool = True):
    """Per-sample squared L2 (or pseudo-Huber) distance, averaged over the batch."""
    diff = ad.sub(a, b)
    per = ad.row_sum(ad.square(diff))
    if kind == "pseudo_huber":
        per = ad.sub(ad.sqrt(ad.add(per, ad.constant(huber_c ** 2))), ad.constant(huber_c))
    elif kind != "l2":
        raise ValueError(f"unknown distance {kind!r}")
    if not reduce:
        return per
    return ad.mean(per)


def cd_loss(cm: ConsistencyModel, teacher: Denoiser, x0, c, n_idx, eps, w=1.0,
            kind: str = "l2", reduce: bool = True):
    """Consistency loss for one batch.

    ``n_idx`` indexes the grid point t_n of each sample. The teacher takes one
    DDIM step to the neighbour toward the model's boundary (t_{n-1} reverse,
    t_{n+1} forward); the online student at t_n is pulled toward the
    stop-gradient student output at the neighbour. Both jumps share the
    boundary of t_n's segment.
    """
    sched = cm.schedule
    grid = np.asarray(cm.plan.grid)
    n_idx = np.asarray(n_idx)
    step = -1 if cm.direction is OdeDirection.REVERSE else 1
    if np.any(n_idx + step < 0) or np.any(n_idx + step >= len(grid)):
        raise ValueError("t_n must not be the terminal grid point of the direction")
    t = grid[n_idx]
    t_adj = grid[n_idx + step]
    s = cm.boundary(t)
    xt = q_sample(sched, x0, t, eps)
    x_adj = ddim_update(sched, xt, t, t_adj, guided_epsilon(teacher, xt, t, c, w))
    with ad.no_grad():
        target = cm.jump_node(x_adj, t_adj, s, c, w)
    online = cm.jump_node(xt, t, s, c, w)
    return distance(online, ad.stop_gradient(target), kind, reduce=reduce)


def preservation_loss_forward(fcd: ConsistencyModel, cd: ConsistencyModel, x0, c, k_idx, eps,
                              kind: str = "l2", reduce: bool = True):
    """d(fCD(CD(x_s)), x_s) at upper segment edges s; gradient reaches only fCD."""
    sched = fcd.schedule
    s = np.asarray(cd.plan.reverse_timesteps)[np.asarray(k_idx)]
    lo = cd.boundary(s)
    xs = q_sample(sched, x0, s, eps)
    with ad.no_grad():
        y = cd.jump_node(xs, s, lo, c, 1.0).value
    z = fcd.jump_node(y, lo, s, c, 1.0)
    return distance(z, ad.constant(xs), kind, reduce=reduce)


def preservation_loss_reverse(cd: ConsistencyModel, fcd: ConsistencyModel, x0, c, k_idx, eps,
                              kind: str = "l2", reduce: bool = True):
    """d(CD(fCD(x_s)), x_s) at lower segment edges s; gradient reaches only CD."""
    sched = cd.schedule
    s = np.asarray(fcd.plan.forward_timesteps)[np.asarray(k_idx)]
    hi = fcd.boundary(s)
    xs = q_sample(sched, x0, s, eps)
    with ad.no_grad():
        y = fcd.jump_node(xs, s, hi, c, 1.0).value
    z = cd.jump_node(y, hi, s, c, 1.0)
    return distance(z, ad.constant(xs), kind, reduce=reduce)


# ----------------------------------------------------------------------------
# joint training


@dataclass
class DistillConfig:
    lambda_f: float = 1.5
    lambda_r: float = 1.5
    w_set: tuple[float, ...] = DEFAULT_W_SET
    batch: int = 256
    steps: int = 6000
    lr: float = 1e-3
    lr_final: float = 1e-5
    distance: str = "l2"
    target_update: str = "stop-gradient"
    joint: bool = True
    forward_consistency: bool = True  # False: fCD learns from the forward preservation loss only
    seed: int = 0

    def __post_init__(self):
        if self.lambda_f < 0 or self.lambda_r < 0:
            raise ValueError("loss weights must be non-negative")
        if self.target_update != "stop-gradient":
            raise ValueError("only the stop-gradient target is supported")


@dataclass
class LossTerms:
    l_cd_rev: Node | None = None
    l_cd_fwd: Node | None = None
    l_f: Node | None = None
    l_r: Node | None = None
    total: Node | None = None

    def row(self, step: int) -> dict:
        def val(n):
            return float(n.value) if n is not None else 0.0
        return {"step": step, "l_cd_rev": val(self.l_cd_rev), "l_cd_fwd": val(self.l_cd_fwd),
                "l_f": val(self.l_f), "l_r": val(self.l_r), "total": val(self.total)}


def icd_objective(cd: ConsistencyModel, fcd: ConsistencyModel, teacher: Denoiser,
                  x0: np.ndarray, c: np.ndarray, cfg: DistillConfig, seed: int, step: int,
                  train_cd: bool = True, train_fcd: bool = True) -> LossTerms:
    """L_CD(cd) + L_CD(fcd) + lambda_f L_f + lambda_r L_r for one step.

    Every term draws its batch from its own random stream, so switching one
    term off leaves the others bit-identical.
    """
    grid_len = len(cd.plan.grid)
    dim = x0.shape[1]
    B = cfg.batch
    ws = np.asarray(cfg.w_set, dtype=np.float64)
    terms = LossTerms()
    parts = []
    if train_cd:
        r = stream(seed, "icd", "cd_rev", step)
        idx = r.integers(0, len(x0), B)
        n = r.integers(1, grid_len, B)
        w = ws[r.integers(0, len(ws), B)]
        terms.l_cd_rev = cd_loss(cd, teacher, x0[idx], c[idx], n, r.standard_normal((B, dim)), w, cfg.distance)
        parts.append(terms.l_cd_rev)
    if train_fcd and cfg.forward_consistency:
        r = stream(seed, "icd", "cd_fwd", step)
        idx = r.integers(0, len(x0), B)
        n = r.integers(0, grid_len - 1, B)
        terms.l_cd_fwd = cd_loss(fcd, teacher, x0[idx], c[idx], n, r.standard_normal((B, dim)), 1.0, cfg.distance)
        parts.append(terms.l_cd_fwd)
    if train_fcd and cfg.lambda_f > 0:
        r = stream(seed, "icd", "pres_f", step)
        idx = r.integers(0, len(x0), B)
        k = r.integers(0, cd.plan.m, B)
        terms.l_f = preservation_loss_forward(fcd, cd, x0[idx], c[idx], k, r.standard_normal((B, dim)), cfg.distance)
        parts.append(ad.scale(terms.l_f, cfg.lambda_f))
    if train_cd and cfg.lambda_r > 0:
        r = stream(seed, "icd", "pres_r", step)
        idx = r.integers(0, len(x0), B)
        k = r.integers(0, cd.plan.m, B)
        terms.l_r = preservation_loss_reverse(cd, fcd, x0[idx], c[idx], k, r.standard_normal((B, dim)), cfg.distance)
        parts.append(ad.scale(terms.l_r, cfg.lambda_r))
    total = parts[0]
    for p in parts[1:]:
        total = ad.add(total, p)
    terms.total = total
    return terms


@dataclass
class ICDResult:
    cd: ConsistencyModel
    fcd: ConsistencyModel
    history: list[dict] = field(default_factory=list)


def _run_phase(cd, fcd, teacher, x0, c, cfg, steps, train_cd, train_fcd, history, offset, opt_cd, opt_fcd):
    for step in range(steps):
        ad.zero_grads(cd.den.params.values())
        ad.zero_grads(fcd.den.params.values())
        terms = icd_objective(cd, fcd, teacher, x0, c, cfg, cfg.seed, offset + step, train_cd, train_fcd)
        val = float(terms.total.value)
        if not math.isfinite(val):
            raise TrainingError("iCD objective diverged", offset + step)
        ad.backward(terms.total)
        lr = lr_at(step, steps, cfg.lr, cfg.lr_final)
        if train_cd:
            ad.adam_step(cd.den.state(), ad.grads_of(cd.den.params), opt_cd, lr)
        if train_fcd:
            ad.adam_step(fcd.den.state(), ad.grads_of(fcd.den.params), opt_fcd, lr)
        history.append(terms.row(offset + step))
        if step % 500 == 0:
            log.info("icd step %d total %.5f", offset + step, val)


def train_icd(teacher: Denoiser, plan: BoundaryPlan, x0: np.ndarray, c: np.ndarray, cfg: DistillConfig) -> ICDResult:
    """Distil the reverse (CD^m) and forward (fCD^m) students from ``teacher``.

    ``teacher`` should carry a guidance embedding; the reverse student trains
    over ``cfg.w_set`` and the forward student at w = 1. With ``joint=False``
    the reverse student is trained first, then the forward one against it
    (the reverse preservation term is then skipped).
    """
    if not teacher.has_guidance:
        raise ValueError("train_icd expects a guidance-distilled teacher")
    cd = ConsistencyModel(teacher.copy(), plan, OdeDirection.REVERSE)
    fcd = ConsistencyModel(teacher.copy(), plan, OdeDirection.FORWARD)
    history: list[dict] = []
    opt_cd, opt_fcd = ad.AdamState(), ad.AdamState()
    if cfg.joint:
        _run_phase(cd, fcd, teacher, x0, c, cfg, cfg.steps, True, True, history, 0, opt_cd, opt_fcd)
    else:
        if cfg.lambda_r > 0:
            log.warning("sequential training skips the reverse preservation loss")
        seq = DistillConfig(**{**cfg.__dict__, "lambda_r": 0.0})
        _run_phase(cd, fcd, teacher, x0, c, seq, cfg.steps, True, False, history, 0, opt_cd, opt_fcd)
        _run_phase(cd, fcd, teacher, x0, c, seq, cfg.steps, False, True, history, cfg.steps, opt_cd, opt_fcd)
    return ICDResult(cd, fcd, history)


# ----------------------------------------------------------------------------
# stochastic reference sampler


def multistep_consistency_sample(cm: ConsistencyModel, z: np.ndarray, k: int, c=None, w: float = 1.0,
                                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Jump to t_0, re-noise to a lower timestep, repeat ``k`` times in total.

    The intermediate timesteps are spread evenly (by grid index) below t_N.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if cm.direction is not OdeDirection.REVERSE or cm.plan.m != 1:
        raise ValueError("multistep sampling needs a single-segment reverse model")
    sched = cm.schedule
    grid = np.asarray(cm.plan.grid)
    t0, tN = int(grid[0]), int(grid[-1])
    x = cm.jump(z, tN, t0, c, w)
    if k == 1:
        return x
    if rng is None:
        raise ValueError("k > 1 needs a random generator")
    idx = np.round(np.linspace(len(grid) - 1, 0, k + 1)).astype(int)[1:-1]
    a0 = sched.ab(t0)
    for t in grid[idx]:
        ratio = sched.ab(int(t)) / a0
        xt = np.sqrt(ratio) * x + np.sqrt(1.0 - ratio) * rng.standard_normal(x.shape)
        x = cm.jump(xt, int(t), t0, c, w)
    return x
