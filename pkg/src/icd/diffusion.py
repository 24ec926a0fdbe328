"""Noise schedule, forward process, MLP noise predictor and teacher training."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Node
from .rng import stream

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, msg: str, step: int):
        super().__init__(f"{msg} at step {step}")
        self.step = step


# ----------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class NoiseSchedule:
    N: int
    T_max: int
    t_min: int
    beta_start: float
    beta_end: float
    alpha_bar: np.ndarray = field(repr=False, compare=False)
    grid: np.ndarray = field(repr=False, compare=False)

    def ab(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t >= self.T_max):
            raise IndexError(f"timestep outside schedule [0, {self.T_max - 1}]: {t}")
        return self.alpha_bar[t]

    def params(self) -> tuple:
        return (self.N, self.T_max, self.t_min, self.beta_start, self.beta_end)


def default_t_min(T_max: int) -> int:
    return int(round(19 * T_max / 1000))


def make_schedule(N: int = 49, T_max: int = 1000, t_min: int | None = None,
                  beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear-beta schedule over ``T_max`` steps and an (N+1)-point integer grid.

    The grid runs from ``t_min`` to ``T_max - 1``; with the defaults it is
    19, 39, ..., 999.
    """
    if t_min is None:
        t_min = default_t_min(T_max)
    if not (1 <= N <= T_max) or not (0 <= t_min < T_max - 1):
        raise ContractError(f"invalid schedule: N={N}, T_max={T_max}, t_min={t_min}")
    betas = np.linspace(beta_start, beta_end, T_max, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - betas)
    grid = np.round(np.linspace(t_min, T_max - 1, N + 1)).astype(np.int64)
    if np.any(np.diff(grid) <= 0):
        raise ContractError(f"N={N} too fine for integer grid on [{t_min}, {T_max - 1}]")
    alpha_bar.setflags(write=False)
    grid.setflags(write=False)
    return NoiseSchedule(N, T_max, t_min, float(beta_start), float(beta_end), alpha_bar, grid)


def _col(v, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(v, dtype=np.float64).reshape(-1, 1), (n, 1))


def q_sample(sched: NoiseSchedule, x0: np.ndarray, t, eps: np.ndarray) -> np.ndarray:
    if eps.shape != x0.shape:
        raise ValueError(f"eps shape {eps.shape} != x0 shape {x0.shape}")
    a = _col(sched.ab(t), len(x0))
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps


# ----------------------------------------------------------------------------
# denoiser


def time_embedding(t, dim: int) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


@dataclass(frozen=True)
class DenoiserConfig:
    n_classes: int = 8
    dim: int = 2
    hidden: int = 128
    depth: int = 3
    time_dim: int = 32
    class_dim: int = 16
    guidance_dim: int = 8


class Denoiser:
    """eps_theta(x, t, c[, w]) as a tanh MLP.

    Input is concat(x, sinusoidal time embedding, class embedding[, guidance
    embedding]). Row ``n_classes`` of the class table is the null condition.
    The guidance embedding is a table over ``w_set``; scales in between two
    entries interpolate linearly.
    """

    def __init__(self, cfg: DenoiserConfig, schedule: NoiseSchedule, rng: np.random.Generator | None = None,
                 w_set=None):
        self.cfg = cfg
        self.schedule = schedule
        self.w_set: tuple[float, ...] | None = None
        self.params: dict[str, Node] = {}
        self.n_evals = 0
        if rng is None:
            return
        in_dim = cfg.dim + cfg.time_dim + cfg.class_dim
        p = self.params
        p["class_emb"] = ad.parameter(rng.standard_normal((cfg.n_classes + 1, cfg.class_dim)), "class_emb")
        width = in_dim
        for i in range(cfg.depth):
            p[f"w{i}"] = ad.parameter(rng.standard_normal((width, cfg.hidden)) / math.sqrt(width), f"w{i}")
            p[f"b{i}"] = ad.parameter(np.zeros(cfg.hidden), f"b{i}")
            width = cfg.hidden
        # zero output layer: an untrained net predicts eps = 0
        p["w_out"] = ad.parameter(np.zeros((width, cfg.dim)), "w_out")
        p["b_out"] = ad.parameter(np.zeros(cfg.dim), "b_out")
        if w_set is not None:
            self._add_guidance(w_set, rng)

    # -- structure ---------------------------------------------------------

    @property
    def has_guidance(self) -> bool:
        return self.w_set is not None

    @property
    def null_class(self) -> int:
        return self.cfg.n_classes

    def _add_guidance(self, w_set, rng: np.random.Generator) -> None:
        ws = tuple(sorted(float(w) for w in w_set))
        if len(set(ws)) != len(ws):
            raise ValueError(f"duplicate guidance scales in {w_set}")
        self.w_set = ws
        self.params["guid_emb"] = ad.parameter(rng.standard_normal((len(ws), self.cfg.guidance_dim)), "guid_emb")
        # new input rows start at zero so the embedded net equals the original at every w
        w0 = self.params["w0"].value
        extra = np.zeros((self.cfg.guidance_dim, w0.shape[1]))
        self.params["w0"] = ad.parameter(np.concatenate([w0, extra], axis=0), "w0")

    def with_guidance(self, w_set, rng: np.random.Generator) -> "Denoiser":
        if self.has_guidance:
            raise ValueError("denoiser already has a guidance embedding")
        out = self.copy()
        out._add_guidance(w_set, rng)
        return out

    def copy(self) -> "Denoiser":
        out = Denoiser(self.cfg, self.schedule)
        out.w_set = self.w_set
        out.params = {k: ad.parameter(v.value.copy(), k) for k, v in self.params.items()}
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.value for k, v in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in arrays.items():
            if k not in self.params or self.params[k].shape != v.shape:
                raise ValueError(f"parameter {k!r} does not match the denoiser layout")
            self.params[k].value[...] = v

    # -- evaluation --------------------------------------------------------

    def _guidance_weights(self, w, n: int) -> np.ndarray:
        ws = np.asarray(self.w_set)
        w = np.broadcast_to(np.asarray(1.0 if w is None else w, dtype=np.float64), (n,))
        if np.any(w < ws[0] - 1e-12) or np.any(w > ws[-1] + 1e-12):
            raise ValueError(f"guidance scale outside embedded range [{ws[0]}, {ws[-1]}]: {np.unique(w)}")
        out = np.zeros((n, len(ws)))
        hi = np.clip(np.searchsorted(ws, w, side="left"), 0, len(ws) - 1)
        exact = np.isclose(ws[hi], w, rtol=0, atol=1e-12)
        lo = np.maximum(hi - 1, 0)
        frac = np.where(exact | (hi == lo), 1.0, (w - ws[lo]) / np.where(hi == lo, 1.0, ws[hi] - ws[lo]))
        rows = np.arange(n)
        out[rows, lo] += 1.0 - frac
        out[rows, hi] += frac
        return out

    def forward(self, x, t, c=None, w=None) -> Node:
        """Graph-building evaluation; returns a Node of shape x.shape."""
        self.n_evals += 1
        xv = x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)
        n = len(xv)
        t = np.broadcast_to(np.asarray(t), (n,))
        if c is None:
            c = self.null_class
        c = np.broadcast_to(np.asarray(c, dtype=np.int64), (n,))
        if np.any(c < 0) or np.any(c > self.null_class):
            raise ValueError(f"class label outside 0..{self.null_class}")
        onehot = np.zeros((n, self.cfg.n_classes + 1))
        onehot[np.arange(n), c] = 1.0
        p = self.params
        parts = [x if isinstance(x, Node) else ad.constant(xv),
                 ad.constant(time_embedding(t, self.cfg.time_dim)),
                 ad.matmul(ad.constant(onehot), p["class_emb"])]
        if self.has_guidance:
            parts.append(ad.matmul(ad.constant(self._guidance_weights(w, n)), p["guid_emb"]))
        h = ad.concat(parts, axis=1)
        for i in range(self.cfg.depth):
            h = ad.tanh(ad.linear(h, p[f"w{i}"], p[f"b{i}"]))
        return ad.linear(h, p["w_out"], p["b_out"])

    def __call__(self, x, t, c=None, w=None) -> np.ndarray:
        with ad.no_grad():
            return self.forward(x, t, c, w).value


# ----------------------------------------------------------------------------
# training


@dataclass
class TeacherConfig:
    steps: int = 6000
    batch: int = 256
    lr: float = 1e-3
    lr_final: float = 1e-4
    p_uncond: float = 0.1
    seed: int = 0


def lr_at(step: int, total: int, lr: float, lr_final: float) -> float:
    """Cosine decay from ``lr`` to ``lr_final``."""
    if total <= 1:
        return lr
    frac = step / (total - 1)
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + math.cos(math.pi * frac))


def teacher_loss(den: Denoiser, x0, c, t, eps) -> Node:
    """Mean over the batch of ||eps - eps_theta(q_sample(x0, t, eps), t, c)||^2."""
    xt = q_sample(den.schedule, x0, t, eps)
    pred = den.forward(xt, t, c)
    return ad.scale(ad.total(ad.square(ad.sub(pred, ad.constant(eps)))), 1.0 / len(x0))


def train_teacher(x0: np.ndarray, c: np.ndarray, schedule: NoiseSchedule, cfg: TeacherConfig,
                  model_cfg: DenoiserConfig | None = None, init: Denoiser | None = None):
    """Fit an eps-prediction teacher with condition dropout.

    Returns ``(denoiser, losses)`` with one loss per step.
    """
    if len(x0) == 0:
        raise ValueError("empty dataset")
    model_cfg = model_cfg or DenoiserConfig(dim=x0.shape[1])
    den = init.copy() if init is not None else Denoiser(model_cfg, schedule, stream(cfg.seed, "teacher", "init"))
    rng = stream(cfg.seed, "teacher", "batches")
    opt = ad.AdamState()
    losses: list[float] = []
    for step in range(cfg.steps):
        idx = rng.integers(0, len(x0), cfg.batch)
        t = rng.integers(0, schedule.T_max, cfg.batch)
        eps = rng.standard_normal((cfg.batch, x0.shape[1]))
        drop = rng.random(cfg.batch) < cfg.p_uncond
        cb = np.where(drop, den.null_class, c[idx])
        ad.zero_grads(den.params.values())
        loss = teacher_loss(den, x0[idx], cb, t, eps)
        val = float(loss.value)
        if not math.isfinite(val):
            raise TrainingError("teacher loss diverged", step)
        ad.backward(loss)
        ad.adam_step(den.state(), ad.grads_of(den.params), opt, lr_at(step, cfg.steps, cfg.lr, cfg.lr_final))
        losses.append(val)
        if step % 1000 == 0:
            log.info("teacher step %d loss %.4f", step, val)
    return den, losses


def teacher_loss_at_init(x0, c, schedule, cfg: TeacherConfig, model_cfg: DenoiserConfig | None = None) -> float:
    """Loss of the freshly initialised (zero-output) net on one batch."""
    den, _ = train_teacher(x0, c, schedule, TeacherConfig(**{**cfg.__dict__, "steps": 0}), model_cfg)
    rng = stream(cfg.seed, "teacher", "init-batch")
    idx = rng.integers(0, len(x0), cfg.batch)
    t = rng.integers(0, schedule.T_max, cfg.batch)
    eps = rng.standard_normal((cfg.batch, x0.shape[1]))
    with ad.no_grad():
        return float(teacher_loss(den, x0[idx], c[idx], t, eps).value)
