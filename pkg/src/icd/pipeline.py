"""Builders that turn a RunConfig into data, schedules, models and trained students."""

from __future__ import annotations

import numpy as np

from .boundaries import BoundaryPlan, make_plan
from .config import RunConfig
from .data import GaussianMixture, ring_mixture
from .diffusion import Denoiser, DenoiserConfig, NoiseSchedule, TeacherConfig, make_schedule, train_teacher
from .distill import CfgDistillConfig, ConsistencyModel, DistillConfig, ICDResult, distill_cfg, train_icd
from .rng import stream
from .solver import GuidanceSchedule, OdeDirection


def mixture(cfg: RunConfig) -> GaussianMixture:
    return ring_mixture(cfg.data.k, cfg.data.radius, cfg.data.sigma)


def schedule(cfg: RunConfig) -> NoiseSchedule:
    return make_schedule(cfg.schedule.N, cfg.schedule.T_max)


def train_data(cfg: RunConfig):
    return mixture(cfg).sample(cfg.data.n_train, stream(cfg.seed, "data", "train"))


def eval_data(cfg: RunConfig):
    return mixture(cfg).sample(cfg.data.n_eval, stream(cfg.seed, "data", "eval"))


def model_config(cfg: RunConfig) -> DenoiserConfig:
    m = cfg.model
    return DenoiserConfig(cfg.data.k, 2, m.hidden, m.depth, m.time_dim, m.class_dim, m.guidance_dim)


def plan(cfg: RunConfig, m: int | None = None) -> BoundaryPlan:
    sched = schedule(cfg)
    return make_plan(sched.grid, cfg.plan.m if m is None else m, cfg.plan.tau, sched.T_max)


def guidance(cfg: RunConfig) -> GuidanceSchedule:
    g = cfg.guidance
    return GuidanceSchedule(g.mode, g.w_max, g.tau1, g.tau2)


def teacher_config(cfg: RunConfig) -> TeacherConfig:
    t = cfg.teacher
    return TeacherConfig(t.steps, t.batch, t.lr, t.lr_final, t.p_uncond, cfg.seed)


def cfg_distill_config(cfg: RunConfig) -> CfgDistillConfig:
    c = cfg.cfg
    return CfgDistillConfig(tuple(c.w_set), c.steps, c.batch, c.lr, c.lr_final, cfg.seed)


def icd_config(cfg: RunConfig, **overrides) -> DistillConfig:
    i = cfg.icd
    kw = dict(lambda_f=i.lambda_f, lambda_r=i.lambda_r, w_set=tuple(cfg.cfg.w_set), batch=i.batch,
              steps=i.steps, lr=i.lr, lr_final=i.lr_final, distance=i.distance, joint=i.joint,
              forward_consistency=i.forward_consistency, seed=cfg.seed)
    kw.update(overrides)
    return DistillConfig(**kw)


def run_teacher(cfg: RunConfig):
    x, c = train_data(cfg)
    return train_teacher(x, c, schedule(cfg), teacher_config(cfg), model_config(cfg))


def run_cfg_distill(cfg: RunConfig, teacher: Denoiser):
    x, c = train_data(cfg)
    return distill_cfg(teacher, x, c, cfg_distill_config(cfg))


def run_icd(cfg: RunConfig, guided: Denoiser, m: int | None = None, **overrides) -> ICDResult:
    x, c = train_data(cfg)
    return train_icd(guided, plan(cfg, m), x, c, icd_config(cfg, **overrides))


def students(den_cd: Denoiser, den_fcd: Denoiser, p: BoundaryPlan) -> tuple[ConsistencyModel, ConsistencyModel]:
    return ConsistencyModel(den_fcd, p, OdeDirection.FORWARD), ConsistencyModel(den_cd, p, OdeDirection.REVERSE)


def class_labels(x: np.ndarray, mix: GaussianMixture) -> np.ndarray:
    return mix.nearest_mode(x)
