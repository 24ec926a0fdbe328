"""The twelve acceptance checks, runnable from pytest or ``icd eval``.

A ``Lab`` trains the shared models lazily (teacher, guidance-embedded student,
the iCD ablation runs) so each is built at most once per session.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import spearmanr

from . import autodiff as ad
from . import checkpoint
from .boundaries import PUBLISHED_EDGES, make_plan
from .config import RunConfig
from .data import GaussianMixture, ring_mixture
from .diffusion import Denoiser, DenoiserConfig, TeacherConfig, make_schedule, q_sample, train_teacher
from .distill import (CfgDistillConfig, DistillConfig, consistency_student_step, ICDResult, distill_cfg,
                      multistep_consistency_sample, train_icd)
from .editing import EditRequest, edit, edit_eval
from .inversion import decode, encode, encode_guided_ddim, latent_nll, roundtrip_eval, teacher_reference
from .rng import stream
from .solver import (AnalyticDenoiser, GuidanceSchedule, OdeDirection, cfg_epsilon, ddim_solve, ddim_step,
                     ddim_update, threshold_sweep)

GUIDED = GuidanceSchedule.step(8.0, 0.7)
CONST8 = GuidanceSchedule.constant(8.0)
UNGUIDED = GuidanceSchedule.unguided()

# (m, lambda_f, lambda_r) of the roundtrip ablation runs
RUN_NO_LOSS = (4, 0.0, 0.0)
RUN_LF = (4, 1.5, 0.0)
RUN_FULL = (4, 1.5, 1.5)
RUN_M2 = (2, 0.0, 0.0)
RUN_M1 = (1, 0.0, 0.0)


@dataclass
class Budget:
    seed: int = 0
    n_train: int = 8192
    n_eval: int = 2048
    n_nll: int = 4096
    n_sweep: int = 1024
    teacher_steps: int = 6000
    cfg_steps: int = 6000
    icd_steps: int = 6000
    icd_lr: float = 1e-3
    icd_lr_final: float = 1e-5

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Budget":
        return cls(seed=cfg.seed, n_train=cfg.data.n_train, n_eval=cfg.data.n_eval,
                   teacher_steps=cfg.teacher.steps, cfg_steps=cfg.cfg.steps, icd_steps=cfg.icd.steps,
                   icd_lr=cfg.icd.lr, icd_lr_final=cfg.icd.lr_final)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


class Lab:
    """Shared data and lazily trained models for one acceptance session."""

    def __init__(self, budget: Budget | None = None):
        self.budget = budget or Budget()
        self.mix = ring_mixture()
        self.sched = make_schedule()
        self._icd: dict[tuple, ICDResult] = {}

    @cached_property
    def train_set(self):
        return self.mix.sample(self.budget.n_train, stream(self.budget.seed, "accept", "train"))

    @cached_property
    def eval_set(self):
        return self.mix.sample(self.budget.n_eval, stream(self.budget.seed, "accept", "eval"))

    @cached_property
    def teacher(self) -> Denoiser:
        x, c = self.train_set
        den, _ = train_teacher(x, c, self.sched, TeacherConfig(steps=self.budget.teacher_steps, seed=self.budget.seed))
        return den

    @cached_property
    def guided(self) -> Denoiser:
        x, c = self.train_set
        st, _ = distill_cfg(self.teacher, x, c, CfgDistillConfig(steps=self.budget.cfg_steps, seed=self.budget.seed))
        return st

    def icd(self, run: tuple[int, float, float]) -> ICDResult:
        if run not in self._icd:
            m, lf, lr = run
            x, c = self.train_set
            cfg = DistillConfig(lambda_f=lf, lambda_r=lr, steps=self.budget.icd_steps, lr=self.budget.icd_lr,
                                lr_final=self.budget.icd_lr_final, seed=self.budget.seed)
            self._icd[run] = train_icd(self.guided, make_plan(self.sched.grid, m, 0.7), x, c, cfg)
        return self._icd[run]

    @cached_property
    def teacher_ref(self) -> float:
        x, c = self.eval_set
        return teacher_reference(self.teacher, x, c).mse

    def roundtrip(self, run, gsched: GuidanceSchedule) -> float:
        r = self.icd(run)
        x, c = self.eval_set
        return roundtrip_eval(r.fcd, r.cd, x, c, gsched).mse


# ----------------------------------------------------------------------------
# criteria


def _mlp_loss(sizes, target):
    def fn(params):
        h = params[0]
        for i in range(len(sizes) - 1):
            w, b = params[1 + 2 * i], params[2 + 2 * i]
            h = ad.linear(h, w, b)
            if i < len(sizes) - 2:
                h = ad.tanh(h)
        return ad.mean(ad.row_sum(ad.square(ad.sub(h, ad.constant(target)))))
    return fn


def _op_cases(rng: np.random.Generator):
    """(name, fn, inputs) for every differentiable op; each fn reduces to a scalar."""
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    m = rng.standard_normal((4, 5))
    r = rng.standard_normal((3, 4))
    pos = rng.uniform(0.5, 2.0, (3, 4))

    def proj(node):
        return ad.total(ad.mul(node, ad.constant(rng_r[: node.shape[0], : node.shape[1]])))

    rng_r = rng.standard_normal((6, 8))
    return [
        ("matmul", lambda p: proj(ad.matmul(p[0], p[1])), [a, m]),
        ("linear", lambda p: proj(ad.linear(p[0], p[1], p[2])), [a, m, rng.standard_normal(5)]),
        ("add", lambda p: proj(ad.add(p[0], p[1])), [a, b]),
        ("sub", lambda p: proj(ad.sub(p[0], p[1])), [a, b]),
        ("mul", lambda p: proj(ad.mul(p[0], p[1])), [a, b]),
        ("mul-scalar", lambda p: proj(ad.mul(p[0], p[1])), [a, np.array(1.7)]),
        ("scale", lambda p: proj(ad.scale(p[0], -2.5)), [a]),
        ("tanh", lambda p: proj(ad.tanh(p[0])), [a]),
        ("square", lambda p: proj(ad.square(p[0])), [a]),
        ("concat", lambda p: proj(ad.concat([p[0], p[1]], axis=1)), [a, r[:, :2]]),
        ("sqrt", lambda p: proj(ad.sqrt(p[0])), [pos]),
        ("row_sum", lambda p: ad.total(ad.mul(ad.row_sum(p[0]), ad.constant(rng_r[:3, 0]))), [a]),
        ("total", lambda p: ad.total(ad.square(p[0])), [a]),
        ("mean", lambda p: ad.mean(ad.tanh(p[0])), [a]),
    ]


def criterion_1(lab: Lab) -> CriterionResult:
    worst, where = 0.0, ""
    for seed in range(10):
        rng = stream(seed, "gradcheck")
        for name, fn, inputs in _op_cases(rng):
            err = ad.gradcheck(fn, inputs)
            if err > worst:
                worst, where = err, f"{name}/seed{seed}"
        sizes = (3, 6, 6, 2)
        x = rng.standard_normal((5, sizes[0]))
        params = [x]
        for i, o in zip(sizes[:-1], sizes[1:]):
            params += [rng.standard_normal((i, o)) / np.sqrt(i), 0.1 * rng.standard_normal(o)]
        err = ad.gradcheck(_mlp_loss(sizes, rng.standard_normal((5, 2))), params)
        if err > worst:
            worst, where = err, f"mlp/seed{seed}"
    return CriterionResult(1, "autodiff soundness", worst < 1e-4,
                           f"worst relative error {worst:.2e} at {where} (< 1e-4)", values={"worst": worst})


def _random_denoiser(sched, seed: int) -> Denoiser:
    rng = stream(seed, "random-denoiser")
    den = Denoiser(DenoiserConfig(hidden=32, depth=2), sched, rng)
    den.params["w_out"].value[...] = rng.standard_normal(den.params["w_out"].shape)
    return den


def criterion_2(lab: Lab) -> CriterionResult:
    sched = lab.sched
    den = _random_denoiser(sched, lab.budget.seed)
    rng = stream(lab.budget.seed, "identity")
    x = rng.standard_normal((16, 2))
    eps = rng.standard_normal((16, 2))
    c = rng.integers(0, 8, 16)
    ident = all(np.array_equal(ddim_step(den, x, t, t, c), x) and np.array_equal(ddim_update(sched, x, t, t, eps), x)
                for t in range(sched.T_max))
    ws = np.linspace(0.0, 20.0, 41)
    exact, curv = True, 0.0
    for t in sched.grid:
        u, k = den(x, t, None), den(x, t, c)
        outs = np.stack([cfg_epsilon(den, x, t, c, w) for w in ws])
        for w, o in zip(ws, outs):
            # w == 1 takes the single-call path, whose exact affine value is the conditional output
            want = k if w == 1 else u + w * (k - u)
            exact = exact and np.array_equal(o, want)
        scale = np.max(np.abs(outs)) + 1.0
        curv = max(curv, float(np.max(np.abs(outs[2:] - 2 * outs[1:-1] + outs[:-2]))) / scale)
    ok = ident and exact and curv < 1e-13
    detail = (f"identity at all {sched.T_max} timesteps: {ident}; cfg equals u + w(c - u) bit-exactly over "
              f"grid x {len(ws)} scales: {exact}; relative second difference {curv:.1e}")
    return CriterionResult(2, "solver identity and affinity", ok, detail)


def oracle_roundtrip(mix: GaussianMixture, N: int, n: int = 2048, seed: int = 0) -> float:
    sched = make_schedule(N)
    den = AnalyticDenoiser(mix, sched)
    x, c = mix.sample(n, stream(seed, "oracle-roundtrip"))
    z, _ = ddim_solve(den, x, OdeDirection.FORWARD, sched.grid, c, record=False)
    xr, _ = ddim_solve(den, z, OdeDirection.REVERSE, sched.grid, c, record=False)
    return float(np.mean((xr - x) ** 2))


def criterion_3(lab: Lab) -> CriterionResult:
    mix = lab.mix.component(0)
    coarse = oracle_roundtrip(mix, lab.sched.N, seed=lab.budget.seed)
    fine = oracle_roundtrip(mix, 2 * lab.sched.N, seed=lab.budget.seed)
    ratio = coarse / fine
    ok = coarse < 1e-3 and 1.2 <= ratio <= 4.0
    detail = f"{lab.sched.N}-step mse {coarse:.3e} (< 1e-3), halving ratio {ratio:.2f} (in [1.2, 4])"
    return CriterionResult(3, "oracle roundtrip", ok, detail, values={"mse": coarse, "ratio": ratio})


def criterion_4(lab: Lab) -> CriterionResult:
    expected = {
        (4, 0.8): ([259, 519, 779, 999], [19, 259, 519, 779]),
        (4, 0.7): ([259, 519, 699, 999], [19, 259, 519, 699]),
        (3, 0.7): ([339, 699, 999], [19, 339, 699]),
    }
    bad = []
    for (m, tau), (rev, fwd) in expected.items():
        p = make_plan(lab.sched.grid, m, tau)
        if p.reverse_timesteps != rev or p.forward_timesteps != fwd:
            bad.append(f"m={m},tau={tau}: {p.reverse_timesteps}/{p.forward_timesteps}")
    ok = not bad and set(expected) == set(PUBLISHED_EDGES)
    return CriterionResult(4, "boundary tables", ok, "all three tables match" if ok else "; ".join(bad))


def _students(lab: Lab):
    for run, res in sorted(lab._icd.items()):
        yield f"m{run[0]}/lf{run[1]:g}/lr{run[2]:g}", res


def criterion_5(lab: Lab) -> CriterionResult:
    if not lab._icd:
        lab.icd(RUN_FULL)
    rng = stream(lab.budget.seed, "boundary-identity")
    x = rng.standard_normal((64, 2)) * 3
    c = rng.integers(0, 8, 64)
    checked, bad = 0, []
    for name, res in _students(lab):
        for cm in (res.cd, res.fcd):
            bounds = cm.plan.forward_timesteps if cm.direction is OdeDirection.REVERSE else cm.plan.reverse_timesteps
            ws = cm.den.w_set if cm.direction is OdeDirection.REVERSE else (1.0,)
            terminal = cm.plan.edges[0] if cm.direction is OdeDirection.REVERSE else cm.plan.edges[-1]
            for s in bounds:
                for w in ws:
                    # a jump landing on its own start is the identity; the terminal edge maps to itself
                    same = (np.array_equal(cm.jump(x, s, s, c, w), x)
                            and np.array_equal(cm.jump_node(x, s, s, c, w).value, x))
                    if s == terminal:
                        same = same and np.array_equal(consistency_student_step(cm, x, s, c, w), x)
                    checked += 1
                    if not same:
                        bad.append(f"{name}/{cm.direction.value}/t={s}/w={w:g}")
    ok = not bad and checked > 0
    detail = f"{checked} boundary evaluations bit-exact" if ok else "mismatch at " + ", ".join(bad[:5])
    return CriterionResult(5, "boundary-condition identity", ok, detail)


def cfg_fidelity(teacher: Denoiser, student: Denoiser, x0, c, seed: int = 0) -> tuple[dict, float]:
    """Per-w mean over grid timesteps of the elementwise squared error, and evals per query."""
    sched = teacher.schedule
    out = {}
    evals = []
    for w in student.w_set:
        errs = []
        for t in sched.grid:
            xt = q_sample(sched, x0, t, stream(seed, "cfg-fidelity", int(t)).standard_normal(x0.shape))
            before = student.n_evals
            pred = student(xt, t, c, w)
            evals.append(student.n_evals - before)
            errs.append(np.mean((pred - cfg_epsilon(teacher, xt, t, c, w)) ** 2))
        out[w] = float(np.mean(errs))
    return out, float(np.mean(evals))


def criterion_6(lab: Lab) -> CriterionResult:
    x, c = lab.eval_set
    per_w, evals = cfg_fidelity(lab.teacher, lab.guided, x, c, lab.budget.seed)
    ok = all(v < 0.05 for v in per_w.values()) and evals == 1.0
    detail = ", ".join(f"w={w:g}: {v:.3f}" for w, v in per_w.items()) + f" (each < 0.05); {evals:g} eval/query"
    return CriterionResult(6, "CFG-distillation fidelity", ok, detail, values={str(k): v for k, v in per_w.items()})


def criterion_7(lab: Lab) -> CriterionResult:
    x, c = lab.mix.sample(lab.budget.n_nll, stream(lab.budget.seed, "accept", "nll"))
    nll = {g.describe(): latent_nll(encode_guided_ddim(lab.teacher, x, c, g)) for g in (UNGUIDED, GUIDED, CONST8)}
    a, b, d = nll.values()
    detail = " < ".join(f"{k} {v:.3f}" for k, v in nll.items())
    return CriterionResult(7, "latent NLL trend", a < b < d, detail, values=nll)


def criterion_8(lab: Lab) -> CriterionResult:
    x, c = lab.eval_set
    n = min(lab.budget.n_sweep, len(x))
    thresholds = [round(0.2 * i, 1) for i in range(6)]
    rows = threshold_sweep(lab.teacher, x[:n], c[:n], thresholds, 8.0)
    rho = float(spearmanr(thresholds, [r["mse"] for r in rows])[0])
    detail = f"Spearman rho {rho:.3f} (> 0.8); mse " + ", ".join(f"{r['threshold']:g}:{r['mse']:.3g}" for r in rows)
    return CriterionResult(8, "CFG threshold trend", rho > 0.8, detail, values={"rho": rho})


def criterion_9(lab: Lab) -> CriterionResult:
    m1 = lab.roundtrip(RUN_M1, UNGUIDED)
    m2 = lab.roundtrip(RUN_M2, UNGUIDED)
    m4 = lab.roundtrip(RUN_NO_LOSS, UNGUIDED)
    h = lab.roundtrip(RUN_NO_LOSS, CONST8)
    i = lab.roundtrip(RUN_NO_LOSS, GUIDED)
    j = lab.roundtrip(RUN_LF, GUIDED)
    k = lab.roundtrip(RUN_FULL, GUIDED)
    g = lab.roundtrip(RUN_FULL, UNGUIDED)
    ref = lab.teacher_ref
    checks = {
        "a": m4 <= 1.1 * m2 and m2 <= 1.1 * m1,
        "b": i < h,
        "c": j < i,
        "d": k < j,
        "e": g <= 2.0 * ref,
    }
    detail = (f"(a) m1 {m1:.4g} m2 {m2:.4g} m4 {m4:.4g} {'ok' if checks['a'] else 'FAIL'}; "
              f"(b) const {h:.4g} > dcfg {i:.4g} {'ok' if checks['b'] else 'FAIL'}; "
              f"(c) +Lf {j:.4g} {'ok' if checks['c'] else 'FAIL'}; "
              f"(d) +Lr {k:.4g} {'ok' if checks['d'] else 'FAIL'}; "
              f"(e) full {g:.4g} vs 2x ref {2 * ref:.4g} {'ok' if checks['e'] else 'FAIL'}")
    values = {"m1": m1, "m2": m2, "m4": m4, "H": h, "I": i, "J": j, "K": k, "G": g, "ref": ref}
    return CriterionResult(9, "roundtrip ordering", all(checks.values()), detail, values=values)


def criterion_10(lab: Lab) -> CriterionResult:
    res = lab.icd(RUN_FULL)
    x, _ = lab.eval_set
    pairs = [(k, (k + 1) % lab.mix.n_classes) for k in range(lab.mix.n_classes)]
    rep = edit_eval(res.fcd, res.cd, lab.mix, x, pairs, GUIDED, stream(lab.budget.seed, "accept", "baseline"))
    xs = x[lab.mix.nearest_mode(x) == 0]
    same = edit(res.fcd, res.cd, EditRequest(xs, 0, 0, GUIDED))
    z, _ = encode(res.fcd, xs, 0)
    exact = np.array_equal(same, decode(res.cd, z, 0, GUIDED))
    ok = rep.edit_success >= 0.9 and rep.preservation < rep.baseline and exact
    detail = (f"success {rep.edit_success:.3f} (>= 0.9); displacement {rep.preservation:.3f} < baseline "
              f"{rep.baseline:.3f}; identity edit bit-exact: {exact}")
    return CriterionResult(10, "editing properties", ok, detail, values=rep.row())


def _cli_outputs(root: str, seed: int) -> dict[str, bytes]:
    from .cli import main

    out = os.path.join(root, "run")
    common = ["--out", out, "--seed", str(seed),
              "--set", "data.n_train=512", "--set", "data.n_eval=96",
              "--set", "teacher.steps=40", "--set", "cfg.steps=20", "--set", "icd.steps=6",
              "--set", "icd.batch=64", "--set", "model.hidden=32"]
    csv_path = os.path.join(root, "points.csv")
    with open(csv_path, "w", newline="\n") as f:
        f.write("x,y,label\n0.0,1.0,0\n1.0,0.5,1\n-1.0,-0.5,2\n")
    steps = [
        ["train-teacher"], ["distill-cfg"], ["distill-icd"], ["invert"], ["edit"],
        ["edit", "--source", "2", "--target", "2"], ["sweep", "--sweep-samples", "48"],
        ["eval", "--criteria", "4"],
        ["plot", "--kind", "loss-curve", "--input", os.path.join(out, "icd_loss.csv")],
        ["plot", "--kind", "scatter", "--input", csv_path, "--output", os.path.join(out, "points.svg")],
    ]
    for s in steps:
        code = main(s + common)
        if code != 0:
            raise RuntimeError(f"icd {' '.join(s)} exited with {code}")
    files = {}
    for name in sorted(os.listdir(out)):
        if name.endswith((".csv", ".svg", ".ckpt")):
            with open(os.path.join(out, name), "rb") as f:
                files[name] = f.read()
    return files


def criterion_11(lab: Lab) -> CriterionResult:
    seed = lab.budget.seed
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        first, second = _cli_outputs(a, seed), _cli_outputs(b, seed)
    csvs = [k for k in first if k.endswith(".csv")]
    diff = [k for k in first if first[k] != second.get(k)]
    roundtrip_ok = True
    models = [(lab.teacher, None, None), (lab.guided, None, None)]
    for _, res in _students(lab):
        models += [(res.cd.den, res.cd.plan, OdeDirection.REVERSE), (res.fcd.den, res.fcd.plan, OdeDirection.FORWARD)]
    for den, plan, direction in models:
        blob = checkpoint.dumps(den, plan, direction)
        back = checkpoint.loads(blob)
        same = (set(back.den.params) == set(den.params)
                and all(np.array_equal(back.den.params[k].value, v.value) for k, v in den.params.items())
                and back.plan == plan and back.direction is direction and back.den.w_set == den.w_set
                and checkpoint.dumps(back.den, back.plan, back.direction) == blob)
        roundtrip_ok = roundtrip_ok and same
    ok = not diff and len(csvs) >= 8 and roundtrip_ok
    detail = (f"{len(csvs)} CSVs and {len(first) - len(csvs)} other artifacts over 10 verb runs, "
              f"differing: {diff or 'none'}; {len(models)} checkpoints bit-exact: {roundtrip_ok}")
    return CriterionResult(11, "determinism and persistence", ok, detail)


def criterion_12(lab: Lab) -> CriterionResult:
    one = lab.icd(RUN_M1).cd
    full = lab.icd(RUN_FULL)
    rng = stream(lab.budget.seed, "accept", "multistep")
    z = rng.standard_normal((512, 2))
    c = rng.integers(0, lab.mix.n_classes, 512)
    runs = np.stack([multistep_consistency_sample(one, z, 3, c, 1.0, stream(lab.budget.seed, "ms", r)) for r in range(4)])
    spread = float(np.mean(runs.var(axis=0)))
    single = [multistep_consistency_sample(one, z, 1, c, 1.0, stream(lab.budget.seed, "ms", r)) for r in range(2)]
    dec = [decode(full.cd, z, c, GUIDED) for _ in range(3)]
    det = all(np.array_equal(dec[0], d) for d in dec[1:]) and np.array_equal(single[0], single[1])
    ok = spread > 1e-6 and det
    detail = f"k=3 run-to-run variance {spread:.3g} (> 0); multi-boundary decode and k=1 identical: {det}"
    return CriterionResult(12, "stochastic vs deterministic sampling", ok, detail, values={"variance": spread})


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12,
}


def run_criterion(lab: Lab, number: int) -> CriterionResult:
    t0 = time.perf_counter()
    res = CRITERIA[number](lab)
    res.seconds = time.perf_counter() - t0
    return res


def run_all(budget: Budget | None = None, only=None) -> list[CriterionResult]:
    lab = Lab(budget)
    numbers = sorted(CRITERIA) if only is None else sorted(only)
    unknown = [n for n in numbers if n not in CRITERIA]
    if unknown:
        raise ValueError(f"unknown criterion number(s) {unknown}")
    # criteria 5 and 11 inspect every trained student, so they run after the training-heavy ones
    order = [n for n in numbers if n not in (5, 11)] + [n for n in numbers if n in (5, 11)]
    results = {n: run_criterion(lab, n) for n in order}
    return [results[n] for n in numbers]


def render_csv(results: list[CriterionResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["criterion", "name", "passed", "detail"])
    for r in results:
        w.writerow([r.number, r.name, int(r.passed), r.detail])
    return buf.getvalue()
