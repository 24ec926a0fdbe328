"""Command-line entry point: ``icd <verb> [options]``.

Every verb reads a RunConfig (defaults, then ``--config`` file, then ``--set``
overrides), writes its artifacts under ``out_dir`` and exits nonzero with a
single ``error:`` line on failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys


from . import checkpoint, pipeline
from .config import ConfigError, RunConfig
from .config import load as load_config
from .distill import ConsistencyModel
from .editing import EditRequest, edit, edit_eval, frontier_csv, svg_overlay
from .inversion import decode, encode, reports_csv, roundtrip_eval, trajectory_csv
from .plots import KINDS, PlotSpec, emit_plot
from .rng import stream
from .solver import GuidanceSchedule, OdeDirection, sweep_csv, threshold_sweep

log = logging.getLogger("icd")

SWEEP_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(11))
FRONTIER_TAUS = (0.5, 0.6, 0.7, 0.8)


class PlanMismatch(ValueError):
    pass


def _write(path: str, text: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(text)
    return path


def _rows_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.out_dir, name)


def _load_pair(cfg: RunConfig, args) -> tuple[ConsistencyModel, ConsistencyModel]:
    f = checkpoint.load(args.fcd or _out(cfg, "fcd.ckpt"))
    r = checkpoint.load(args.cd or _out(cfg, "cd.ckpt"))
    if f.direction is not OdeDirection.FORWARD or r.direction is not OdeDirection.REVERSE:
        raise checkpoint.CheckpointError("expected a forward (fcd) and a reverse (cd) student checkpoint")
    if f.plan != r.plan or not checkpoint.same_schedule(f.den.schedule, r.den.schedule):
        raise PlanMismatch(f"fcd plan {f.plan.edges if f.plan else None} does not match "
                           f"cd plan {r.plan.edges if r.plan else None}")
    return (ConsistencyModel(f.den, f.plan, OdeDirection.FORWARD),
            ConsistencyModel(r.den, r.plan, OdeDirection.REVERSE))


# ----------------------------------------------------------------------------
# verbs


def cmd_train_teacher(cfg: RunConfig, args) -> None:
    den, losses = pipeline.run_teacher(cfg)
    checkpoint.save(_out(cfg, "teacher.ckpt"), den)
    _write(_out(cfg, "teacher_loss.csv"), _rows_csv(["step", "loss"], enumerate(losses)))


def cmd_distill_cfg(cfg: RunConfig, args) -> None:
    teacher = checkpoint.load(args.teacher or _out(cfg, "teacher.ckpt")).den
    if teacher.has_guidance:
        raise checkpoint.CheckpointError("teacher checkpoint already carries a guidance embedding")
    student, losses = pipeline.run_cfg_distill(cfg, teacher)
    checkpoint.save(_out(cfg, "guided.ckpt"), student)
    _write(_out(cfg, "cfg_loss.csv"), _rows_csv(["step", "loss"], enumerate(losses)))


def cmd_distill_icd(cfg: RunConfig, args) -> None:
    guided = checkpoint.load(args.guided or _out(cfg, "guided.ckpt")).den
    res = pipeline.run_icd(cfg, guided)
    checkpoint.save(_out(cfg, "cd.ckpt"), res.cd.den, res.cd.plan, OdeDirection.REVERSE)
    checkpoint.save(_out(cfg, "fcd.ckpt"), res.fcd.den, res.fcd.plan, OdeDirection.FORWARD)
    keys = ["step", "l_cd_rev", "l_cd_fwd", "l_f", "l_r", "total"]
    _write(_out(cfg, "icd_loss.csv"), _rows_csv(keys, ([h[k] for k in keys] for h in res.history)))


def cmd_invert(cfg: RunConfig, args) -> None:
    fcd, cd = _load_pair(cfg, args)
    x, c = pipeline.eval_data(cfg)
    rows = [("unguided", roundtrip_eval(fcd, cd, x, c, GuidanceSchedule.unguided()))]
    g = pipeline.guidance(cfg)
    if g != GuidanceSchedule.unguided():
        rows.append(("guided", roundtrip_eval(fcd, cd, x, c, g)))
    _write(_out(cfg, "invert.csv"), reports_csv(rows))
    n = min(64, len(x))
    z, enc_traj = encode(fcd, x[:n], c[:n])
    _, dec_traj = decode(cd, z, c[:n], GuidanceSchedule.unguided(), return_trajectory=True)
    _write(_out(cfg, "invert_trajectory.csv"), trajectory_csv(enc_traj + dec_traj[1:]))
    emit_plot(PlotSpec("trajectory", [_out(cfg, "invert_trajectory.csv")], "encode / decode"),
              _out(cfg, "invert_trajectory.svg"))


def cmd_edit(cfg: RunConfig, args) -> None:
    fcd, cd = _load_pair(cfg, args)
    mix = pipeline.mixture(cfg)
    x, _ = pipeline.eval_data(cfg)
    src, tgt = cfg.edit.source, cfg.edit.target
    for k in (src, tgt):
        if not 0 <= k < mix.n_classes:
            raise ValueError(f"class {k} outside 0..{mix.n_classes - 1}")
    g = pipeline.guidance(cfg)
    rep = edit_eval(fcd, cd, mix, x, [(src, tgt)], g, stream(cfg.seed, "edit", "baseline"), cfg.edit.tol)
    row = rep.row()
    header = ["source", "target", "guidance", "identity", "edit_success", "preservation", "baseline",
              "angular_r", "n"]
    _write(_out(cfg, "edit.csv"), _rows_csv(header, [[src, tgt, g.describe(), row["identity"],
                                                      row["edit_success"], row["preservation"],
                                                      row["baseline"], row["angular_r"], row["n"]]]))
    xs = x[mix.nearest_mode(x) == src]
    out = edit(fcd, cd, EditRequest(xs, src, tgt, g))
    _write(_out(cfg, "edit.svg"), svg_overlay(mix, xs, out))
    if rep.identity:
        print("identity edit: source and target class are equal; output is the roundtrip reconstruction")


def cmd_sweep(cfg: RunConfig, args) -> None:
    teacher = checkpoint.load(args.teacher or _out(cfg, "teacher.ckpt")).den
    x, c = pipeline.eval_data(cfg)
    n = min(len(x), args.sweep_samples)
    rows = threshold_sweep(teacher, x[:n], c[:n], SWEEP_THRESHOLDS, cfg.guidance.w_max)
    _write(_out(cfg, "sweep.csv"), sweep_csv(rows))
    have_students = (args.fcd or os.path.exists(_out(cfg, "fcd.ckpt"))) and \
        (args.cd or os.path.exists(_out(cfg, "cd.ckpt")))
    if have_students:
        fcd, cd = _load_pair(cfg, args)
        mix = pipeline.mixture(cfg)
        pairs = [(k, (k + 1) % mix.n_classes) for k in range(mix.n_classes)]
        frontier = []
        for tau in FRONTIER_TAUS:
            g = GuidanceSchedule.step(cfg.guidance.w_max, tau)
            rep = edit_eval(fcd, cd, mix, x[:n], pairs, g, stream(cfg.seed, "frontier", tau), cfg.edit.tol)
            frontier.append({"tau": tau, "w_max": cfg.guidance.w_max, **rep.row()})
        _write(_out(cfg, "frontier.csv"), frontier_csv(frontier))


def cmd_eval(cfg: RunConfig, args) -> None:
    from .acceptance import Budget, render_csv, run_all

    only = [int(k) for k in args.criteria.split(",")] if args.criteria else None
    results = run_all(Budget.from_config(cfg), only)
    for r in results:
        print(r.line())
    _write(_out(cfg, "acceptance.csv"), render_csv(results))
    if not all(r.passed for r in results):
        raise SystemExit(1)


def cmd_plot(cfg: RunConfig, args) -> None:
    if not args.input:
        raise ValueError("plot needs --input")
    out = args.output or os.path.splitext(args.input)[0] + ".svg"
    emit_plot(PlotSpec(args.kind, [args.input], args.title or ""), out)


VERBS = {
    "train-teacher": cmd_train_teacher,
    "distill-cfg": cmd_distill_cfg,
    "distill-icd": cmd_distill_icd,
    "invert": cmd_invert,
    "edit": cmd_edit,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icd", description="Invertible consistency distillation on a toy 2-D mixture.")
    p.add_argument("verb", choices=sorted(VERBS))
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key, e.g. --set plan.m=3 (repeatable)")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="global seed (overrides seed)")
    p.add_argument("--teacher", help="teacher checkpoint (default <out>/teacher.ckpt)")
    p.add_argument("--guided", help="guidance-embedded checkpoint (default <out>/guided.ckpt)")
    p.add_argument("--cd", help="reverse student checkpoint (default <out>/cd.ckpt)")
    p.add_argument("--fcd", help="forward student checkpoint (default <out>/fcd.ckpt)")
    p.add_argument("--no-preservation", action="store_true", help="distill-icd: set lambda_f = lambda_r = 0")
    p.add_argument("--source", type=int, help="edit: source class")
    p.add_argument("--target", type=int, help="edit: target class")
    p.add_argument("--sweep-samples", type=int, default=1024, help="sweep: evaluation points")
    p.add_argument("--criteria", help="eval: comma-separated criterion numbers (default all)")
    p.add_argument("--kind", choices=KINDS, default="scatter", help="plot: figure kind")
    p.add_argument("--input", help="plot: input CSV")
    p.add_argument("--output", help="plot: output SVG")
    p.add_argument("--title", help="plot: title")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        cfg.set(k.strip(), v)
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_preservation:
        cfg.icd.lambda_f = cfg.icd.lambda_r = 0.0
    if args.source is not None:
        cfg.edit.source = args.source
    if args.target is not None:
        cfg.edit.target = args.target
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        os.makedirs(cfg.out_dir, exist_ok=True)
        _write(_out(cfg, f"{args.verb}.config"), cfg.dumps())
        VERBS[args.verb](cfg, args)
    except SystemExit as e:
        return int(e.code or 0)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as e:  # one machine-parseable line per failure
        msg = " ".join(str(e).split())
        print(f"error: {type(e).__name__}: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
