"""Run configuration: dataclass sections and a flat ``section.key = value`` text format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .distill import DEFAULT_W_SET


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    k: int = 8
    radius: float = 4.0
    sigma: float = 0.3
    n_train: int = 8192
    n_eval: int = 2048


@dataclass
class ScheduleSection:
    N: int = 49
    T_max: int = 1000


@dataclass
class ModelSection:
    hidden: int = 128
    depth: int = 3
    time_dim: int = 32
    class_dim: int = 16
    guidance_dim: int = 8


@dataclass
class TeacherSection:
    steps: int = 6000
    batch: int = 256
    lr: float = 1e-3
    lr_final: float = 1e-4
    p_uncond: float = 0.1


@dataclass
class CfgSection:
    w_set: tuple[float, ...] = DEFAULT_W_SET
    steps: int = 6000
    batch: int = 256
    lr: float = 1e-3
    lr_final: float = 1e-4


@dataclass
class IcdSection:
    steps: int = 6000
    batch: int = 256
    lr: float = 1e-3
    lr_final: float = 1e-5
    lambda_f: float = 1.5
    lambda_r: float = 1.5
    distance: str = "l2"
    joint: bool = True
    forward_consistency: bool = True


@dataclass
class PlanSection:
    m: int = 4
    tau: float = 0.7


@dataclass
class GuidanceSection:
    mode: str = "step"
    w_max: float = 8.0
    tau1: float = 0.7
    tau2: float = 0.7


@dataclass
class EditSection:
    source: int = 0
    target: int = 1
    tol: float = 0.05


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    data: DataSection = field(default_factory=DataSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    model: ModelSection = field(default_factory=ModelSection)
    teacher: TeacherSection = field(default_factory=TeacherSection)
    cfg: CfgSection = field(default_factory=CfgSection)
    icd: IcdSection = field(default_factory=IcdSection)
    plan: PlanSection = field(default_factory=PlanSection)
    guidance: GuidanceSection = field(default_factory=GuidanceSection)
    edit: EditSection = field(default_factory=EditSection)

    def set(self, key: str, raw: str) -> None:
        """Assign ``raw`` (text) to ``key``, which is ``name`` or ``section.name``."""
        target, name = self, key
        if "." in key:
            sec, name = key.split(".", 1)
            if sec not in _sections():
                raise ConfigError(f"unknown config section {sec!r}")
            target = getattr(self, sec)
        fields = {f.name: f for f in dataclasses.fields(target)}
        if name not in fields or (target is self and name in _sections()):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(target, name)
        setattr(target, name, _coerce(current, raw, key))

    def items(self) -> list[tuple[str, object]]:
        out: list[tuple[str, object]] = [("seed", self.seed), ("out_dir", self.out_dir)]
        for sec in _sections():
            for f in dataclasses.fields(getattr(self, sec)):
                out.append((f"{sec}.{f.name}", getattr(getattr(self, sec), f.name)))
        return out

    def dumps(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.items())


def _sections() -> tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(RunConfig) if f.name not in ("seed", "out_dir"))


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(current, raw: str, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
    return raw


def parse(text: str, base: RunConfig | None = None) -> RunConfig:
    """Apply ``key = value`` lines to ``base`` (or the defaults). ``#`` starts a comment."""
    cfg = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = line.split("=", 1)
        try:
            cfg.set(key.strip(), raw)
        except ConfigError as e:
            raise ConfigError(f"line {lineno}: {e}") from None
    return cfg


def load(path: str, base: RunConfig | None = None) -> RunConfig:
    with open(path) as f:
        return parse(f.read(), base)
