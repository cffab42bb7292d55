"""Sectioned ``key = value`` run configuration.

    [run]       seed, ranks
    [data]      procedural benchmark parameters, optional train/test paths
    [generator] toy generator spec, optional weights path
    [distill]   every DistillConfig field
    [eval]      pool, seen arch, seeds, epochs, lr

Unknown sections or keys raise ConfigError. Section seeds left unset inherit
the root ``[run] seed``.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from typing import Optional

from .distill import DistillConfig
from .errors import ConfigError
from .evaluation import DEFAULT_EPOCHS, DEFAULT_LR, DEFAULT_POOL
from .generator import GeneratorSpec
from . import nets


@dataclass
class RunParams:
    seed: int = 0
    ranks: str = "0,10,full"


@dataclass
class DataParams:
    num_classes: int = 10
    n_train_per_class: int = 200
    n_test_per_class: int = 100
    res: int = 16
    seed: Optional[int] = None
    jitter: int = 2
    amp_sigma: float = 0.15
    pix_sigma: float = 0.1
    train_path: str = ""
    test_path: str = ""


@dataclass
class GeneratorParams:
    latent_dim: int = 16
    style_dim: int = 32
    num_blocks: int = 6
    split_index: int = 3
    feat_channels: int = 8
    seed: Optional[int] = None
    weights: str = ""


@dataclass
class EvalParams:
    archs: str = ",".join(DEFAULT_POOL)
    seen: str = nets.SEEN_ARCH
    seeds: str = "0,1,2,3,4"
    epochs: int = DEFAULT_EPOCHS
    lr: float = DEFAULT_LR


SECTIONS = {
    "run": RunParams,
    "data": DataParams,
    "generator": GeneratorParams,
    "distill": DistillConfig,
    "eval": EvalParams,
}


@dataclass
class RunConfig:
    run: RunParams = field(default_factory=RunParams)
    data: DataParams = field(default_factory=DataParams)
    generator: GeneratorParams = field(default_factory=GeneratorParams)
    distill_raw: dict = field(default_factory=dict)
    eval: EvalParams = field(default_factory=EvalParams)
    text: str = ""

    # ------------------------------------------------------------------

    @property
    def root_seed(self):
        return self.run.seed

    def data_seed(self):
        return self.root_seed if self.data.seed is None else self.data.seed

    def distill_config(self, **overrides):
        raw = dict(self.distill_raw)
        raw.setdefault("seed", self.root_seed)
        raw.update(overrides)
        try:
            return DistillConfig(**raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[distill]: {exc}") from exc

    def generator_spec(self, image_shape):
        g = self.generator
        c, h, w = image_shape
        if h % 2 or w % 2:
            raise ConfigError(f"image size {h}x{w} must be even")
        try:
            return GeneratorSpec(g.latent_dim, g.style_dim, g.num_blocks, g.split_index,
                                 (g.feat_channels, h // 2, w // 2), (c, h, w),
                                 self.root_seed if g.seed is None else g.seed)
        except ValueError as exc:
            raise ConfigError(f"[generator]: {exc}") from exc

    def eval_seeds(self):
        return parse_int_list(self.eval.seeds, "eval.seeds")

    def eval_archs(self):
        return tuple(a.strip() for a in self.eval.archs.split(",") if a.strip())

    def ranks(self):
        return parse_ranks(self.run.ranks)

    def render(self):
        """Config text with every effective value, for the run directory."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["run"] = _strings(dataclasses.asdict(self.run))
        cp["data"] = _strings(dataclasses.asdict(self.data))
        cp["generator"] = _strings(dataclasses.asdict(self.generator))
        cp["distill"] = _strings(dataclasses.asdict(self.distill_config()))
        cp["eval"] = _strings(dataclasses.asdict(self.eval))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _strings(d):
    return {k: "" if v is None else str(v) for k, v in d.items()}


def parse_int_list(text, what):
    try:
        out = [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated integers, got {text!r}") from exc
    if not out:
        raise ConfigError(f"{what}: empty list")
    return out


def parse_ranks(text):
    """``0,10,full`` -> [0, 10, -1]; -1 is full rank."""
    out = []
    for s in str(text).split(","):
        s = s.strip().lower()
        if not s:
            continue
        if s == "full":
            out.append(-1)
            continue
        try:
            r = int(s)
        except ValueError as exc:
            raise ConfigError(f"bad rank {s!r}; use an integer >= 0 or 'full'") from exc
        if r < 0:
            raise ConfigError(f"bad rank {r}; use an integer >= 0 or 'full'")
        out.append(r)
    if not out:
        raise ConfigError("no ranks given")
    return out


def _convert(section, key, raw, ftype):
    ftype = str(ftype)
    raw = raw.strip()
    try:
        if ftype == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if ftype in ("int", "Optional[int]"):
            if ftype.startswith("Optional") and raw == "":
                return None
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {ftype}") from exc


def parse_config(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str     # keys are case-sensitive (M vs m)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    cfg = RunConfig(text=text)
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]; expected one of {sorted(SECTIONS)}")
        known = {f.name: f.type for f in fields(SECTIONS[section])}
        values = {}
        for key, raw in cp[section].items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _convert(section, key, raw, known[key])
        if section == "distill":
            cfg.distill_raw = values
        else:
            setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **values))
    cfg.distill_config()    # validate early
    return cfg


def load_config(path):
    if path is None:
        return parse_config("")
    with open(path) as fh:
        return parse_config(fh.read())
