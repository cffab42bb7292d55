"""Outer distillation loop: per-epoch matcher re-initialization, per-class
matching loss, and one SGD step on the latent features and stochastic heads.

All randomness comes from named streams keyed on (seed, epoch, class), so
any epoch can be replayed from a checkpoint without carrying RNG state.
"""
from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import diffcore as dc
from . import nets
from .data import Dataset
from .errors import FormatError, NumericalAbort
from .generator import Generator, GeneratorSpec, LatentState
from .matching import GradBundle, dm_loss, grad_match_loss, real_class_batch
from .rng import derive_seed, stream
from .stochastic import (
    DEFAULT_SAMPLES,
    StochasticHeads,
    draw_shifted_samples,
    predict_distribution,
    stochastic_loss,
)

CKPT_MAGIC = b"SLFDCKPT"
OBJECTIVES = ("DC", "DM")


@dataclass
class DistillConfig:
    epochs: int = 500
    batch_real: int = 32
    M: int = DEFAULT_SAMPLES
    rank: int = 10                 # -1 means full rank (R = N_w * C)
    lr_latent: float = 100.0       # plain SGD; gradients of a cosine loss are tiny
    lr_heads: float = 0.01
    objective: str = "DC"
    stochastic: bool = True        # False: plain cross-entropy on synthetic logits
    matcher_arch: str = nets.SEEN_ARCH
    seed: int = 0
    ipc: int = 1
    snapshot_every: int = 0
    layerwise: bool = False
    recompute_features: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.M < 1 or self.ipc < 1 or self.batch_real < 1:
            raise ValueError("epochs, M, ipc and batch_real must be >= 1")
        if self.rank < -1:
            raise ValueError("rank must be >= 0, or -1 for full rank")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.objective == "DM" and self.stochastic:
            raise ValueError("the stochastic loss is only defined for the DC objective")
        if self.matcher_arch not in nets.ARCHS:
            raise ValueError(f"unknown matcher architecture {self.matcher_arch!r}")

    def resolved_rank(self, num_blocks, num_classes):
        return num_blocks * num_classes if self.rank == -1 else self.rank

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in raw.items() if k in known})


@dataclass
class EpochRecord:
    epoch: int
    total_loss: float
    class_losses: list
    grad_norm_w: float
    grad_norm_f: float
    grad_norm_heads: float
    seconds: float
    degenerate_classes: list = field(default_factory=list)
    batch_hash: str = ""


@dataclass
class DistillTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def losses(self):
        return np.array([r.total_loss for r in self.records])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,total_loss,grad_norm_w,grad_norm_f,grad_norm_heads,seconds\n")
            for r in self.records:
                fh.write(f"{r.epoch},{r.total_loss!r},{r.grad_norm_w!r},{r.grad_norm_f!r},"
                         f"{r.grad_norm_heads!r},{r.seconds!r}\n")


def reinit_matcher(arch, in_shape, num_classes, seed, epoch):
    """Fresh matcher for one epoch; weights are a function of (seed, epoch) only."""
    return nets.build(arch, in_shape, num_classes, derive_seed(seed, "matcher", epoch))


def _norm(t):
    return float(np.sqrt(np.sum(t.data ** 2)))


def _real_grads(matcher, images, labels):
    loss = dc.cross_entropy(matcher(images), labels)
    return GradBundle(dc.grad(loss, matcher.params))


def _sgd(params, grads, lr):
    if lr == 0:
        return      # exact no-op; x - 0*g can flip the sign of a zero
    for p, g in zip(params, grads):
        p.data = p.data - lr * g.data


@dataclass
class EpochLoss:
    total: dc.Tensor              # summed over classes, differentiable w.r.t. w, f, heads
    class_losses: list
    degenerate: list
    batch_hash: str


def matching_loss(epoch, state, heads, gen, matcher, dataset, cfg, classes=None):
    """Summed per-class matching loss for one epoch, with its graph kept.

    Every random draw comes from a (seed, epoch, class) stream, so repeated
    calls with the same arguments evaluate the same function.
    """
    if cfg.recompute_features:
        # stage 0 re-derives f from w; the gradient then reaches blocks below the split
        f_used = gen.synth_features(state.w)
    else:
        f_used = state.f
    images = gen.synth_image(state.w, f_used)
    total = dc.Tensor(0.0)
    class_losses, degenerate = [], []
    batch_digest = hashlib.sha256()
    for c in (range(dataset.class_count) if classes is None else classes):
        rows = np.flatnonzero(state.labels == c)
        real_x, real_y, real_idx = real_class_batch(dataset, c, cfg.batch_real,
                                                    stream(cfg.seed, "real_batch", epoch, c))
        batch_digest.update(real_idx.astype(np.int64).tobytes())
        syn_x = dc.take(images, rows)
        if cfg.objective == "DM":
            with dc.no_grad():
                real_emb = matcher.embed(real_x)
            loss_c = dm_loss(real_emb, matcher.embed(syn_x))
            deg = False
        else:
            g_real = _real_grads(matcher, real_x, real_y)
            logits = matcher(syn_x)
            if cfg.stochastic:
                dist = predict_distribution(heads, dc.take(state.w, rows))
                shifted = draw_shifted_samples(dist, logits, cfg.M,
                                               stream(cfg.seed, "mc", epoch, c))
                syn_loss = stochastic_loss(shifted, c)
            else:
                syn_loss = dc.cross_entropy(logits, np.full(len(rows), c))
            g_syn = GradBundle(dc.grad(syn_loss, matcher.params, create_graph=True))
            loss_c, deg = grad_match_loss(g_syn, g_real, layerwise=cfg.layerwise)
        class_losses.append(loss_c.item())
        if deg:
            degenerate.append(c)
        total = dc.add(total, loss_c)
    return EpochLoss(total, class_losses, degenerate, batch_digest.hexdigest())


def distill_epoch(epoch, state, heads, gen, matcher, dataset, cfg):
    """One pass of the class loop followed by one SGD step (in place).

    Returns the epoch record. Raises NumericalAbort on a non-finite loss,
    leaving ``state`` and ``heads`` untouched.
    """
    start = time.perf_counter()
    out = matching_loss(epoch, state, heads, gen, matcher, dataset, cfg)
    total, class_losses, degenerate = out.total, out.class_losses, out.degenerate

    total_value = total.item()
    if not np.isfinite(total_value):
        record = EpochRecord(epoch, total_value, class_losses, float("nan"), float("nan"),
                             float("nan"), time.perf_counter() - start, degenerate,
                             out.batch_hash)
        raise NumericalAbort(f"non-finite loss at epoch {epoch}", record)

    head_params = heads.params if (heads is not None and cfg.stochastic) else []
    leaves = [state.w, state.f] + head_params
    grads = dc.grad(total, leaves, allow_unused=True) if total.requires_grad else \
        [dc.Tensor(np.zeros(p.shape)) for p in leaves]
    gw, gf, gh = grads[0], grads[1], grads[2:]
    if not all(np.all(np.isfinite(g.data)) for g in grads):
        record = EpochRecord(epoch, total_value, class_losses, _norm(gw), _norm(gf),
                             float(np.sqrt(sum(_norm(g) ** 2 for g in gh))),
                             time.perf_counter() - start, degenerate, out.batch_hash)
        raise NumericalAbort(f"non-finite gradient at epoch {epoch}", record)
    _sgd([state.w, state.f], [gw, gf], cfg.lr_latent)
    _sgd(head_params, gh, cfg.lr_heads)
    return EpochRecord(
        epoch=epoch,
        total_loss=total_value,
        class_losses=class_losses,
        grad_norm_w=_norm(gw),
        grad_norm_f=_norm(gf),
        grad_norm_heads=float(np.sqrt(sum(_norm(g) ** 2 for g in gh))),
        seconds=time.perf_counter() - start,
        degenerate_classes=degenerate,
        batch_hash=out.batch_hash,
    )


@dataclass
class DistillRun:
    """Everything that evolves during distillation."""

    cfg: DistillConfig
    gen: Generator
    state: LatentState
    heads: StochasticHeads
    epoch: int = 0

    @classmethod
    def start(cls, cfg, dataset, gen):
        state = gen.init_latents(dataset.class_count, cfg.ipc, derive_seed(cfg.seed, "init"))
        rank = cfg.resolved_rank(gen.spec.num_blocks, dataset.class_count)
        heads = StochasticHeads(gen.spec.style_dim, dataset.class_count, rank)
        return cls(cfg, gen, state, heads)

    def step(self, dataset):
        matcher = reinit_matcher(self.cfg.matcher_arch, dataset.image_shape,
                                 dataset.class_count, self.cfg.seed, self.epoch)
        real = _as_float(dataset)
        record = distill_epoch(self.epoch, self.state, self.heads, self.gen, matcher, real, self.cfg)
        self.epoch += 1
        return record

    def synthetic_set(self):
        with dc.no_grad():
            f = self.gen.synth_features(self.state.w) if self.cfg.recompute_features else self.state.f
            images = self.gen.synth_image(self.state.w, f).data
        num_classes = self.heads.num_classes
        return Dataset(images, self.state.labels, num_classes, "train")


class _FloatView:
    """Dataset proxy whose images are float64, converted once."""

    def __init__(self, d):
        self._d = d
        self.images = d.images.astype(np.float64)
        self.labels = d.labels
        self.class_count = d.class_count
        self.image_shape = d.image_shape

    def class_indices(self, c):
        return self._d.class_indices(c)


_float_cache = {}


def _as_float(dataset):
    key = id(dataset)
    hit = _float_cache.get(key)
    if hit is None or hit._d is not dataset:
        hit = _float_cache[key] = _FloatView(dataset)
    return hit


def run_distillation(cfg, dataset, generator, checkpoint_dir=None, resume=None,
                     on_epoch=None):
    """Run ``cfg.epochs`` epochs and synthesize the final set.

    ``generator`` may be a Generator or a GeneratorSpec. ``resume`` is a
    checkpoint path; the trace then covers only the resumed epochs.
    """
    gen = generator if isinstance(generator, Generator) else Generator(generator)
    if resume is not None:
        run = load_checkpoint(resume, gen)
        if run.cfg != cfg:
            cfg_epochs_only = DistillConfig(**{**asdict(run.cfg), "epochs": cfg.epochs,
                                               "snapshot_every": cfg.snapshot_every})
            if cfg_epochs_only != cfg:
                raise ValueError("resume config differs from the checkpoint config")
            run.cfg = cfg
    else:
        run = DistillRun.start(cfg, dataset, gen)
    trace = DistillTrace()
    while run.epoch < cfg.epochs:
        record = run.step(dataset)
        trace.records.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if checkpoint_dir is not None and cfg.snapshot_every and run.epoch % cfg.snapshot_every == 0:
            save_checkpoint(run, Path(checkpoint_dir) / f"ckpt_{run.epoch:06d}.bin")
    return run.synthetic_set(), trace


# --------------------------------------------------------------------------
# checkpoints
#
#   b"SLFDCKPT" | u32 config_len | config json (utf-8) | u32 epoch | u32 nblocks
#   per block: u16 name_len | name | u8 ndim | u32 dims[ndim] | f64 data


def _blocks(run):
    out = {"z": run.state.z, "w": run.state.w.data, "f": run.state.f.data,
           "labels": run.state.labels.astype(np.float64)}
    for name, value in run.heads.state().items():
        out["head:" + name] = value
    return out


def save_checkpoint(run, path):
    cfg = run.cfg.to_json().encode()
    blocks = _blocks(run)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<II", run.epoch, len(blocks)))
        for name, arr in blocks.items():
            key = name.encode()
            arr = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(struct.pack("<H", len(key)))
            fh.write(key)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path):
    """Parse a checkpoint into (config, epoch, {name: array})."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}")
    try:
        off = 8
        (n,) = struct.unpack_from("<I", blob, off)
        off += 4
        cfg = DistillConfig.from_json(blob[off:off + n].decode())
        off += n
        epoch, nblocks = struct.unpack_from("<II", blob, off)
        off += 8
        blocks = {}
        for _ in range(nblocks):
            (klen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + klen].decode()
            off += klen
            (ndim,) = struct.unpack_from("<B", blob, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            count = int(np.prod(shape))
            if off + 8 * count > len(blob):
                raise FormatError(f"{path}: truncated block {name!r}")
            blocks[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
            off += 8 * count
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes")
    return cfg, epoch, blocks


def load_checkpoint(path, gen):
    cfg, epoch, blocks = read_checkpoint(path)
    labels = blocks["labels"].astype(np.int64)
    state = LatentState(blocks["z"], dc.parameter(blocks["w"], "w"),
                        dc.parameter(blocks["f"], "f"), labels)
    num_classes = int(labels.max()) + 1
    rank = cfg.resolved_rank(gen.spec.num_blocks, num_classes)
    heads = StochasticHeads(gen.spec.style_dim, num_classes, rank)
    heads.load_state({k[5:]: v for k, v in blocks.items() if k.startswith("head:")})
    return DistillRun(cfg, gen, state, heads, epoch)


def default_generator_spec(image_shape):
    c, h, w = image_shape
    return GeneratorSpec(img_shape=(c, h, w), feat_shape=(8, h // 2, w // 2))
