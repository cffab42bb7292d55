"""Frozen toy style generator split into two stages.

mapping:  z -> base vector -> one row per style block (W+ layout)
stage 0:  learned constant grid, modulated by blocks [0, split) -> features f
stage 1:  upsample f, modulated by blocks [split, N_w) -> 1x1 conv -> tanh image

Stage 1 consumes ``f`` directly, so the features can be optimized as free
variables next to ``w``.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import FormatError
from .rng import stream

MAGIC = b"SLFDGEN1"


@dataclass(frozen=True)
class GeneratorSpec:
    latent_dim: int = 16      # L_z
    style_dim: int = 32       # L_w
    num_blocks: int = 6       # N_w
    split_index: int = 3
    feat_shape: tuple = (8, 8, 8)
    img_shape: tuple = (1, 16, 16)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "feat_shape", tuple(int(v) for v in self.feat_shape))
        object.__setattr__(self, "img_shape", tuple(int(v) for v in self.img_shape))
        if not 1 <= self.split_index < self.num_blocks:
            raise ValueError(f"split_index must be in [1, {self.num_blocks}), got {self.split_index}")
        if self.img_shape[1:] != (2 * self.feat_shape[1], 2 * self.feat_shape[2]):
            raise ValueError(f"image size {self.img_shape[1:]} must be twice feature size "
                             f"{self.feat_shape[1:]}")

    def as_ints(self):
        return (self.latent_dim, self.style_dim, self.num_blocks, self.split_index,
                *self.feat_shape, *self.img_shape, self.seed)

    @classmethod
    def from_ints(cls, ints):
        lz, lw, nw, split, fc, fh, fw, ic, ih, iw, seed = ints
        return cls(lz, lw, nw, split, (fc, fh, fw), (ic, ih, iw), seed)


@dataclass
class LatentState:
    z: np.ndarray          # B x L_z
    w: dc.Tensor           # B x N_w x L_w, trainable
    f: dc.Tensor           # B x feat_shape, trainable
    labels: np.ndarray     # B

    @property
    def batch(self):
        return len(self.labels)


def _he(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Generator:
    """Frozen weights plus the three forward passes."""

    def __init__(self, spec, weights=None):
        self.spec = spec
        shapes = self.param_shapes(spec)
        if weights is None:
            weights = self._init_weights(spec, shapes)
        for name, shape in shapes.items():
            if weights[name].shape != shape:
                raise dc.ShapeError("generator weights", weights[name].shape, shape,
                                    detail=name)
        # frozen: plain constants, never leaves
        self.weights = {k: np.array(weights[k], dtype=np.float64) for k in shapes}
        self._t = {k: dc.Tensor(v) for k, v in self.weights.items()}

    @staticmethod
    def param_shapes(spec):
        lz, lw, nw = spec.latent_dim, spec.style_dim, spec.num_blocks
        fc = spec.feat_shape[0]
        shapes = {
            "map_w1": (lz, lw), "map_b1": (lw,),
            "map_w2": (lw, lw), "map_b2": (lw,),
            "block_a": (nw, lw, lw), "block_c": (nw, lw),
            "const": spec.feat_shape,
        }
        for b in range(nw):
            shapes[f"mod{b}_scale_w"] = (lw, fc)
            shapes[f"mod{b}_scale_b"] = (fc,)
            shapes[f"mod{b}_shift_w"] = (lw, fc)
            shapes[f"mod{b}_shift_b"] = (fc,)
            shapes[f"conv{b}_k"] = (fc, fc, 3, 3)
            shapes[f"conv{b}_b"] = (fc, 1, 1)
        shapes["out_w"] = (fc, spec.img_shape[0])
        shapes["out_b"] = (spec.img_shape[0], 1, 1)
        return shapes

    @staticmethod
    def _init_weights(spec, shapes):
        rng = stream(spec.seed, "generator")
        lz, lw, fc = spec.latent_dim, spec.style_dim, spec.feat_shape[0]
        w = {
            "map_w1": _he(rng, shapes["map_w1"], lz), "map_b1": np.zeros(lw),
            "map_w2": _he(rng, shapes["map_w2"], lw) * np.sqrt(0.5), "map_b2": np.zeros(lw),
            # blocks are perturbations of the identity so they stay related
            "block_a": np.eye(lw) + 0.3 * rng.standard_normal(shapes["block_a"]) / np.sqrt(lw),
            "block_c": 0.1 * rng.standard_normal(shapes["block_c"]),
            "const": rng.standard_normal(spec.feat_shape),
        }
        for b in range(spec.num_blocks):
            w[f"mod{b}_scale_w"] = 0.2 * rng.standard_normal((lw, fc)) / np.sqrt(lw)
            w[f"mod{b}_scale_b"] = np.ones(fc)
            w[f"mod{b}_shift_w"] = 0.2 * rng.standard_normal((lw, fc)) / np.sqrt(lw)
            w[f"mod{b}_shift_b"] = np.zeros(fc)
            w[f"conv{b}_k"] = _he(rng, (fc, fc, 3, 3), fc * 9)
            w[f"conv{b}_b"] = 0.1 * rng.standard_normal((fc, 1, 1))
        w["out_w"] = rng.standard_normal((fc, spec.img_shape[0])) / np.sqrt(fc)
        w["out_b"] = np.zeros((spec.img_shape[0], 1, 1))
        return w

    def digest(self):
        h = hashlib.sha256()
        for k in sorted(self.weights):
            h.update(k.encode())
            h.update(self.weights[k].tobytes())
        return h.hexdigest()

    # ------------------------------------------------------------------

    def map_latent(self, z):
        z = dc.as_tensor(z)
        s, t = self.spec, self._t
        if z.ndim != 2 or z.shape[1] != s.latent_dim:
            raise dc.ShapeError("map_latent", z.shape, (None, s.latent_dim))
        h = dc.relu(dc.affine(z, t["map_w1"], t["map_b1"]))
        base = dc.affine(h, t["map_w2"], t["map_b2"])           # B x L_w
        # per-block affine: w[b, k] = base[b] @ A[k] + c[k]
        base = dc.reshape(base, (z.shape[0], 1, 1, s.style_dim))
        rows = dc.matmul(base, t["block_a"])                     # B x N_w x 1 x L_w
        rows = dc.reshape(rows, (z.shape[0], s.num_blocks, s.style_dim))
        return dc.add(rows, t["block_c"])

    def _modulated_conv(self, h, w_row, b):
        t = self._t
        n, c = h.shape[0], h.shape[1]
        scale = dc.reshape(dc.affine(w_row, t[f"mod{b}_scale_w"], t[f"mod{b}_scale_b"]), (n, c, 1, 1))
        shift = dc.reshape(dc.affine(w_row, t[f"mod{b}_shift_w"], t[f"mod{b}_shift_b"]), (n, c, 1, 1))
        h = dc.add(dc.mul(h, scale), shift)
        return dc.relu(dc.add(dc.conv2d(h, t[f"conv{b}_k"]), t[f"conv{b}_b"]))

    def _check_w(self, w, op):
        s = self.spec
        if w.ndim != 3 or w.shape[1:] != (s.num_blocks, s.style_dim):
            raise dc.ShapeError(op, w.shape, (None, s.num_blocks, s.style_dim))

    def synth_features(self, w):
        w = dc.as_tensor(w)
        self._check_w(w, "synth_features")
        n = w.shape[0]
        h = dc.broadcast_to(self._t["const"], (n,) + self.spec.feat_shape)
        for b in range(self.spec.split_index):
            h = self._modulated_conv(h, dc.take(w, (slice(None), b)), b)
        return h

    def synth_image(self, w, f):
        w, f = dc.as_tensor(w), dc.as_tensor(f)
        self._check_w(w, "synth_image")
        s, t = self.spec, self._t
        if f.shape != (w.shape[0],) + s.feat_shape:
            raise dc.ShapeError("synth_image", w.shape, f.shape)
        h = dc.upsample2(f)
        for b in range(s.split_index, s.num_blocks):
            h = self._modulated_conv(h, dc.take(w, (slice(None), b)), b)
        # 1x1 conv as a matmul over the channel axis
        h = dc.transpose(h, (0, 2, 3, 1))
        out = dc.transpose(dc.matmul(h, t["out_w"]), (0, 3, 1, 2))
        return dc.tanh(dc.add(out, t["out_b"]))

    def __call__(self, w, f):
        return self.synth_image(w, f)

    def init_latents(self, num_classes, ipc, seed):
        """Fresh z ~ N(0, 1), with w and f derived from it and marked trainable."""
        rng = stream(seed, "latents")
        b = ipc * num_classes
        z = rng.standard_normal((b, self.spec.latent_dim))
        with dc.no_grad():
            w = self.map_latent(z)
            f = self.synth_features(w)
        labels = np.arange(b) % num_classes
        return LatentState(z, dc.parameter(w.data, "w"), dc.parameter(f.data, "f"), labels)


def save_generator(gen, path):
    shapes = Generator.param_shapes(gen.spec)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<11i", *gen.spec.as_ints()))
        for name in shapes:
            fh.write(np.ascontiguousarray(gen.weights[name], dtype="<f8").tobytes())


def load_generator(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}")
    if len(blob) < 8 + 44:
        raise FormatError(f"{path}: truncated header")
    spec = GeneratorSpec.from_ints(struct.unpack("<11i", blob[8:52]))
    shapes = Generator.param_shapes(spec)
    need = sum(int(np.prod(s)) for s in shapes.values()) * 8
    if len(blob) != 52 + need:
        raise FormatError(f"{path}: expected {52 + need} bytes, found {len(blob)}")
    weights, off = {}, 52
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        weights[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
    return Generator(spec, weights)
