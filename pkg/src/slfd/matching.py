"""Real/synthetic matching objectives: cosine gradient matching and class-mean
embedding matching."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import diffcore as dc

DEGENERATE_NORM = 1e-12


@dataclass
class GradBundle:
    """Per-parameter gradients of one matcher, plus a flattened view."""

    blocks: list

    @property
    def flat(self):
        return dc.concat([dc.reshape(b, (-1,)) for b in self.blocks])

    @property
    def size(self):
        return int(sum(b.size for b in self.blocks))

    def detached(self):
        return GradBundle([dc.Tensor(b.data) for b in self.blocks])


class MatchLoss(NamedTuple):
    value: dc.Tensor
    degenerate: bool


def real_class_batch(dataset, c, batch_size, rng):
    """Random subset of class ``c``: without replacement when the class has
    enough examples, with replacement otherwise. Returns (images, labels, indices)."""
    if not 0 <= c < dataset.class_count:
        raise ValueError(f"unknown class {c}")
    pool = dataset.class_indices(c)
    if len(pool) == 0:
        raise ValueError(f"class {c} has no examples")
    replace = len(pool) < batch_size
    idx = rng.choice(pool, size=batch_size, replace=replace)
    return dataset.images[idx].astype(np.float64), np.full(batch_size, c), idx


def _cosine_distance(a, b):
    na, nb = dc.l2norm(a), dc.l2norm(b)
    if na.item() < DEGENERATE_NORM or nb.item() < DEGENERATE_NORM:
        return dc.Tensor(1.0), True
    return dc.sub(1.0, dc.div(dc.dot(a, b), dc.mul(na, nb))), False


def grad_match_loss(g_syn, g_real, layerwise=False):
    """1 - cosine(g_syn, g_real) over the flattened gradients.

    The real side is detached. When either norm is below 1e-12 the loss is the
    constant 1.0 and ``degenerate`` is set. With ``layerwise`` the distance is
    summed per parameter block instead.
    """
    if len(g_syn.blocks) != len(g_real.blocks) or any(
            a.shape != b.shape for a, b in zip(g_syn.blocks, g_real.blocks)):
        raise dc.ShapeError("grad_match_loss", [b.shape for b in g_syn.blocks],
                            [b.shape for b in g_real.blocks])
    g_real = g_real.detached()
    if not layerwise:
        value, deg = _cosine_distance(g_syn.flat, g_real.flat)
        return MatchLoss(value, deg)
    total, any_deg = dc.Tensor(0.0), False
    for a, b in zip(g_syn.blocks, g_real.blocks):
        v, deg = _cosine_distance(dc.reshape(a, (-1,)), dc.reshape(b, (-1,)))
        total = dc.add(total, v)
        any_deg |= deg
    return MatchLoss(total, any_deg)


def dm_loss(real_embeddings, syn_embeddings):
    """Squared distance between the mean embeddings of two sets."""
    real, syn = dc.as_tensor(real_embeddings), dc.as_tensor(syn_embeddings)
    if real.shape[0] == 0 or syn.shape[0] == 0:
        raise ValueError("dm_loss needs non-empty embedding sets")
    if real.ndim != 2 or syn.ndim != 2 or real.shape[1] != syn.shape[1]:
        raise dc.ShapeError("dm_loss", real.shape, syn.shape)
    diff = dc.sub(dc.mean(real, axis=0), dc.mean(syn, axis=0))
    return dc.dot(diff, diff)
