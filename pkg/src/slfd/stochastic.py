"""Stochastic module: linear heads from latent rows to a low-rank Gaussian
over per-block classifier outputs, the shifted samples, and the Monte Carlo
likelihood loss built from them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .lowrank_mvn import LowRankGaussian, draw_noise, new_gaussian, sample

DEFAULT_SAMPLES = 8


class StochasticHeads:
    """Three affine maps L_w -> C (mean), L_w -> C (raw diagonal) and
    L_w -> C*R (covariance factor), applied independently to each style block.

    All heads start at zero, so the initial distribution has zero mean, no
    factor and variance softplus(0) per coordinate.
    """

    def __init__(self, latent_dim, num_classes, rank):
        if rank < 0:
            raise ValueError("rank must be >= 0")
        self.latent_dim = latent_dim
        self.num_classes = num_classes
        self.rank = rank
        z = np.zeros
        self.mean_w = dc.parameter(z((latent_dim, num_classes)), "mean_w")
        self.mean_b = dc.parameter(z(num_classes), "mean_b")
        self.diag_w = dc.parameter(z((latent_dim, num_classes)), "diag_w")
        self.diag_b = dc.parameter(z(num_classes), "diag_b")
        self.factor_w = dc.parameter(z((latent_dim, num_classes * rank)), "factor_w")
        self.factor_b = dc.parameter(z(num_classes * rank), "factor_b")

    @property
    def params(self):
        ps = [self.mean_w, self.mean_b, self.diag_w, self.diag_b]
        if self.rank:
            ps += [self.factor_w, self.factor_b]
        return ps

    def state(self):
        return {p.name: p.data.copy() for p in self.params}

    def load_state(self, state):
        for p in self.params:
            if state[p.name].shape != p.shape:
                raise dc.ShapeError("load_state", state[p.name].shape, p.shape)
            p.data = np.array(state[p.name], dtype=np.float64)


def predict_distribution(heads, w_rows):
    """Distribution for one image (w_rows: N_w x L_w) or a batch (B x N_w x L_w).

    Block outputs are stacked block-major, so d = N_w * C and the factor is
    (N_w * C) x R. Blocks share factor columns, which is where cross-block
    covariance comes from.
    """
    w_rows = dc.as_tensor(w_rows)
    if w_rows.ndim not in (2, 3) or w_rows.shape[-1] != heads.latent_dim:
        raise dc.ShapeError("predict_distribution", w_rows.shape,
                            (heads.latent_dim,), detail="last axis must be L_w")
    lead = w_rows.shape[:-2]
    n_w, c, r = w_rows.shape[-2], heads.num_classes, heads.rank
    d = n_w * c
    mu = dc.reshape(dc.affine(w_rows, heads.mean_w, heads.mean_b), lead + (d,))
    raw = dc.reshape(dc.affine(w_rows, heads.diag_w, heads.diag_b), lead + (d,))
    if r:
        factor = dc.reshape(dc.affine(w_rows, heads.factor_w, heads.factor_b), lead + (d, r))
    else:
        factor = dc.Tensor(np.zeros(lead + (d, 0)))
    return new_gaussian(mu, raw, factor)


@dataclass
class ShiftedSamples:
    qstar: dc.Tensor             # (..., M, N_w, C)
    source_mean: dc.Tensor       # (..., d)
    classifier_logits: dc.Tensor  # (..., C)

    @property
    def num_samples(self):
        return self.qstar.shape[-3]


def draw_shifted_samples(g, classifier_logits, m=DEFAULT_SAMPLES, rng=None, noise=None):
    """q*_m = q_m - mu + logits, with the logits repeated over style blocks."""
    logits = dc.as_tensor(classifier_logits)
    c = logits.shape[-1]
    if g.dim % c or logits.shape[:-1] != g.batch_shape:
        raise dc.ShapeError("draw_shifted_samples", g.mu.shape, logits.shape)
    n_w = g.dim // c
    if noise is None:
        noise = draw_noise(rng, g, m)
    q = sample(g, rng, m, noise=noise)
    lead = g.batch_shape
    q = dc.reshape(dc.sub(q, dc.reshape(g.mu, lead + (1, g.dim))), lead + (m, n_w, c))
    shifted = dc.add(q, dc.reshape(logits, lead + (1, 1, c)))
    return ShiftedSamples(shifted, g.mu, logits)


def stochastic_loss(s, class_index):
    """Monte Carlo negative log-likelihood of ``class_index``, averaged over blocks.

    Per block: log M - logsumexp_m log softmax(q*_m)[c]. Extra leading batch
    axes (several images of one class) are averaged too.
    """
    q = s.qstar
    c = q.shape[-1]
    if not 0 <= class_index < c:
        raise IndexError(f"class index {class_index} out of range for {c} classes")
    m = q.shape[-3]
    logp = dc.take(dc.log_softmax(q, axis=-1), (Ellipsis, class_index))  # (..., M, N_w)
    per_block = dc.sub(float(np.log(m)), dc.logsumexp(logp, axis=-2))
    return dc.mean(per_block)
