"""Multivariate normal with covariance ``P P^T + D`` (low rank plus diagonal).

Parameters are diffcore tensors so that reparameterized samples carry
gradients back to whatever produced ``mu``, ``diag`` and ``factor``. A leading
batch axis is allowed; each batch row is an independent distribution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import diffcore as dc

DIAG_FLOOR = 1e-6
DENSE_LIMIT = 4096
_LOG_2PI = float(np.log(2.0 * np.pi))


class NumericalError(ArithmeticError):
    """A factorization that should always succeed did not."""


@dataclass(frozen=True)
class LowRankGaussian:
    mu: dc.Tensor        # (..., d)
    diag: dc.Tensor      # (..., d), strictly positive
    factor: dc.Tensor    # (..., d, R)

    @property
    def dim(self):
        return self.mu.shape[-1]

    @property
    def rank(self):
        return self.factor.shape[-1]

    @property
    def batch_shape(self):
        return self.mu.shape[:-1]


def new_gaussian(mu, raw_diag, factor):
    """Build a distribution; the diagonal is ``softplus(raw_diag) + 1e-6``."""
    mu, raw_diag, factor = dc.as_tensor(mu), dc.as_tensor(raw_diag), dc.as_tensor(factor)
    d = mu.shape[-1] if mu.ndim else 0
    if (mu.ndim < 1 or raw_diag.shape != mu.shape or factor.ndim != mu.ndim + 1
            or factor.shape[:-1] != mu.shape):
        raise dc.ShapeError("new_gaussian", mu.shape, raw_diag.shape, factor.shape)
    if factor.shape[-1] > d:
        raise dc.ShapeError("new_gaussian", mu.shape, factor.shape,
                            detail="rank exceeds dimension")
    diag = dc.add(dc.softplus(raw_diag), DIAG_FLOOR)
    return LowRankGaussian(mu, diag, factor)


def draw_noise(rng, g, m):
    """Standard-normal draws for ``m`` samples: (eps_rank, eps_diag)."""
    batch = g.batch_shape
    eps_r = rng.standard_normal(batch + (m, g.rank))
    eps_d = rng.standard_normal(batch + (m, g.dim))
    return eps_r, eps_d


def sample(g, rng, m, noise=None):
    """Reparameterized samples ``mu + P eps_r + sqrt(diag) * eps_d``.

    Returns shape ``batch + (m, d)``. Pass ``noise`` (from :func:`draw_noise`)
    to reuse fixed draws.
    """
    if m < 1:
        raise ValueError("sample count must be >= 1")
    eps_r, eps_d = noise if noise is not None else draw_noise(rng, g, m)
    return dc.add(_expand(g.mu), _centered(g, eps_r, eps_d))


def _expand(v):
    # (..., d) -> (..., 1, d) so it broadcasts over the sample axis
    return dc.reshape(v, v.shape[:-1] + (1, v.shape[-1]))


def _centered(g, eps_r, eps_d):
    out = dc.mul(_expand(dc.sqrt(g.diag)), eps_d)
    if g.rank:
        out = dc.add(out, dc.matmul(dc.Tensor(eps_r), dc.swap_last(g.factor)))
    return out


def _capacitance(factor, diag):
    # I + P^T D^-1 P, Cholesky-factored
    scaled = factor / diag[:, None]
    cap = np.eye(factor.shape[1]) + factor.T @ scaled
    try:
        return linalg.cho_factor(cap, lower=True), scaled
    except linalg.LinAlgError as exc:
        raise NumericalError(f"capacitance matrix not positive definite: {exc}") from exc


def log_det(g):
    """log|P P^T + D| via the matrix determinant lemma (unbatched)."""
    p, dg = g.factor.data, g.diag.data
    total = float(np.sum(np.log(dg)))
    if p.shape[1]:
        (chol, _), _ = _capacitance(p, dg)
        total += 2.0 * float(np.sum(np.log(np.diag(chol))))
    return total


def solve(g, x):
    """``(P P^T + D)^-1 x`` via the Woodbury identity (unbatched)."""
    p, dg = g.factor.data, g.diag.data
    x = np.asarray(x, dtype=np.float64)
    y = x / dg
    if p.shape[1]:
        cf, scaled = _capacitance(p, dg)
        y = y - scaled @ linalg.cho_solve(cf, scaled.T @ x)
    return y


def log_prob(g, x):
    """Exact log density at ``x`` in O(d R^2), never forming the d x d matrix."""
    if g.mu.ndim != 1:
        raise dc.ShapeError("log_prob", g.mu.shape, detail="expects an unbatched distribution")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.dim,):
        raise dc.ShapeError("log_prob", x.shape, g.mu.shape)
    r = x - g.mu.data
    maha = float(r @ solve(g, r))
    return -0.5 * (g.dim * _LOG_2PI + log_det(g) + maha)


def dense_cov(g):
    if g.dim > DENSE_LIMIT:
        raise ValueError(f"dimension {g.dim} exceeds dense export limit {DENSE_LIMIT}")
    p = g.factor.data
    cov = np.matmul(p, np.swapaxes(p, -1, -2))
    idx = np.arange(g.dim)
    cov[..., idx, idx] += g.diag.data
    return cov
