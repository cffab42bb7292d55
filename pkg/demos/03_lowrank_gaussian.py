"""The low-rank plus diagonal Gaussian on its own.

Checks the O(d R^2) log density against scipy's dense one, draws samples,
and shows that the shifted samples q* = q - mu + logits are centred on the
classifier logits whatever the predicted mean.
"""
import numpy as np
from scipy import stats

from slfd import StochasticHeads, draw_shifted_samples, log_prob, new_gaussian, predict_distribution, sample
from slfd.lowrank_mvn import dense_cov

rng = np.random.default_rng(0)
d, r = 8, 3
g = new_gaussian(rng.normal(size=d), rng.normal(size=d), 0.5 * rng.normal(size=(d, r)))
x = rng.normal(size=d)
dense = stats.multivariate_normal(g.mu.data, dense_cov(g)).logpdf(x)
print(f"log p(x): low-rank {log_prob(g, x):.12f}  dense {dense:.12f}")

xs = sample(g, rng, 100_000).data
err = np.abs(np.cov(xs.T) - dense_cov(g)).max()
print(f"max |sample cov - P P^T - D| over 100k draws: {err:.4f}")

# Stochastic heads map 2 style rows to a Gaussian over 2 x 4 logits.
heads = StochasticHeads(latent_dim=5, num_classes=4, rank=2)
for p in heads.params:
    p.data = 0.3 * rng.normal(size=p.shape)
dist = predict_distribution(heads, rng.normal(size=(2, 5)))
logits = np.array([2.0, -1.0, 0.5, 0.0])
q = draw_shifted_samples(dist, logits, 50_000, rng).qstar.data
print("classifier logits      ", logits)
print("mean shifted sample, b0", np.round(q.mean(axis=0)[0], 3))
print("head mean, b0 (cancels)", np.round(dist.mu.data[:4], 3))
print("sample std per class, b0", np.round(q.std(axis=0)[0], 3))
