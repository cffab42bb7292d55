"""Covariance rank ablation: rank 0 (diagonal only), 10 and full.

    python3 demos/02_rank_ablation.py [epochs] [seeds]

Every rank shares the same distillation seeds, so the real batches and the
matcher initializations are identical across ranks; only the structure of
the output covariance differs.
"""
import sys

import numpy as np

from slfd import DistillConfig, Generator, cross_arch_report, gen_procedural, run_distillation
from slfd.distill import default_generator_spec

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 150
n_seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 2

train, test = gen_procedural()
gen = Generator(default_generator_spec(train.image_shape))

for rank in (0, 10, -1):
    scores = []
    for seed in range(n_seeds):
        syn, _ = run_distillation(DistillConfig(epochs=epochs, rank=rank, seed=seed), train, gen)
        scores.append(cross_arch_report(syn, test, seeds=(seed, seed + 1000)).cross_arch)
    label = "full" if rank == -1 else str(rank)
    print(f"rank {label:>4}: cross-arch {np.mean(scores):.3f}  per seed {np.round(scores, 3)}")
