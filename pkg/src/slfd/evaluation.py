"""Downstream evaluation: train every architecture of the pool on a synthetic
set, test on real data, aggregate over seeds.

Report CSV layout::

    arch,seed,accuracy
    <one row per (arch, seed)>
    arch,mean,std
    <one row per arch>
    cross_arch,<mean over unseen archs>

``std`` is the sample standard deviation (n - 1 denominator), the same as a
spreadsheet STDEV.
"""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import nets
from .errors import FormatError

DEFAULT_POOL = ("convnet_tiny", "mlp_small", "mlp_wide", "linear", "mlp_deep")
DEFAULT_EPOCHS = 300
DEFAULT_LR = 0.05


@dataclass(frozen=True)
class ArchPool:
    archs: tuple = DEFAULT_POOL
    seen: str = nets.SEEN_ARCH

    def __post_init__(self):
        if self.seen not in self.archs:
            raise ValueError(f"seen architecture {self.seen!r} not in pool")
        unknown = set(self.archs) - set(nets.ARCHS)
        if unknown:
            raise ValueError(f"unknown architectures {sorted(unknown)}")

    @property
    def unseen(self):
        return tuple(a for a in self.archs if a != self.seen)


def train_on_synthetic(arch, synset, seed, epochs=DEFAULT_EPOCHS, lr=DEFAULT_LR,
                       return_losses=False):
    """Full-batch cross-entropy SGD on the (small) synthetic set."""
    if len(synset) == 0:
        raise ValueError("empty synthetic set")
    model = nets.build(arch, synset.image_shape, synset.class_count, seed)
    x = synset.images.astype(np.float64)
    y = synset.labels
    losses = []
    for _ in range(epochs):
        loss = dc.cross_entropy(model(x), y)
        grads = dc.grad(loss, model.params)
        losses.append(loss.item())
        for p, g in zip(model.params, grads):
            p.data = p.data - lr * g.data
    return (model, np.array(losses)) if return_losses else model


def test_accuracy(model, testset):
    if len(testset) == 0:
        raise ValueError("empty test set")
    pred = model.predict(testset.images)
    return float(np.mean(pred == testset.labels))


@dataclass
class RunReport:
    records: list = field(default_factory=list)   # (arch, seed, accuracy)
    seen: str = nets.SEEN_ARCH

    @property
    def archs(self):
        out = []
        for a, _, _ in self.records:
            if a not in out:
                out.append(a)
        return out

    def accuracies(self, arch):
        return np.array([acc for a, _, acc in self.records if a == arch])

    def mean(self, arch):
        return float(np.mean(self.accuracies(arch)))

    def std(self, arch):
        acc = self.accuracies(arch)
        return float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0

    @property
    def cross_arch(self):
        unseen = [a for a in self.archs if a != self.seen]
        if not unseen:
            return float("nan")
        return float(np.mean([self.mean(a) for a in unseen]))

    def cross_arch_per_seed(self):
        """Mean unseen-architecture accuracy for each seed."""
        seeds = sorted({s for _, s, _ in self.records})
        return np.array([np.mean([acc for a, s, acc in self.records
                                  if s == seed and a != self.seen]) for seed in seeds])

    def to_csv(self):
        buf = io.StringIO()
        buf.write("arch,seed,accuracy\n")
        for arch, seed, acc in self.records:
            buf.write(f"{arch},{seed},{acc!r}\n")
        buf.write("arch,mean,std\n")
        for arch in self.archs:
            buf.write(f"{arch},{self.mean(arch)!r},{self.std(arch)!r}\n")
        buf.write(f"cross_arch,{self.cross_arch!r}\n")
        return buf.getvalue()

    def summary_table(self):
        lines = [f"{'arch':<14}{'mean':>10}{'std':>10}"]
        for arch in self.archs:
            tag = " (seen)" if arch == self.seen else ""
            lines.append(f"{arch:<14}{self.mean(arch):>10.4f}{self.std(arch):>10.4f}{tag}")
        lines.append(f"{'cross_arch':<14}{self.cross_arch:>10.4f}")
        return "\n".join(lines)


def parse_report_csv(text, seen=nets.SEEN_ARCH):
    """Read the raw rows back; returns (report, summary dict, cross_arch value)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["arch", "seed", "accuracy"]:
        raise FormatError("report CSV must start with 'arch,seed,accuracy'")
    report = RunReport(seen=seen)
    i = 1
    while i < len(rows) and rows[i] != ["arch", "mean", "std"]:
        arch, seed, acc = rows[i]
        report.records.append((arch, int(seed), float(acc)))
        i += 1
    if i == len(rows):
        raise FormatError("missing 'arch,mean,std' summary block")
    summary = {}
    i += 1
    while i < len(rows) and rows[i][0] != "cross_arch":
        arch, m, s = rows[i]
        summary[arch] = (float(m), float(s))
        i += 1
    if i == len(rows):
        raise FormatError("missing cross_arch line")
    return report, summary, float(rows[i][1])


def _threads():
    try:
        return max(1, int(os.environ.get("SLFD_THREADS", "1")))
    except ValueError:
        return 1


def cross_arch_report(synset, testset, pool=None, seeds=(0, 1, 2, 3, 4),
                      epochs=DEFAULT_EPOCHS, lr=DEFAULT_LR, max_workers=None):
    """Train pool x seeds models on ``synset`` and test each on ``testset``."""
    pool = pool or ArchPool()
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("cross_arch_report needs at least 2 seeds")
    jobs = [(arch, seed) for arch in pool.archs for seed in seeds]

    def run(job):
        arch, seed = job
        model = train_on_synthetic(arch, synset, seed, epochs, lr)
        return arch, seed, test_accuracy(model, testset)

    workers = max_workers or _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            records = list(ex.map(run, jobs))
    else:
        records = [run(j) for j in jobs]
    return RunReport(records, pool.seen)
