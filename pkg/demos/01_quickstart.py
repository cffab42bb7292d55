"""Distill a 10-image synthetic set from the procedural benchmark and
evaluate it across architectures.

    python3 demos/01_quickstart.py [epochs]

With the default 200 epochs this takes a couple of minutes on one core.
"""
import sys

from slfd import DistillConfig, Generator, cross_arch_report, gen_procedural, run_distillation
from slfd.distill import DistillRun, default_generator_spec

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 200

train, test = gen_procedural()
print(f"benchmark: {len(train)} train / {len(test)} test images, shape {train.image_shape}")

# The generator is frozen; only its latents (and the stochastic heads) move.
gen = Generator(default_generator_spec(train.image_shape))
cfg = DistillConfig(epochs=epochs, ipc=1, seed=0)


def progress(rec):
    if rec.epoch % 50 == 0 or rec.epoch == epochs - 1:
        print(f"  epoch {rec.epoch:4d}  matching loss {rec.total_loss:.4f}")


synset, trace = run_distillation(cfg, train, gen, on_epoch=progress)

# Baseline: the images the initial latents decode to.
random_set = DistillRun.start(cfg, train, gen).synthetic_set()

for name, s in (("random latents", random_set), ("distilled", synset)):
    rep = cross_arch_report(s, test, seeds=(0, 1))
    print(f"\n{name}")
    print(rep.summary_table())
