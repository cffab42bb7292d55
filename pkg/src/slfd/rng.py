"""Named random streams derived from one root seed.

``stream(root, "real_batch", epoch, c)`` always yields the same generator for
the same arguments, independent of which other streams were used.
"""
import hashlib

import numpy as np


def _name_key(name):
    return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")


def derive_seed(root, name, *keys):
    """A 64-bit seed for the named stream, usable where an int seed is wanted."""
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, _name_key(name),
                                 *(int(k) for k in keys)])
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0])


def stream(root, name, *keys):
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, _name_key(name),
                                 *(int(k) for k in keys)])
    return np.random.default_rng(ss)
