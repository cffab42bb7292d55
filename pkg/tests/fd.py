"""Central finite-difference oracles, independent of the reverse-mode code."""
import numpy as np


def numeric_grad(f, x, h=1e-5):
    """Gradient of scalar ``f`` at array ``x`` by central differences, entrywise."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def directional(f, x, v, h=1e-5):
    """(f(x + h v) - f(x - h v)) / 2h."""
    x = np.asarray(x, dtype=np.float64)
    return (f(x + h * v) - f(x - h * v)) / (2 * h)


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), floor))
