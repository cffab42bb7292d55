"""Small classifiers used both as the distillation matcher and for evaluation."""
from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .rng import stream

SEEN_ARCH = "convnet_tiny"


class Net:
    """A classifier whose parameters are diffcore leaves, in a fixed order."""

    arch = None

    def __init__(self, in_shape, num_classes):
        self.in_shape = tuple(in_shape)
        self.num_classes = num_classes
        self.names = []
        self.params = []

    def _add(self, name, data):
        p = dc.parameter(data, name)
        self.names.append(name)
        self.params.append(p)
        return p

    def num_params(self):
        return sum(p.size for p in self.params)

    def state(self):
        return {n: p.data.copy() for n, p in zip(self.names, self.params)}

    def load_state(self, state):
        for n, p in zip(self.names, self.params):
            p.data = np.array(state[n], dtype=np.float64)

    def embed(self, x):
        raise NotImplementedError

    def head(self, h):
        raise NotImplementedError

    def __call__(self, x):
        return self.head(self.embed(x))

    def predict(self, x, batch_size=512):
        """Argmax class per row; ties resolve to the lowest class index."""
        x = np.asarray(x, dtype=np.float64)
        out = []
        with dc.no_grad():
            for i in range(0, len(x), batch_size):
                out.append(np.argmax(self(x[i:i + batch_size]).data, axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _dense_init(rng, fan_in, fan_out, gain=np.sqrt(2.0)):
    return rng.standard_normal((fan_in, fan_out)) * gain / np.sqrt(fan_in)


def _out_init(rng, fan_in, fan_out):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out))


class ConvNetTiny(Net):
    """Two conv-relu-avgpool blocks, one more pool, then a linear layer."""

    arch = "convnet_tiny"

    def __init__(self, in_shape, num_classes, rng, width=4):
        super().__init__(in_shape, num_classes)
        c, h, w = self.in_shape
        if h % 8 or w % 8:
            raise dc.ShapeError("convnet_tiny", self.in_shape, detail="spatial size must divide by 8")
        self.k1 = self._add("conv1_k", rng.standard_normal((width, c, 3, 3)) * np.sqrt(2.0 / (9 * c)))
        self.b1 = self._add("conv1_b", np.zeros((width, 1, 1)))
        self.k2 = self._add("conv2_k", rng.standard_normal((width, width, 3, 3)) * np.sqrt(2.0 / (9 * width)))
        self.b2 = self._add("conv2_b", np.zeros((width, 1, 1)))
        feat = width * (h // 8) * (w // 8)
        self.fc_w = self._add("fc_w", _out_init(rng, feat, num_classes))
        self.fc_b = self._add("fc_b", np.zeros(num_classes))

    def embed(self, x):
        x = dc.as_tensor(x)
        if x.ndim != 4 or x.shape[1:] != self.in_shape:
            raise dc.ShapeError("convnet_tiny", x.shape, self.in_shape)
        h = dc.avgpool2(dc.relu(dc.add(dc.conv2d(x, self.k1), self.b1)))
        h = dc.avgpool2(dc.relu(dc.add(dc.conv2d(h, self.k2), self.b2)))
        h = dc.avgpool2(h)
        return dc.reshape(h, (h.shape[0], -1))

    def head(self, h):
        return dc.affine(h, self.fc_w, self.fc_b)


class MLP(Net):
    def __init__(self, in_shape, num_classes, rng, hidden=(), arch="mlp"):
        super().__init__(in_shape, num_classes)
        self.arch = arch
        fan_in = int(np.prod(self.in_shape))
        self.hidden = []
        for i, width in enumerate(hidden):
            self.hidden.append((self._add(f"h{i}_w", _dense_init(rng, fan_in, width)),
                                self._add(f"h{i}_b", np.zeros(width))))
            fan_in = width
        self.out_w = self._add("out_w", _out_init(rng, fan_in, num_classes))
        self.out_b = self._add("out_b", np.zeros(num_classes))

    def embed(self, x):
        x = dc.as_tensor(x)
        if x.shape[1:] != self.in_shape:
            raise dc.ShapeError(self.arch, x.shape, self.in_shape)
        h = dc.reshape(x, (x.shape[0], -1))
        for w, b in self.hidden:
            h = dc.relu(dc.affine(h, w, b))
        return h

    def head(self, h):
        return dc.affine(h, self.out_w, self.out_b)


ARCHS = {
    "convnet_tiny": lambda s, c, rng: ConvNetTiny(s, c, rng),
    "mlp_small": lambda s, c, rng: MLP(s, c, rng, (32,), "mlp_small"),
    "mlp_wide": lambda s, c, rng: MLP(s, c, rng, (128,), "mlp_wide"),
    "linear": lambda s, c, rng: MLP(s, c, rng, (), "linear"),
    "mlp_deep": lambda s, c, rng: MLP(s, c, rng, (64, 64, 64), "mlp_deep"),
}


def build(arch, in_shape, num_classes, seed):
    """Freshly initialized network; weights depend only on (arch, seed)."""
    try:
        factory = ARCHS[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}; known: {sorted(ARCHS)}") from None
    return factory(in_shape, num_classes, stream(seed, "init:" + arch))
