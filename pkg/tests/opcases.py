"""First-order finite-difference cases for every differentiable op.

Shared by the unit tests (few trials) and the acceptance suite (100 trials).
"""
import numpy as np

from slfd import diffcore as dc

from fd import numeric_grad, rel_err


def _weighted(out, rng):
    # random projection so that no output coordinate cancels in the scalar
    return dc.sum(dc.mul(out, rng.standard_normal(out.shape)))


# (name, input generator, function of tensors). Inputs are drawn from [-2, 2];
# ops with restricted domains (log, sqrt, div denominators) use [0.5, 2].
def _u(rng, *shape):
    return rng.uniform(-2, 2, shape)


def _pos(rng, *shape):
    return rng.uniform(0.5, 2, shape)


OP_CASES = {
    "add": (lambda r: [_u(r, 3, 4), _u(r, 4)], lambda a, b: dc.add(a, b)),
    "sub": (lambda r: [_u(r, 3, 4), _u(r, 3, 1)], lambda a, b: dc.sub(a, b)),
    "mul": (lambda r: [_u(r, 3, 4), _u(r, 3, 4)], lambda a, b: dc.mul(a, b)),
    "div": (lambda r: [_u(r, 3, 4), _pos(r, 4)], lambda a, b: dc.div(a, b)),
    "pow": (lambda r: [_pos(r, 5)], lambda a: dc.power(a, 2.5)),
    "matmul": (lambda r: [_u(r, 2, 3, 4), _u(r, 4, 5)], lambda a, b: dc.matmul(a, b)),
    "relu": (lambda r: [_u(r, 6, 5)], lambda a: dc.relu(a)),
    "tanh": (lambda r: [_u(r, 6)], lambda a: dc.tanh(a)),
    "sigmoid": (lambda r: [_u(r, 6)], lambda a: dc.sigmoid(a)),
    "softplus": (lambda r: [_u(r, 6)], lambda a: dc.softplus(a)),
    "conv2d-3x3": (lambda r: [_u(r, 2, 2, 5, 4), _u(r, 3, 2, 3, 3)], lambda x, w: dc.conv2d(x, w)),
    "conv2d-wgrad": (lambda r: [_u(r, 2, 2, 4, 4), _u(r, 2, 3, 4, 4)],
                     lambda x, g: dc.conv2d_weight_grad(x, g)),
    "avgpool2": (lambda r: [_u(r, 2, 3, 4, 6)], lambda a: dc.avgpool2(a)),
    "upsample2": (lambda r: [_u(r, 2, 2, 3, 3)], lambda a: dc.upsample2(a)),
    "affine": (lambda r: [_u(r, 4, 3), _u(r, 3, 2), _u(r, 2)], lambda x, w, b: dc.affine(x, w, b)),
    "softmax-lastdim": (lambda r: [_u(r, 3, 5)], lambda a: dc.softmax(a)),
    "log": (lambda r: [_pos(r, 7)], lambda a: dc.log(a)),
    "exp": (lambda r: [_u(r, 7)], lambda a: dc.exp(a)),
    "sqrt": (lambda r: [_pos(r, 7)], lambda a: dc.sqrt(a)),
    "sum": (lambda r: [_u(r, 3, 4, 2)], lambda a: dc.sum(a, axis=1)),
    "mean": (lambda r: [_u(r, 3, 4)], lambda a: dc.mean(a, axis=0, keepdims=True)),
    "dot": (lambda r: [_u(r, 6), _u(r, 6)], lambda a, b: dc.dot(a, b)),
    "l2norm": (lambda r: [_u(r, 6)], lambda a: dc.l2norm(a)),
    "logsumexp-lastdim": (lambda r: [_u(r, 3, 5)], lambda a: dc.logsumexp(a)),
    "broadcast": (lambda r: [_u(r, 3, 1)], lambda a: dc.broadcast_to(a, (2, 3, 4))),
    "reshape": (lambda r: [_u(r, 3, 4)], lambda a: dc.reshape(a, (2, 6))),
    "transpose": (lambda r: [_u(r, 2, 3, 4)], lambda a: dc.transpose(a, (2, 0, 1))),
    "concat": (lambda r: [_u(r, 2, 3), _u(r, 4, 3)], lambda a, b: dc.concat([a, b], axis=0)),
    "index": (lambda r: [_u(r, 5, 3)], lambda a: dc.take(a, np.array([0, 2, 2, 4]))),
    "log_softmax": (lambda r: [_u(r, 3, 5)], lambda a: dc.log_softmax(a)),
    "cross_entropy": (lambda r: [_u(r, 4, 5)], lambda a: dc.cross_entropy(a, [0, 3, 3, 1])),
    "neg": (lambda r: [_u(r, 4)], lambda a: dc.neg(a)),
    "swap_last": (lambda r: [_u(r, 2, 3, 4)], lambda a: dc.swap_last(a)),
    "stack": (lambda r: [_u(r, 2, 3), _u(r, 2, 3)], lambda a, b: dc.stack([a, b], axis=1)),
    "flip_kernel": (lambda r: [_u(r, 3, 2, 3, 3)], lambda w: dc.flip_kernel(w)),
    "sum_to": (lambda r: [_u(r, 2, 3, 4)], lambda a: dc.sum_to(a, (3, 1))),
}



def check_first_order(name, trials, seed=0):
    """Worst relative error of reverse-mode vs central differences over ``trials``."""
    make, fn = OP_CASES[name]
    worst = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        arrays_ = make(rng)
        proj_seed = rng.integers(1 << 31)

        def scalar(*xs):
            return _weighted(fn(*xs), np.random.default_rng(proj_seed))

        leaves = [dc.parameter(a) for a in arrays_]
        grads = dc.grad(scalar(*leaves), leaves)
        for i, a in enumerate(arrays_):
            def f(xi, i=i):
                args = [dc.Tensor(xi if j == i else arrays_[j]) for j in range(len(arrays_))]
                with dc.no_grad():
                    return scalar(*args).item()
            worst = max(worst, rel_err(grads[i].data, numeric_grad(f, a)))
    return worst
