"""Central finite-difference gradient oracle shared by the nn test modules."""
import numpy as np

from trajgraph.nn.autodiff import Tensor


def numeric_grad(f, arrays, index, eps=1e-5):
    """Central differences of scalar-valued ``f(arrays)`` w.r.t. arrays[index]."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    grad = np.zeros_like(base[index])
    flat = grad.reshape(-1)
    x = base[index].reshape(-1)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + eps
        hi = f(base)
        x[i] = orig - eps
        lo = f(base)
        x[i] = orig
        flat[i] = (hi - lo) / (2.0 * eps)
    return grad


def max_rel_error(analytic, numeric, floor=1e-8):
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(build, arrays, rtol=1e-6, eps=1e-5, floor=1e-8):
    """Compare tape gradients of ``build(tensors) -> scalar Tensor`` against
    central differences for every input array. Returns worst relative error."""
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = build(tensors)
    out.backward()

    def forward(mutated):
        ts = [Tensor(m) for m in mutated]
        return build(ts).item()

    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_grad(forward, [t.data for t in tensors], i, eps=eps)
        worst = max(worst, max_rel_error(analytic, numeric, floor))
    assert worst < rtol, f"gradient mismatch: max relative error {worst:.3e} >= {rtol}"
    return worst
