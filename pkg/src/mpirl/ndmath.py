"""Dense numeric core: small MLPs with hand-written reverse-mode gradients,
Adam, stable softmax/log-sum-exp, smooth-L1, and a finite-difference checker.

Everything is float64 and functional: no function mutates its inputs.
Matrices are plain 2-D numpy arrays in row-major order.
"""

import numpy as np
from dataclasses import dataclass, replace


class ShapeError(ValueError):
    """Input dimensions do not match what the operation expects."""


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

@dataclass
class Mlp:
    """Feedforward net with tanh hidden layers and a linear output layer.

    weights[l] has shape (layer_sizes[l], layer_sizes[l+1]); biases[l] has
    shape (layer_sizes[l+1],).
    """
    layer_sizes: list
    weights: list
    biases: list

    @property
    def n_layers(self):
        return len(self.weights)

    def copy(self):
        return Mlp(list(self.layer_sizes),
                   [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])


def mlp_init(layer_sizes, rng):
    """Glorot-uniform initialized Mlp (biases zero)."""
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return Mlp(list(layer_sizes), weights, biases)


def mlp_forward(net, x):
    """Evaluate the net on a single input vector or a batch of row vectors.

    Returns (output, cache). The cache holds every layer input needed by
    mlp_backward and must not outlive a mutation of the net.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    if h.shape[1] != net.layer_sizes[0]:
        raise ShapeError(
            f"input has {h.shape[1]} features, net expects {net.layer_sizes[0]}")
    layer_inputs = [h]
    for l in range(net.n_layers):
        z = h @ net.weights[l] + net.biases[l]
        h = z if l == net.n_layers - 1 else np.tanh(z)
        layer_inputs.append(h)
    out = h[0] if single else h
    cache = (layer_inputs, single)
    return out, cache


def mlp_backward(net, cache, output_grad):
    """Exact reverse-mode gradients for a previous mlp_forward call.

    output_grad matches the forward output shape. Returns
    (param_grads, input_grad) where param_grads is a list of (dW, db) pairs.
    """
    layer_inputs, single = cache
    g = np.asarray(output_grad, dtype=float)
    if single:
        g = g.reshape(1, -1)
    if g.shape[1] != net.layer_sizes[-1]:
        raise ShapeError(
            f"output_grad has {g.shape[1]} entries, net outputs {net.layer_sizes[-1]}")
    param_grads = [None] * net.n_layers
    for l in range(net.n_layers - 1, -1, -1):
        h_in = layer_inputs[l]
        if l != net.n_layers - 1:
            # tanh'(z) = 1 - tanh(z)^2, and layer_inputs[l+1] holds tanh(z)
            g = g * (1.0 - layer_inputs[l + 1] ** 2)
        dw = h_in.T @ g
        db = g.sum(axis=0)
        param_grads[l] = (dw, db)
        g = g @ net.weights[l].T
    input_grad = g[0] if single else g
    return param_grads, input_grad


def mlp_get_params(net):
    """Flatten all weights and biases into one vector (layer order, W then b)."""
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def mlp_set_params(net, flat):
    """Inverse of mlp_get_params; returns a new Mlp."""
    flat = np.asarray(flat, dtype=float)
    weights, biases = [], []
    i = 0
    for w, b in zip(net.weights, net.biases):
        weights.append(flat[i:i + w.size].reshape(w.shape).copy())
        i += w.size
        biases.append(flat[i:i + b.size].copy())
        i += b.size
    if i != flat.size:
        raise ShapeError(f"parameter vector has {flat.size} entries, net needs {i}")
    return Mlp(list(net.layer_sizes), weights, biases)


def grads_to_flat(param_grads):
    parts = []
    for dw, db in param_grads:
        parts.append(dw.ravel())
        parts.append(db.ravel())
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    learning_rate: float
    decay1: float = 0.9
    decay2: float = 0.999
    epsilon: float = 1e-8


def adam_init(n_params, learning_rate, decay1=0.9, decay2=0.999, epsilon=1e-8):
    return AdamState(np.zeros(n_params), np.zeros(n_params), 0,
                     learning_rate, decay1, decay2, epsilon)


def adam_step(params, grads, state):
    """One bias-corrected Adam update. Returns (new_params, new_state)."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ShapeError("params, grads and moments must all have the same length")
    t = state.step_count + 1
    m = state.decay1 * state.first_moment + (1 - state.decay1) * grads
    v = state.decay2 * state.second_moment + (1 - state.decay2) * grads ** 2
    m_hat = m / (1 - state.decay1 ** t)
    v_hat = v / (1 - state.decay2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


# ---------------------------------------------------------------------------
# Scalar utilities
# ---------------------------------------------------------------------------

def log_sum_exp(values, axis=None):
    """Max-shifted log(sum(exp(values))), overflow-safe."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ShapeError("log_sum_exp of an empty vector")
    if axis is None:
        vmax = np.max(values)
        return float(np.log(np.sum(np.exp(values - vmax))) + vmax)
    vmax = np.max(values, axis=axis, keepdims=True)
    return np.log(np.sum(np.exp(values - vmax), axis=axis)) + np.squeeze(vmax, axis=axis)


def softmax(logits, temperature=1.0):
    """Stable softmax of logits/temperature along the last axis."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    logits = np.asarray(logits, dtype=float) / temperature
    if logits.size == 0:
        raise ShapeError("softmax of an empty vector")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def smooth_l1(prediction, target):
    """Huber loss with unit transition point, elementwise.

    Returns (loss, d_loss_d_prediction); quadratic for |d| < 1, linear outside.
    """
    d = np.asarray(prediction, dtype=float) - np.asarray(target, dtype=float)
    absd = np.abs(d)
    loss = np.where(absd < 1.0, 0.5 * d ** 2, absd - 0.5)
    grad = np.where(absd < 1.0, d, np.sign(d))
    if np.isscalar(prediction) or (loss.ndim == 0):
        return float(loss), float(grad)
    return loss, grad


def finite_diff_check(loss_fn, params, eps=1e-5):
    """Max relative error between loss_fn's analytic gradient and central
    finite differences.

    loss_fn(params) must return (loss, grad) and be deterministic in params.
    """
    params = np.asarray(params, dtype=float)
    _, analytic = loss_fn(params)
    analytic = np.asarray(analytic, dtype=float)
    worst = 0.0
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] += eps
        up, _ = loss_fn(bumped)
        bumped[i] -= 2 * eps
        down, _ = loss_fn(bumped)
        central = (up - down) / (2 * eps)
        err = abs(analytic[i] - central) / max(1e-8, abs(central))
        worst = max(worst, err)
    return worst
