"""Dense networks with hand-written reverse-mode gradients.

Everything here is plain numpy.  :class:`DenseNet` is a stack of affine
layers with tanh or identity activations; forward passes return a cache that
the matching backward pass consumes, so the nets themselves stay stateless
between calls.  On top of that sit the two task networks:

* :class:`ActorNet` scores every target row of an observation matrix with
  shared weights.  Each row is embedded by a small extractor, a linear head
  T scores the row itself, a second head O scores each row's contribution to
  the other rows, and a learned scalar biases the stop action.  A masked
  softmax over the m target scores plus the stop score yields the selection
  distribution, so the same parameters serve any number of targets.
* :class:`CriticNet` is an ordinary multi-layer perceptron from a fixed-size
  state summary to a scalar value estimate.

:func:`grad_check` compares the analytic gradients against central finite
differences and is kept as a standing test gate.
"""

from dataclasses import dataclass

import numpy as np


class NeuralError(RuntimeError):
    pass


# finite stand-in for -inf so masked softmax entries underflow to exactly
# zero without generating NaNs in the backward pass
MASKED_LOGIT = -1e30

ACTIVATIONS = ("tanh", "linear")


def _check_finite(arr, what: str):
    if not np.all(np.isfinite(arr)):
        raise NeuralError(f"{what} contains non-finite values")


class DenseNet:
    """Fully connected stack; ``sizes`` has one more entry than ``activations``."""

    def __init__(self, sizes, activations, rng):
        sizes = tuple(int(s) for s in sizes)
        activations = tuple(activations)
        if len(sizes) < 2 or len(activations) != len(sizes) - 1:
            raise NeuralError("need len(sizes) - 1 activations")
        for act in activations:
            if act not in ACTIVATIONS:
                raise NeuralError(f"unknown activation {act!r}")
        self.sizes = sizes
        self.activations = activations
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(1.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def parameters(self):
        params = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def forward(self, x):
        """Returns (output, cache); ``x`` may carry arbitrary batch dims."""
        x = np.asarray(x, dtype=np.float64)
        cache = [x]
        for w, b, act in zip(self.weights, self.biases, self.activations):
            x = x @ w + b
            if act == "tanh":
                x = np.tanh(x)
            cache.append(x)
        return x, cache

    def backward(self, d_out, cache):
        """Returns (d_input, grads) with grads aligned to :meth:`parameters`."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        d = np.asarray(d_out, dtype=np.float64)
        for k in range(len(self.weights) - 1, -1, -1):
            if self.activations[k] == "tanh":
                d = d * (1.0 - cache[k + 1] ** 2)
            x = cache[k]
            d_flat = d.reshape(-1, d.shape[-1])
            grads_w[k] = x.reshape(-1, x.shape[-1]).T @ d_flat
            grads_b[k] = d_flat.sum(axis=0)
            d = d @ self.weights[k].T
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.append(gw)
            grads.append(gb)
        return d, grads


class ActorNet:
    """Permutation-symmetric target scorer shared by every radar."""

    def __init__(self, n_features: int = 23, hidden: int = 16, embed: int = 6,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n_features = int(n_features)
        self.hidden = int(hidden)
        self.embed = int(embed)
        self.extractor = DenseNet((n_features, hidden, embed),
                                  ("tanh", "tanh"), rng)
        scale = np.sqrt(1.0 / embed)
        self.t_weight = rng.normal(0.0, scale, size=embed)
        self.t_bias = np.zeros(1)
        self.o_weight = rng.normal(0.0, scale, size=embed)
        self.o_bias = np.zeros(1)
        self.stop_bias = np.zeros(1)

    def parameters(self):
        return self.extractor.parameters() + [
            self.t_weight, self.t_bias, self.o_weight, self.o_bias,
            self.stop_bias]

    def features(self, obs):
        """Row embeddings only; shape (..., m, embed)."""
        out, _ = self.extractor.forward(obs)
        return out

    def logits(self, obs):
        """Scores for (..., m, n_features) rows -> (..., m + 1) logits.

        The last column is the stop score.  Row i's score is T(f_i) plus the
        mean of O(f_j) over the other rows (zero when m = 1).
        """
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.n_features:
            raise NeuralError(
                f"expected {self.n_features} features per row, got {obs.shape[-1]}")
        m = obs.shape[-2]
        if m < 1:
            raise NeuralError("need at least one target row")
        f, cache = self.extractor.forward(obs)
        t_scores = f @ self.t_weight + self.t_bias[0]
        o_scores = f @ self.o_weight + self.o_bias[0]
        if m > 1:
            others = (o_scores.sum(axis=-1, keepdims=True) - o_scores) / (m - 1)
        else:
            others = np.zeros_like(o_scores)
        w = t_scores + others
        stop = np.broadcast_to(self.stop_bias, w.shape[:-1] + (1,))
        logits = np.concatenate([w, stop], axis=-1)
        return logits, (cache, f, m)

    def backward_logits(self, d_logits, cache):
        """Gradients of a scalar loss given d(loss)/d(logits)."""
        layer_cache, f, m = cache
        d_logits = np.asarray(d_logits, dtype=np.float64)
        d_stop = float(d_logits[..., -1].sum())
        g = d_logits[..., :m]
        d_t = g
        if m > 1:
            d_o = (g.sum(axis=-1, keepdims=True) - g) / (m - 1)
        else:
            d_o = np.zeros_like(g)
        d_f = (d_t[..., None] * self.t_weight
               + d_o[..., None] * self.o_weight)
        flat_f = f.reshape(-1, self.embed)
        g_tw = flat_f.T @ d_t.reshape(-1)
        g_ow = flat_f.T @ d_o.reshape(-1)
        _, extractor_grads = self.extractor.backward(d_f, layer_cache)
        return extractor_grads + [
            g_tw, np.array([d_t.sum()]), g_ow, np.array([d_o.sum()]),
            np.array([d_stop])]


class CriticNet:
    """Value head: state summary vector -> scalar."""

    def __init__(self, input_dim: int, hidden: int = 32, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.input_dim = int(input_dim)
        self.hidden = int(hidden)
        self.net = DenseNet((input_dim, hidden, hidden, 1),
                            ("tanh", "tanh", "linear"), rng)

    def parameters(self):
        return self.net.parameters()

    def forward(self, summary):
        out, cache = self.net.forward(summary)
        return out[..., 0], cache

    def backward(self, d_out, cache):
        _, grads = self.net.backward(np.asarray(d_out)[..., None], cache)
        return grads


def masked_log_softmax(logits, valid):
    """Log-probabilities with invalid entries forced to MASKED_LOGIT.

    ``valid`` must leave at least one entry per row unmasked.  Probabilities
    of masked entries are exactly zero (their logits underflow exp).
    """
    logits = np.asarray(logits, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != logits.shape:
        raise NeuralError("mask shape must match logits shape")
    if not np.all(valid.any(axis=-1)):
        raise NeuralError("every row needs at least one unmasked action")
    z = np.where(valid, logits, MASKED_LOGIT)
    zmax = z.max(axis=-1, keepdims=True)
    logz = zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True))
    return z - logz


def actor_forward(net: ActorNet, obs, fov_mask, selected=(),
                  budget_exhausted: bool = False, affordable=None):
    """Selection distribution over the m targets plus the trailing stop slot.

    Out-of-view, already-selected, and unaffordable targets get probability
    zero; the stop action is always available.  ``budget_exhausted`` forces
    the whole distribution onto stop.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2:
        raise NeuralError("obs must be a single m x n_features matrix")
    m = obs.shape[0]
    valid = np.ones(m + 1, dtype=bool)
    valid[:m] = np.asarray(fov_mask, dtype=bool)
    if affordable is not None:
        valid[:m] &= np.asarray(affordable, dtype=bool)
    for j in selected:
        valid[int(j)] = False
    if budget_exhausted:
        valid[:m] = False
    logits, _ = net.logits(obs)
    logp = masked_log_softmax(logits, valid)
    probs = np.where(valid, np.exp(logp), 0.0)
    return probs / probs.sum()


def critic_forward(net: CriticNet, summary) -> float:
    summary = np.asarray(summary, dtype=np.float64)
    if summary.shape[-1] != net.input_dim:
        raise NeuralError(
            f"summary dimension {summary.shape[-1]} != {net.input_dim}")
    value, _ = net.forward(summary)
    return float(value) if value.ndim == 0 else value


class Adam:
    """In-place Adam over a fixed list of parameter arrays."""

    def __init__(self, params, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise NeuralError("gradient list does not match parameter list")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            _check_finite(g, "gradient")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_dict(self):
        return {"t": self.t, "lr": self.lr, "beta1": self.beta1,
                "beta2": self.beta2, "eps": self.eps,
                "m": [a.tolist() for a in self.m],
                "v": [a.tolist() for a in self.v]}

    def load_state_dict(self, state):
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.eps = float(state["eps"])
        self.m = [np.array(a, dtype=np.float64).reshape(p.shape)
                  for a, p in zip(state["m"], self.params)]
        self.v = [np.array(a, dtype=np.float64).reshape(p.shape)
                  for a, p in zip(state["v"], self.params)]


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: int
    worst_index: tuple


def grad_check(params, compute, step: float = 1e-5) -> GradCheckReport:
    """Central finite differences against analytic gradients.

    ``compute()`` evaluates the loss at the current parameter values and
    returns ``(loss, grads)`` with grads aligned to ``params``.  Parameters
    are perturbed in place and restored, so the net is unchanged on return.
    Relative error uses max(|analytic|, |numeric|, 1e-4) as the denominator
    so that near-zero gradients are compared absolutely at 1e-4 scale.
    """
    n_params = sum(p.size for p in params)
    if n_params > 10_000:
        raise NeuralError(f"grad_check is for small nets ({n_params} params)")
    _, grads = compute()
    worst = GradCheckReport(0.0, -1, ())
    for k, (p, g) in enumerate(zip(params, grads)):
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + step
            up, _ = compute()
            p[idx] = orig - step
            down, _ = compute()
            p[idx] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(g[idx]), abs(numeric), 1e-4)
            rel = abs(g[idx] - numeric) / denom
            if rel > worst.max_rel_error:
                worst = GradCheckReport(rel, k, idx)
            it.iternext()
    return worst
