"""AdamW with decoupled weight decay, plus a plain SGD used by tests."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterError


@dataclass
class AdamWState:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    # keyed by id(param); the optimizer keeps the param objects alive
    exp_avg: dict = field(default_factory=dict)
    exp_avg_sq: dict = field(default_factory=dict)
    param_steps: dict = field(default_factory=dict)


def _check_finite(p, name):
    if not np.all(np.isfinite(p.grad)):
        raise NumericError(f"non-finite gradient in parameter {name}")


class AdamW:
    """Adam whose weight decay shrinks the parameter directly.

    ``step`` updates only the parameters that currently hold a gradient, so
    a discriminator step leaves the tagger's parameters bit-unchanged.  Bias
    correction uses a per-parameter step count for the same reason.
    """

    def __init__(self, params, lr=1e-5, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.01, no_decay=()):
        if lr < 0 or eps < 0 or weight_decay < 0:
            raise ParameterError("lr, eps and weight_decay must be non-negative")
        if not (0.0 <= betas[0] < 1.0 and 0.0 <= betas[1] < 1.0):
            raise ParameterError(f"betas must lie in [0, 1), got {betas}")
        self.params = list(params)
        self.no_decay = {id(p) for p in no_decay}
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                                weight_decay=weight_decay)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, params=None):
        st = self.state
        targets = self.params if params is None else list(params)
        for i, p in enumerate(targets):
            if p.grad is not None:
                _check_finite(p, p.name or f"#{i}")
        for p in targets:
            if p.grad is None:
                continue
            key = id(p)
            g = p.grad
            m = st.exp_avg.get(key)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
                t = 0
            else:
                v = st.exp_avg_sq[key]
                t = st.param_steps[key]
            t += 1
            m = st.beta1 * m + (1.0 - st.beta1) * g
            v = st.beta2 * v + (1.0 - st.beta2) * (g * g)
            m_hat = m / (1.0 - st.beta1 ** t)
            v_hat = v / (1.0 - st.beta2 ** t)
            decay = 0.0 if key in self.no_decay else st.weight_decay
            new = p.data - st.lr * decay * p.data
            p.data = new - st.lr * m_hat / (np.sqrt(v_hat) + st.eps)
            st.exp_avg[key], st.exp_avg_sq[key], st.param_steps[key] = m, v, t
        st.step += 1

    def state_arrays(self):
        """Moment buffers in parameter order, for checkpoint comparisons."""
        out = []
        for p in self.params:
            key = id(p)
            if key in self.state.exp_avg:
                out.extend([self.state.exp_avg[key], self.state.exp_avg_sq[key]])
        return out


class SGD:
    """theta <- theta - lr * grad.  Exists to check the adversarial update literally."""

    def __init__(self, params, lr=1e-5):
        self.params = list(params)
        self.lr = lr
        self.step_count = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, params=None):
        targets = self.params if params is None else list(params)
        for i, p in enumerate(targets):
            if p.grad is None:
                continue
            _check_finite(p, p.name or f"#{i}")
            p.data = p.data - self.lr * p.grad
        self.step_count += 1
