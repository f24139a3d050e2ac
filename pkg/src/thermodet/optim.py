"""SGD (momentum), Adam and AdamW update rules on flat parameter vectors."""

from __future__ import annotations

import numpy as np


class SGD:
    """Momentum SGD with optional coupled (L2) weight decay.

    buf = momentum * buf + grad (+ wd * theta); theta -= lr * buf
    """

    def __init__(self, params: np.ndarray, lr: float = 0.01, momentum: float = 0.937,
                 weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.params = np.array(params, dtype=np.float64)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buf = np.zeros_like(self.params)

    def step(self, grad: np.ndarray) -> np.ndarray:
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.params.shape:
            raise ValueError("gradient length must match parameters")
        g = grad + self.weight_decay * self.params if self.weight_decay else grad
        self.buf = self.momentum * self.buf + g
        self.params = self.params - self.lr * self.buf
        return self.params


class Adam:
    """Adam with bias correction; weight decay (if any) couples into the
    gradient as classic L2."""

    decoupled = False

    def __init__(self, params: np.ndarray, lr: float = 0.001,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError("lr must be positive")
        b1, b2 = betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        self.params = np.array(params, dtype=np.float64)
        self.lr = lr
        self.beta1, self.beta2 = b1, b2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = np.zeros_like(self.params)
        self.v = np.zeros_like(self.params)
        self.t = 0

    def _moment_update(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def step(self, grad: np.ndarray) -> np.ndarray:
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.params.shape:
            raise ValueError("gradient length must match parameters")
        if self.weight_decay and not self.decoupled:
            grad = grad + self.weight_decay * self.params
        update = self._moment_update(grad)
        if self.weight_decay and self.decoupled:
            # decay applied to the parameters directly, from their pre-step value
            self.params = (1.0 - self.lr * self.weight_decay) * self.params - update
        else:
            self.params = self.params - update
        return self.params


class AdamW(Adam):
    """Adam with decoupled weight decay: theta' = (1 - lr*wd) * theta - update."""

    decoupled = True


def optimizer_comparison(
    steps: int = 200, dim: int = 8, seed: int = 0,
    lr_sgd: float = 0.05, lr_adam: float = 0.05, weight_decay: float = 0.0,
) -> dict[str, list[float]]:
    """Minimize a fixed positive-definite quadratic with all three rules and
    return the loss trajectories (desk-scale optimizer comparison)."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, dim))
    hessian = a @ a.T + dim * np.eye(dim)
    hessian /= np.linalg.norm(hessian, 2)  # unit spectral norm keeps lr stable
    theta0 = rng.standard_normal(dim)

    def loss(th):
        return 0.5 * float(th @ hessian @ th)

    opts = {
        "sgd": SGD(theta0, lr=lr_sgd, momentum=0.9, weight_decay=weight_decay),
        "adam": Adam(theta0, lr=lr_adam, weight_decay=weight_decay),
        "adamw": AdamW(theta0, lr=lr_adam, weight_decay=weight_decay),
    }
    curves = {name: [loss(opt.params)] for name, opt in opts.items()}
    for _ in range(steps):
        for name, opt in opts.items():
            grad = hessian @ opt.params
            opt.step(grad)
            curves[name].append(loss(opt.params))
    return curves
