"""Adam with bias correction."""
from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged


class Adam:
    """Per-parameter first/second moment state plus a shared step counter.

    step() applies one bias-corrected update in place:
        m <- b1 m + (1 - b1) g
        v <- b2 v + (1 - b2) g^2
        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self._scratch = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        sc2 = float(np.sqrt(1.0 - self.beta2**self.t))
        for key, theta in params.items():
            g = grads[key]
            # a non-finite entry survives any summation as nan/inf
            if not np.isfinite(float(g.sum())):
                raise TrainingDiverged(f"diverged: non-finite gradient for {key}")
            m = self.m[key]
            v = self.v[key]
            s = self._scratch[key]
            # m <- b1 m + (1 - b1) g ; v <- b2 v + (1 - b2) g^2, all in place
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=s)
            m += s
            v *= self.beta2
            np.multiply(g, g, out=s)
            s *= 1.0 - self.beta2
            v += s
            # lr * (m / c1) / (sqrt(v / c2) + eps) == (lr sqrt(c2) / c1) * m / (sqrt(v) + eps sqrt(c2))
            np.sqrt(v, out=s)
            s += self.eps * sc2
            np.divide(m, s, out=s)
            s *= self.lr * sc2 / c1
            theta -= s
        return params

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for k in self.m:
            out.append((f"m:{k}", self.m[k]))
        for k in self.v:
            out.append((f"v:{k}", self.v[k]))
        return out

    def load_state_arrays(self, state: dict[str, np.ndarray]):
        for prefix, store in (("m:", self.m), ("v:", self.v)):
            for k, arr in store.items():
                src = np.asarray(state[prefix + k])
                arr[...] = src.astype(arr.dtype)


def adam_step(params, grads, state: Adam):
    """Functional spelling of one optimizer step; mutates and returns both."""
    state.step(params, grads)
    return params, state
