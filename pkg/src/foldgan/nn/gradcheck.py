"""Central finite-difference verification of backward passes.

The scalar under test is a fixed random projection of the network output,
so every output element influences the loss. The network is deep-copied and
promoted to float64 before checking; the caller's instance is untouched.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .layers import Layer, Sequential


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    checked: int


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry]
    max_rel_error: float
    tolerance: float
    passed: bool

    def summary(self) -> str:
        lines = [f"gradient check: max rel error {self.max_rel_error:.3e} vs tolerance {self.tolerance:.0e}"]
        for e in self.entries:
            lines.append(f"  {e.name:30s} {e.max_rel_error:.3e} ({e.checked} entries)")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def _rel_error(analytic: float, numeric: float, abs_floor: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale < abs_floor:
        return 0.0
    return abs(analytic - numeric) / scale


def central_difference(value_fn, array: np.ndarray, indices, h_scale=1e-5) -> np.ndarray:
    """d value_fn / d array[i] for each flat index, by central differences."""
    flat = array.reshape(-1)
    out = np.empty(len(indices), dtype=np.float64)
    for j, i in enumerate(indices):
        old = flat[i]
        h = h_scale * max(1.0, abs(old))
        flat[i] = old + h
        fp = value_fn()
        flat[i] = old - h
        fm = value_fn()
        flat[i] = old
        out[j] = (fp - fm) / (2.0 * h)
    return out


def grad_check(
    net: Sequential | Layer,
    x: np.ndarray,
    tolerance: float = 1e-4,
    *,
    include_input: bool = True,
    train: bool = True,
    max_entries_per_array: int | None = None,
    h_scale: float = 1e-5,
    abs_floor: float = 1e-6,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of a random scalar head against finite differences.

    For large tensors ``max_entries_per_array`` restricts checking to a
    seeded random subset of entries. Differences below ``abs_floor`` on
    both sides count as agreement (they are finite-difference noise).
    """
    if isinstance(net, Layer):
        net = Sequential([("layer", net)], dtype=np.float64)
    net = copy.deepcopy(net).astype(np.float64)
    x = np.array(x, dtype=np.float64)
    rng = np.random.default_rng(seed)

    out = net.forward(x, train=train)
    w = rng.standard_normal(out.shape)

    def value() -> float:
        return float(np.sum(net.forward(x, train=train) * w))

    net.zero_grad()
    dx = net.backward(w)
    analytic = {name: g.copy() for name, g in net.grads().items()}
    if include_input:
        analytic["input"] = dx.copy()

    pick = rng  # reuse the stream for index subsets
    entries = []
    worst = 0.0
    targets = dict(net.params())
    if include_input:
        targets["input"] = x
    for name, arr in targets.items():
        size = arr.size
        if max_entries_per_array is not None and size > max_entries_per_array:
            indices = pick.choice(size, size=max_entries_per_array, replace=False)
        else:
            indices = np.arange(size)
        numeric = central_difference(value, arr, indices, h_scale=h_scale)
        ana = analytic[name].reshape(-1)[indices]
        errs = [_rel_error(a, n, abs_floor) for a, n in zip(ana, numeric)]
        e = max(errs) if errs else 0.0
        entries.append(GradCheckEntry(name, e, len(indices)))
        worst = max(worst, e)
    return GradCheckReport(entries, worst, tolerance, worst < tolerance)
