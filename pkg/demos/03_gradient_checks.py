"""Finite-difference verification of the hand-written backward passes.

Every layer's analytic gradient is compared against central differences at
64-bit precision, including the full critic stack and the gradient penalty
with its two closed-form corner cases.
"""
import numpy as np

from foldgan import GanArch, build_critic, gradient_penalty
from foldgan.nn import (
    BatchNorm,
    Conv2d,
    Dense,
    Flatten,
    LeakyReLU,
    Sequential,
    Sigmoid,
    Softmax,
    TConv2d,
    grad_check,
)


def main():
    rng = np.random.default_rng(0)
    cases = [
        ("conv 3x3 stride 2 same", Conv2d(2, 3, (3, 3), (2, 2), "same", rng=rng, dtype=np.float64), (2, 2, 7, 6)),
        ("conv 5x5 stride 2 valid", Conv2d(1, 2, (5, 5), (2, 2), "valid", rng=rng, dtype=np.float64), (2, 1, 9, 9)),
        ("tconv 5x5 stride 2", TConv2d(3, 2, (5, 5), (2, 2), rng=rng, dtype=np.float64), (2, 3, 3, 4)),
        ("dense", Dense(6, 4, rng=rng, dtype=np.float64), (3, 6)),
        ("leaky relu", LeakyReLU(0.2), (2, 3, 4, 4)),
        ("sigmoid", Sigmoid(), (2, 3, 4, 4)),
        ("softmax", Softmax(), (3, 6)),
        ("batch norm", BatchNorm(3, dtype=np.float64), (4, 3, 3, 3)),
    ]
    for name, layer, shape in cases:
        rep = grad_check(layer, rng.standard_normal(shape), tolerance=1e-4)
        print(f"{name:26s} max rel error {rep.max_rel_error:.2e}  {'ok' if rep.passed else 'MISMATCH'}")

    critic = build_critic(GanArch(latent_dim=8, p=8, d=8), seed=1)
    for v in critic.params().values():
        v[...] = rng.standard_normal(v.shape) * 0.3
    rep = grad_check(critic, rng.standard_normal((2, 1, 8, 8)), tolerance=1e-3, max_entries_per_array=24)
    print(f"{'full critic stack':26s} max rel error {rep.max_rel_error:.2e}  {'ok' if rep.passed else 'MISMATCH'}")

    # Penalty corner cases with a plain linear critic on flattened input.
    lin = Sequential([("flat", Flatten()), ("dense", Dense(64, 1, rng=rng, dtype=np.float64))], dtype=np.float64)
    w = rng.standard_normal(64)
    lin.layers[1].W[...] = (w / np.linalg.norm(w))[:, None]
    lin.layers[1].b[...] = 0.0
    real, fake = rng.standard_normal((4, 1, 8, 8)), rng.standard_normal((4, 1, 8, 8))
    p_unit, _ = gradient_penalty(lin, real, fake, 10.0, seed=2)
    lin.layers[1].W[...] = 0.0
    p_zero, _ = gradient_penalty(lin, real, fake, 10.0, seed=2)
    print(f"penalty, unit-norm linear critic: {p_unit:.1e} (expected 0)")
    print(f"penalty, zero critic:             {p_zero} (expected lambda = 10)")


if __name__ == "__main__":
    main()
