"""Central finite-difference gradient checking used across the test suite.

The numeric side is an independent oracle: it only ever calls the forward
pass, perturbing one coordinate at a time with a central difference.  The
networks are only piecewise smooth (relu kinks, maxpool argmax switches); a
coordinate whose +-eps interval straddles a kink makes the central estimate
meaningless, so each coordinate is probed at two step sizes and skipped when
the two estimates disagree (a wrong analytic gradient still fails: both
numeric estimates agree with each other, not with the tape).
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from axinspect.tensor import GradTape, Tensor

KINK_TOL = 1e-5  # smooth float64 two-scale estimates agree to ~1e-9
MAX_SKIP_FRACTION = 0.2


def rel_err(analytic: float, numeric: float) -> float:
    denom = max(1.0, abs(analytic), abs(numeric))
    return abs(analytic - numeric) / denom


def finite_diff_check(
    build_loss: Callable[[], Tensor],
    tensors: dict[str, Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``build_loss`` must rerun the full forward pass from the current tensor
    values and be deterministic call-to-call (seed any dropout inside it).
    When ``max_coords`` is set, a random subset of coordinates per tensor is
    probed instead of every coordinate.
    """
    for t in tensors.values():
        t.requires_grad = True
        t.grad = None

    with GradTape() as tape:
        loss = build_loss()
    tape.backward(loss)

    def probe(flat: np.ndarray, i: int, step: float) -> float:
        orig = flat[i]
        flat[i] = orig + step
        lp = build_loss().item()
        flat[i] = orig - step
        lm = build_loss().item()
        flat[i] = orig
        return (lp - lm) / (2.0 * step)

    worst = 0.0
    probed = skipped = 0
    for name, t in tensors.items():
        assert t.grad is not None, f"no gradient reached {name}"
        assert t.grad.shape == t.data.shape, f"gradient shape mismatch on {name}"
        flat = t.data.reshape(-1)
        gflat = t.grad.reshape(-1)
        coords: Iterable[int] = range(flat.size)
        if max_coords is not None and flat.size > max_coords:
            assert rng is not None, "rng required when subsampling coordinates"
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            probed += 1
            full = probe(flat, i, eps)
            half = probe(flat, i, eps / 2.0)
            if rel_err(full, half) > KINK_TOL:
                skipped += 1  # non-smooth within the probe interval
                continue
            err = rel_err(float(gflat[i]), half)
            if err > worst:
                worst = err
    assert skipped <= MAX_SKIP_FRACTION * probed, (
        f"{skipped}/{probed} coordinates near kinks; check is not meaningful"
    )
    return worst
