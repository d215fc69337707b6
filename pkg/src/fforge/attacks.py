"""L-infinity projected gradient attacks on detectors.

White-box attacks differentiate the target itself. Black-box transfer
attacks are crafted on an independently trained surrogate and only then
shown to the target, which is never differentiated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import as_image
from .rng import substream


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 8 / 255
    alpha: float = 2 / 255
    steps: int = 10
    random_start: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.epsilon > 0 and not 0 < self.alpha <= self.epsilon:
            raise ValueError("alpha must satisfy 0 < alpha <= epsilon")


def project_linf(x: np.ndarray, center: np.ndarray, epsilon: float) -> np.ndarray:
    """Project onto ``{|x - center| <= epsilon} ∩ [0, 1]``.

    Rounding in ``center ± epsilon`` can overshoot the ball by an ulp; such
    elements are stepped back toward ``center`` until the bound holds exactly.
    """
    out = np.clip(np.minimum(np.maximum(x, center - epsilon), center + epsilon), 0.0, 1.0)
    over = np.abs(out - center) > epsilon
    while over.any():
        out[over] = np.nextafter(out[over], center[over])
        over = np.abs(out - center) > epsilon
    return out


def pgd_attack(model, images, labels, config: AttackConfig = AttackConfig(), *,
               keys=None, trace: list | None = None) -> list[np.ndarray]:
    """Batched untargeted PGD: push each image away from its true label.

    ``keys`` name the random-start substream of each image (defaults to the
    position). ``trace`` receives the per-image loss before the first step
    and after every step.
    """
    x0 = np.stack([as_image(im) for im in images])
    labels = np.asarray(labels, dtype=np.float64)
    eps = float(config.epsilon)
    if keys is None:
        keys = range(len(x0))
    x = x0.copy()
    if config.random_start and eps > 0:
        noise = np.stack([substream(config.seed, "pgd-start", k).uniform(-eps, eps, size=x0.shape[1:]) for k in keys])
        x = project_linf(x0 + noise, x0, eps)
    for _ in range(config.steps):
        loss, grad = model.loss_gradient(list(x), labels)
        if trace is not None:
            trace.append(loss)
        x = project_linf(x + config.alpha * np.sign(grad), x0, eps)
    if trace is not None:
        trace.append(model.loss_gradient(list(x), labels)[0])
    return list(x)


def pgd_whitebox(model, image, label: int, config: AttackConfig = AttackConfig()) -> np.ndarray:
    """Attack a single image with full gradient access to ``model``."""
    return pgd_attack(model, [image], [label], config)[0]


def blackbox_transfer(surrogate, target, images, labels, config: AttackConfig = AttackConfig(),
                      *, keys=None) -> list[np.ndarray]:
    """Craft adversarial images on ``surrogate`` for later evaluation on ``target``.

    ``target`` is only checked, never queried: its gradient counter is
    asserted unchanged.
    """
    before = target.gradient_queries
    adv = pgd_attack(surrogate, images, labels, config, keys=keys)
    assert target.gradient_queries == before, "transfer attack must not query the target"
    return adv
