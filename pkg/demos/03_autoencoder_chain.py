"""
Artificial fingerprints from weak autoencoders
==============================================

Autoencoders are trained in order of increasing complexity and stopped as
soon as their validation MAE drops below a per-model threshold. Passing an
image through a chain of them leaves a reconstruction residue that the
detector is taught to treat as fake.
"""

# %%
import logging

from fforge.aepool import ChainSpec, build_pool, chain_apply, fingerprint_residual
from fforge.synthdata import SynthConfig, gen_real

logging.basicConfig(level=logging.INFO, format="%(message)s")
cfg = SynthConfig(seed=11)
images = [gen_real(cfg, v, f) for v in range(6) for f in range(4)]
train, val = images[:18], images[18:]

# %% A four-member pool; fewer steps per epoch than the default to keep this quick.
pool = build_pool(4, train, val, seed=0, min_steps_per_epoch=40)
for m in pool.members:
    print(f"{m.config.tag:32s} T={m.config.threshold_T:.3f} epochs={m.epochs_run} heldout MAE={m.heldout_mae:.4f}")

# %% The first member does most of the damage; later ones add a little each.
x = val[0]
for chain in (ChainSpec.of(), ChainSpec.of(0), ChainSpec.of(0, 2), ChainSpec.of(0, 2, 3), ChainSpec.full()):
    stats = fingerprint_residual(x, pool, chain)
    print(f"chain {chain.resolve(len(pool))!s:14s} mae {stats.mae:.4f}  psnr {stats.psnr:.1f} dB")

# %% Training draws random chains of length 1..3.
for s in range(3):
    spec = ChainSpec.random(3, "demo", s)
    print("random chain", spec.resolve(len(pool)), "mae", round(float(abs(chain_apply(x, pool, spec) - x).mean()), 4))
