"""
The perturbation menu
=====================

Every row of the robustness tables is one seeded transform. Draws are keyed,
so the same (condition, video, frame) always sees the same perturbation.
This script writes a contact sheet to ``perturbation_menu.png``.
"""

# %%
import numpy as np

from fforge.imaging import mse, save_png
from fforge.perturbations import apply_perturbation, jpeg_menu, jpeg_roundtrip, perturbation_menu
from fforge.synthdata import SynthConfig, gen_real

face = gen_real(SynthConfig(seed=3), 0, 0)

# %% One draw per menu entry, plus the five JPEG qualities.
tiles = []
for spec in perturbation_menu():
    out = apply_perturbation(face, spec.with_stream("demo"))
    print(f"{spec.name:22s} mse {mse(face, out):.5f}")
    tiles.append(out)
for spec in jpeg_menu():
    tiles.append(jpeg_roundtrip(face, spec))

# %% Re-running with the same stream reproduces the draw exactly.
spec = perturbation_menu()[8]
assert np.array_equal(apply_perturbation(face, spec.with_stream("demo")), tiles[8])

# %%
rows = [np.concatenate(tiles[i : i + 8], axis=1) for i in (0, 8)]
save_png("perturbation_menu.png", np.concatenate(rows, axis=0))
print("wrote perturbation_menu.png")
