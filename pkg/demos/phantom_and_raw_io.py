"""Render a small synthetic jaw volume, write it as headerless 16-bit raw,
read it back and look at a few slices.

    python demos/phantom_and_raw_io.py
"""
import tempfile
from pathlib import Path

import numpy as np

from oralcad.phantom import random_spec, generate_phantom
from oralcad.volume_io import load_raw_volume, save_raw_volume

# one enclosed lesion, one gap in the outline and two cavities as distractors
spec = random_spec(seed=3, n_cb=1, n_ob=1, n_cavities=2, n_slices=60)
vol, truths = generate_phantom(spec)
print(f"volume {vol.width}x{vol.height}x{vol.n_slices}, spacing {vol.spacing}")
for t in truths:
    print(f"  {t.kind} lesion at ({t.centroid_mm[0]:.1f}, {t.centroid_mm[1]:.1f}, {t.centroid_mm[2]:.1f}) mm,"
          f" diameter {t.diameter_mm:.1f} mm")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "jaw.raw"
    save_raw_volume(vol, path)
    print("raw file size", path.stat().st_size, "bytes =", vol.width * vol.height * vol.n_slices * 2)
    back = load_raw_volume(path, vol.width, vol.height, vol.n_slices, vol.spacing, patient_id="jaw")
    assert np.array_equal(back.data, vol.data)

# the arch is bright, soft tissue is dark
mid = vol[vol.n_slices // 2]
print("mid slice range", mid.min(), mid.max())
print("bone fraction above half scale: %.3f" % (mid > 32768).mean())

# coarse ASCII view of the mid slice, one character per 16x16 block
blocks = mid.reshape(32, 16, 32, 16).mean(axis=(1, 3))
for row in blocks[::2]:
    print("".join(" .:-=+*#%@"[min(int(v / 6554), 9)] for v in row))
