"""The 15 numbers the classifier sees for each candidate, on a lesion hole
and on a cavity cut from the same slice.

    python demos/texture_and_shape_features.py
"""
import math

import numpy as np

from oralcad.cb_pipeline import detect_candidates
from oralcad.features import FEATURE_NAMES, extract_feature_vector, hu_moments
from oralcad.phantom import CavitySpec, LesionSpec, PhantomSpec, ArcGeometry, centerline_point, generate_phantom

arc = ArcGeometry()
lx, ly = centerline_point(arc, 10.0)
cx, cy = centerline_point(arc, -35.0)
spec = PhantomSpec(seed=2, n_slices=11, lesions=(LesionSpec("CB", (lx, ly, 1.0), 12.0),),
                   cavities=(CavitySpec((cx, cy, 1.0), 9.0),))
vol, _ = generate_phantom(spec)
cands = detect_candidates(vol[5], vol.spacing)
print(len(cands), "candidates")

rows = []
for blob, roi in cands:
    name = "lesion" if math.hypot(blob.centroid[0] * 0.2 - lx, blob.centroid[1] * 0.2 - ly) < 6 else "cavity"
    rows.append((name, extract_feature_vector(roi)))
print("%-14s" % "feature" + "".join("%14s" % n for n, _ in rows))
for i, fname in enumerate(FEATURE_NAMES):
    print("%-14s" % fname + "".join("%14.4g" % v[i] for _, v in rows))

# shape moments do not care where the shape sits or how it is turned
yy, xx = np.mgrid[:60, :60]
ell = (((xx - 30) / 20.0) ** 2 + ((yy - 30) / 9.0) ** 2 <= 1).astype(float)
a = np.array(hu_moments(ell))
b = np.array(hu_moments(np.rot90(np.pad(ell, ((7, 0), (0, 3))))))
print("Hu difference after shift + rotation: %.1e" % np.abs(a - b).max())
