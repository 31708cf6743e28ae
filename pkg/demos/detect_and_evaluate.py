"""Full run on a handful of phantoms: both detectors, 3D clustering,
matching against truth and a FROC sweep over the classifier threshold.

    python demos/detect_and_evaluate.py
"""
from oralcad.cb_pipeline import build_training_pool
from oralcad.detect import detect_slices
from oralcad.eval3d import (DEFAULT_PERSISTENCES, DEFAULT_SCORE_THRESHOLDS, cluster_detections, compact_curve,
                            froc_curve, match, persistence_sweep, score_sweep)
from oralcad.mlp import TrainingConfig, train
from oralcad.phantom import generate_phantom, random_spec
from oralcad.volume_io import VoxelSpacing

thick = VoxelSpacing(0.2, 0.5)


def case(seed, cb=0, ob=0):
    return generate_phantom(random_spec(seed, n_cb=cb, n_ob=ob, n_cavities=2, n_slices=40, spacing=thick))


model = train(build_training_pool([case(s, cb=int(s < 3)) for s in range(6)]), TrainingConfig(epochs=200))

cb_patients, ob_patients = {}, {}
for seed in range(50, 58):
    vol, truths = case(seed, cb=seed % 2, ob=int(seed % 4 == 0))
    cb, ob = detect_slices(vol, model, workers=1)
    # each sweep is scored against its own lesion kind
    cb_patients[vol.patient_id] = (cb, [t for t in truths if t.kind == "CB"])
    ob_patients[vol.patient_id] = (ob, [t for t in truths if t.kind == "OB"])
    clusters = cluster_detections([d for d in cb if d.score >= 0.5] + ob, thick, patient_id=vol.patient_id)
    m = match(clusters, truths)
    print(f"{vol.patient_id}: {len(truths)} lesions, {len(clusters)} clusters -> tp {m.tp} fp {m.fp} fn {m.fn}")

print("\nclose-border FROC (threshold, sensitivity, FP per patient)")
for p in compact_curve(froc_curve(score_sweep(cb_patients, DEFAULT_SCORE_THRESHOLDS, thick))):
    print(f"  {p.threshold:>6g}  {p.sensitivity:.2f}  {p.fp_per_patient:.2f}")
print("open-border FROC (minimum persistence, sensitivity, FP per patient)")
for p in compact_curve(froc_curve(persistence_sweep(ob_patients, DEFAULT_PERSISTENCES, thick))):
    print(f"  {p.threshold:>6g}  {p.sensitivity:.2f}  {p.fp_per_patient:.2f}")
