"""Command-line entry point: ``oralcad {phantom,train,detect,evaluate}``.

Exit codes are the same for every command: 0 success, 1 I/O failure,
2 contract or spec violation (bad spec, bad file schema, empty training pool,
missing model, patient id mismatch).

A case directory, as written by ``phantom``, holds ``volume.raw``,
``truth.tsv`` and ``manifest.json``; the manifest gives the volume geometry
so the other commands can load it without extra flags.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import eval3d
from .cb_pipeline import build_training_pool
from .config import load_settings
from .detect import detect_volume
from .errors import ContractError, FormatError, OralCadError
from .imaging import normalize_slice
from .mlp import LESION, NORMAL, accuracy, load_model, save_model, train
from .phantom import PhantomSpec, generate_phantom, random_spec
from .volume_io import CtVolume, VoxelSpacing, load_raw_volume, save_raw_volume

EXIT_OK, EXIT_IO, EXIT_CONTRACT = 0, 1, 2
MANIFEST = "manifest.json"
VOLUME_FILE = "volume.raw"
TRUTH_FILE = "truth.tsv"
FP_LEVELS = (0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode())


def _write_json(path: Path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- case directories -------------------------------------------------------

def write_case(out_dir, volume: CtVolume, truths, spec: PhantomSpec | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_raw_volume(volume, out / VOLUME_FILE)
    eval3d.write_ground_truth(truths, out / TRUTH_FILE, patients=[volume.patient_id])
    manifest = {
        "format": "oralcad-case",
        "version": 1,
        "patient_id": volume.patient_id,
        "width": volume.width,
        "height": volume.height,
        "n_slices": volume.n_slices,
        "in_plane_mm": volume.spacing.in_plane_mm,
        "slice_thickness_mm": volume.spacing.slice_thickness_mm,
        "volume": VOLUME_FILE,
        "truth": TRUTH_FILE,
    }
    if spec is not None:
        manifest["seed"] = spec.seed
        manifest["spec"] = spec.to_dict()
    _write_json(out / MANIFEST, manifest)
    return out


def read_case(case_dir) -> tuple[CtVolume, list[eval3d.GroundTruthLesion] | None]:
    """Volume and ground truth (``None`` if the case has no truth file)."""
    case = Path(case_dir)
    try:
        m = json.loads((case / MANIFEST).read_text())
        vol = load_raw_volume(case / m.get("volume", VOLUME_FILE), int(m["width"]), int(m["height"]),
                              int(m["n_slices"]), VoxelSpacing(m["in_plane_mm"], m["slice_thickness_mm"]),
                              str(m["patient_id"]))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{case / MANIFEST}: unreadable case manifest ({exc})") from exc
    truth_path = case / m.get("truth", TRUTH_FILE)
    truths = eval3d.read_ground_truth(truth_path) if truth_path.exists() else None
    return vol, truths


def _load_volume_arg(args) -> CtVolume:
    path = Path(args.volume)
    if path.is_dir():
        return read_case(path)[0]
    if not args.shape:
        raise ContractError("a raw volume file needs --shape WIDTH HEIGHT SLICES")
    w, h, n = args.shape
    s = args.settings
    return load_raw_volume(path, w, h, n, s.spacing, args.patient_id)


def _load_model_arg(path):
    if path is None or not Path(path).is_file():
        raise ContractError(f"model file not found: {path}")
    return load_model(path)


# -- overlays ---------------------------------------------------------------

def encode_pgm(image: np.ndarray) -> bytes:
    img = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()


def cluster_overlay(volume: CtVolume, cluster: eval3d.LesionCluster) -> np.ndarray:
    """Normalized mid slice of the cluster with its region outlined in white."""
    k = (cluster.slice_span[0] + cluster.slice_span[1]) // 2
    img = normalize_slice(volume[k]).copy()
    px = volume.spacing.in_plane_mm
    cx, cy = cluster.centroid_mm[0] / px, cluster.centroid_mm[1] / px
    r = max(cluster.diameter_mm / 2 / px, 2.0)
    ys, xs = np.mgrid[0:img.shape[0], 0:img.shape[1]]
    d = np.hypot(xs - cx, ys - cy)
    img[np.abs(d - r) <= 0.75] = 255
    return img


# -- commands ---------------------------------------------------------------

def cmd_phantom(args) -> int:
    s = args.settings
    if args.spec:
        spec = PhantomSpec.from_json(Path(args.spec).read_text())
    else:
        spec = random_spec(args.seed, args.cb, args.ob, args.cavities, n_slices=args.slices,
                           spacing=s.spacing, patient_id=args.patient_id,
                           cb_diameter_mm=(s.cb_min_mm, s.cb_max_mm),
                           ob_diameter_mm=(s.ob_min_mm, s.ob_max_mm))
    volume, truths = generate_phantom(spec)
    out = write_case(args.out, volume, truths, spec)
    print(f"{spec.patient_id}: {volume.n_slices}x{volume.height}x{volume.width}, "
          f"{len(truths)} lesion(s) -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    s = args.settings
    cases = [read_case(c) for c in args.cases]
    missing = [str(c) for c, (_, t) in zip(args.cases, cases) if t is None]
    if missing:
        raise ContractError(f"cases without ground truth: {', '.join(missing)}")
    n_abnormal = sum(1 for _, t in cases if t)
    if n_abnormal == 0 or n_abnormal == len(cases):
        raise ContractError(f"training needs abnormal and normal cases, got {n_abnormal} abnormal "
                            f"of {len(cases)}")
    t0 = time.perf_counter()
    pool = build_training_pool(cases, glcm_levels=s.glcm_levels)
    model = train(pool, s.training)
    acc = accuracy(model, pool, s.score_threshold)
    out = Path(args.out)
    save_model(model, out)
    report = {
        "cases": [v.patient_id for v, _ in cases],
        "n_abnormal_cases": n_abnormal,
        "n_normal_cases": len(cases) - n_abnormal,
        "n_samples": len(pool),
        "n_lesion": sum(1 for p in pool if p.label == LESION),
        "n_normal": sum(1 for p in pool if p.label == NORMAL),
        "training_accuracy": acc,
        "learning_rate": s.training.learning_rate,
        "epochs": s.training.epochs,
        "seed": s.training.seed,
    }
    report_path = Path(args.report) if args.report else out.with_name(out.stem + ".report.json")
    _write_json(report_path, report)
    print(f"trained on {len(pool)} samples ({report['n_lesion']} lesion), accuracy {acc:.4f}, "
          f"{time.perf_counter() - t0:.1f} s -> {out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    s = args.settings
    model = _load_model_arg(args.model)
    volume = _load_volume_arg(args)
    t0 = time.perf_counter()
    res = detect_volume(volume, model, args.threshold, s, workers=args.workers)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    (out / "overlays").mkdir(parents=True, exist_ok=True)
    eval3d.write_clusters(res.clusters, out / "clusters.tsv")
    eval3d.write_detections(volume.patient_id, res.cb + res.ob, out / "detections.tsv")
    for i, c in enumerate(res.clusters):
        name = f"cluster_{i:03d}_{c.kind}_z{(c.slice_span[0] + c.slice_span[1]) // 2:04d}.pgm"
        _atomic_write_bytes(out / "overlays" / name, encode_pgm(cluster_overlay(volume, c)))
    kinds = {k: sum(1 for c in res.clusters if c.kind == k) for k in ("CB", "OB")}
    print(f"{volume.patient_id}: {len(res.clusters)} cluster(s) (CB {kinds['CB']}, OB {kinds['OB']})")
    print(f"runtime {elapsed:.2f} s for {volume.n_slices} slices")
    return EXIT_OK


def _collect_for_evaluate(args):
    """``{patient: (detections, truths)}`` from detection files or case dirs."""
    s = args.settings
    truths_by: dict[str, list] = {}
    truth_ids: set[str] = set()
    for p in args.truth or ():
        truth_ids.update(eval3d.declared_patients(p))
        for t in eval3d.read_ground_truth(p):
            truths_by.setdefault(t.patient_id, []).append(t)
    dets_by: dict[str, list] = {}
    if args.volumes:
        model = _load_model_arg(args.model)
        for case in args.volumes:
            vol, truths = read_case(case)
            if not args.truth and truths is not None:
                truth_ids.add(vol.patient_id)
                truths_by.setdefault(vol.patient_id, []).extend(truths)
            res = detect_volume(vol, model, s.score_threshold, s, workers=args.workers)
            dets_by[vol.patient_id] = res.cb + res.ob
    for p in args.detections or ():
        for pid, dets in eval3d.read_detections(p).items():
            dets_by.setdefault(pid, []).extend(dets)
    orphans_d = sorted(set(dets_by) - truth_ids)
    orphans_t = sorted(truth_ids - set(dets_by))
    if orphans_d or orphans_t:
        raise ContractError("patient ids do not match; without truth: "
                            f"{', '.join(orphans_d) or '-'}; without detections: {', '.join(orphans_t) or '-'}")
    if not dets_by:
        raise ContractError("nothing to evaluate")
    return {pid: (dets_by[pid], truths_by.get(pid, [])) for pid in sorted(dets_by)}


def froc_summary(curve, label: str) -> str:
    lines = [f"# {label}", "max_fp_per_patient\tbest_sensitivity"]
    for fp in FP_LEVELS:
        lines.append(f"{fp:g}\t{eval3d.best_sensitivity_at(curve, fp):.4f}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    s = args.settings
    patients = _collect_for_evaluate(args)
    if not any(t for _, t in patients.values()):
        raise ContractError("sensitivity is undefined: no ground-truth lesions")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spacing = s.spacing
    summary = []
    for kind in ("CB", "OB"):
        sub = {pid: ([d for d in dets if d.kind == kind], [t for t in truths if t.kind == kind])
               for pid, (dets, truths) in patients.items()}
        if not any(t for _, t in sub.values()):
            continue
        if kind == "CB":
            sweep = eval3d.score_sweep(sub, eval3d.DEFAULT_SCORE_THRESHOLDS, spacing, s.link_radius_mm,
                                       s.min_persistence)
        else:
            sweep = eval3d.persistence_sweep(sub, eval3d.DEFAULT_PERSISTENCES, spacing, s.link_radius_mm)
        curve = eval3d.compact_curve(eval3d.froc_curve(sweep))
        eval3d.write_froc(curve, out / f"froc_{kind}.tsv")
        summary.append(froc_summary(curve, f"{kind}: {len(sub)} patients, "
                                           f"{sum(len(t) for _, t in sub.values())} lesions"))
    _atomic_write_text(out / "summary.txt", "\n".join(summary))
    sys.stdout.write("\n".join(summary))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oralcad", description="Mandibular lesion detection on CT volumes.")
    ap.add_argument("--config", help="settings file (INI); defaults apply when omitted")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="render a synthetic case with ground truth")
    p.add_argument("--spec", help="phantom spec (JSON); otherwise a random spec is drawn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cb", type=int, default=0, help="close-border lesions to implant")
    p.add_argument("--ob", type=int, default=0, help="open-border lesions to implant")
    p.add_argument("--cavities", type=int, default=0, help="normal marrow cavities")
    p.add_argument("--slices", type=int, default=100)
    p.add_argument("--patient-id")
    p.add_argument("--out", required=True, help="output case directory")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("train", help="train the close-border classifier")
    p.add_argument("cases", nargs="+", help="case directories")
    p.add_argument("--out", required=True, help="model file (JSON)")
    p.add_argument("--report", help="training report path (default: <model>.report.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="detect lesions in one volume")
    p.add_argument("volume", help="case directory or raw uint16 file")
    p.add_argument("--shape", type=int, nargs=3, metavar=("WIDTH", "HEIGHT", "SLICES"))
    p.add_argument("--patient-id")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, help="lesion score threshold (default from settings)")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="FROC analysis against ground truth")
    p.add_argument("--detections", nargs="+", help="detections.tsv files from detect")
    p.add_argument("--volumes", nargs="+", help="case directories to run detection on")
    p.add_argument("--model", help="model for --volumes")
    p.add_argument("--truth", nargs="+", help="ground-truth files (default: each case's truth.tsv)")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.settings = load_settings(args.config)
        if getattr(args, "threshold", None) is not None and not 0 <= args.threshold <= 1:
            raise ContractError(f"threshold must lie in [0, 1], got {args.threshold}")
        if args.command == "evaluate" and not (args.detections or args.volumes):
            raise ContractError("evaluate needs --detections or --volumes")
        return args.func(args)
    except OralCadError as exc:
        print(f"oralcad {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"oralcad {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
