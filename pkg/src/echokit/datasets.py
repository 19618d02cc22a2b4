"""Turn generated scenes into training samples and on-disk datasets.

Dataset directories hold CTR1 tensors plus a ``labels.csv`` in the schema
of the consuming model (``clip_path,ef_percent`` for EF,
``frame_path,x1,y1,...,x4,y4,mm_per_pixel`` for LVD) and a
``manifest.json`` recording generation parameters and seeds.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

from .beats import area_signal, detect_extrema, extract_beats
from .ef import EF_LABEL_HEADER, EfSample
from .lvd import LVD_LABEL_HEADER, LvdSample
from .synth import (
    EfDatasetSpec,
    EfScene,
    LvdDatasetSpec,
    LvdScene,
    generate_ef_scenes,
    generate_lvd_scenes,
)
from .tensorio import write_tensor


def ef_samples_from_scene(scene: EfScene, video_id: str) -> list[EfSample]:
    """Beat clips of one video via the detection pipeline, labeled with its EF."""
    signal = area_signal(scene.masks, scene.frame_rate)
    extrema = detect_extrema(signal)
    clips = extract_beats(scene.video, extrema)
    return [EfSample(clip=c, ef_true=scene.ef_true, video_id=video_id) for c in clips]


def build_ef_samples(spec: EfDatasetSpec) -> list[EfSample]:
    samples = []
    for i, scene in enumerate(generate_ef_scenes(spec)):
        samples.extend(ef_samples_from_scene(scene, video_id=f"video_{i:04d}"))
    return samples


def lvd_samples_from_scenes(scenes: list[LvdScene]) -> list[LvdSample]:
    return [
        LvdSample(
            frame=s.frame,
            keypoints=s.keypoints,
            mm_per_pixel=s.params.mm_per_pixel,
        )
        for s in scenes
    ]


def build_lvd_samples(spec: LvdDatasetSpec) -> list[LvdSample]:
    return lvd_samples_from_scenes(generate_lvd_scenes(spec))


def write_ef_dataset(out_dir, spec: EfDatasetSpec) -> dict:
    """Generate and write an EF dataset directory; returns the manifest."""
    out_dir = Path(out_dir)
    (out_dir / "clips").mkdir(parents=True, exist_ok=True)
    rows = []
    clip_meta = []
    for i, scene in enumerate(generate_ef_scenes(spec)):
        video_id = f"video_{i:04d}"
        for j, sample in enumerate(ef_samples_from_scene(scene, video_id)):
            rel = f"clips/{video_id}_beat{j}.ctr"
            write_tensor(out_dir / rel, sample.clip.sub_video)
            rows.append({"clip_path": rel, "ef_percent": repr(sample.ef_true)})
            clip_meta.append(
                {
                    "clip_path": rel,
                    "video_id": video_id,
                    "start_frame": sample.clip.start_frame,
                    "end_frame": sample.clip.end_frame,
                }
            )
    manifest = {
        "kind": "ef",
        "spec": asdict(spec),
        "n_videos": spec.n_videos,
        "n_clips": len(rows),
        "clips": clip_meta,
    }
    _write_labels(out_dir / "labels.csv", EF_LABEL_HEADER, rows)
    _write_manifest(out_dir / "manifest.json", manifest)
    return manifest


def write_lvd_dataset(out_dir, spec: LvdDatasetSpec) -> dict:
    """Generate and write an LVD dataset directory; returns the manifest."""
    out_dir = Path(out_dir)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    rows = []
    for i, scene in enumerate(generate_lvd_scenes(spec)):
        rel = f"frames/frame_{i:04d}.ctr"
        write_tensor(out_dir / rel, scene.frame)
        row = {"frame_path": rel, "mm_per_pixel": repr(scene.params.mm_per_pixel)}
        for k in range(4):
            row[f"x{k + 1}"] = repr(float(scene.keypoints.points[k, 0]))
            row[f"y{k + 1}"] = repr(float(scene.keypoints.points[k, 1]))
        rows.append(row)
    manifest = {"kind": "lvd", "spec": asdict(spec), "n_frames": len(rows)}
    _write_labels(out_dir / "labels.csv", LVD_LABEL_HEADER, rows)
    _write_manifest(out_dir / "manifest.json", manifest)
    return manifest


def _write_labels(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)


def _write_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
