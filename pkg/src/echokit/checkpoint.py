"""Model checkpoints: a JSON manifest plus concatenated CTR1 parameter records.

A checkpoint is a directory with ``manifest.json`` (model kind, model
config, per-layer kinds and parameter shapes, plus caller extras such as
the training config) and ``params.ctr`` holding one CTR1 record per
parameter array in layer order.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .errors import ConfigurationError, ShapeError
from .nn import ModelGraph
from .tensorio import read_tensor_stream, write_tensor_stream

FORMAT = "echokit-checkpoint-v1"


def save_checkpoint(path, model_kind: str, model_config, graph: ModelGraph,
                    extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT,
        "model_kind": model_kind,
        "model_config": asdict(model_config),
        "layers": [
            {"kind": layer.kind, "param_shapes": [list(p.shape) for p in layer.params()]}
            for layer in graph.layers
        ],
        "extra": extra or {},
    }
    (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    with open(path / "params.ctr", "wb") as fh:
        for p in graph.params():
            write_tensor_stream(fh, p)
    return path


def load_manifest(path) -> dict:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing checkpoint manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT:
        raise ConfigurationError(
            f"{manifest_path}: unsupported format {manifest.get('format')!r}"
        )
    return manifest


def load_params_into(path, graph: ModelGraph) -> None:
    """Read params.ctr into an already-built graph, checking shapes."""
    path = Path(path)
    params = graph.params()
    with open(path / "params.ctr", "rb") as fh:
        for i, p in enumerate(params):
            stored = read_tensor_stream(fh)
            if stored.shape != p.shape:
                raise ShapeError(
                    f"checkpoint param {i} has shape {stored.shape}, model needs {p.shape}"
                )
            p[...] = stored
        if fh.read(1):
            raise ShapeError("checkpoint holds more parameters than the model")


def load_ef_model(path):
    from .ef import EfModel, EfModelConfig

    manifest = load_manifest(path)
    if manifest["model_kind"] != "ef":
        raise ConfigurationError(f"checkpoint at {path} is not an EF model")
    cfg = manifest["model_config"]
    config = EfModelConfig(
        frame_shape=tuple(cfg["frame_shape"]),
        encoder_dim=cfg["encoder_dim"],
        padding=cfg["padding"],
        seed=cfg["seed"],
    )
    model = EfModel.build(config)
    load_params_into(path, model.graph)
    return model, manifest


def load_lvd_model(path):
    from .lvd import LvdModel, LvdModelConfig

    manifest = load_manifest(path)
    if manifest["model_kind"] != "lvd":
        raise ConfigurationError(f"checkpoint at {path} is not an LVD model")
    cfg = manifest["model_config"]
    config = LvdModelConfig(
        frame_shape=tuple(cfg["frame_shape"]),
        channels=tuple(cfg["channels"]),
        hidden=cfg["hidden"],
        seed=cfg["seed"],
    )
    model = LvdModel.build(config)
    load_params_into(path, model.graph)
    return model, manifest
