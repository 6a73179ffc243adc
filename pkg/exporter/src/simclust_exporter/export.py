"""Turn an image folder tree (one subfolder per class) into an embedding store.

Features are the post-average-pool activations of a torchvision residual
network (2048-dim for the default 152-layer model), extracted in inference
mode with the standard ImageNet evaluation preprocessing: resize to 256,
center-crop 224, normalize. The classifier layer is replaced by identity so
the forward pass ends at the pooled feature vector.

Weights come from torchvision's standard pretrained checkpoint by default.
Environments that cannot fetch checkpoints can use seed-initialized random
weights instead; either way the weight provenance lands in the manifest's
source_tag, and the export is a deterministic function of (images, model,
weights).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision import models, transforms

from .formats import safe_filename, save_fvec, write_manifest

MODEL_REGISTRY = {
    "resnet18": (models.resnet18, 512),
    "resnet34": (models.resnet34, 512),
    "resnet50": (models.resnet50, 2048),
    "resnet101": (models.resnet101, 2048),
    "resnet152": (models.resnet152, 2048),
}
DEFAULT_MODEL = "resnet152"

IMAGENET_MEAN = [0.485, 0.456, 0.406]
IMAGENET_STD = [0.229, 0.224, 0.225]


@dataclass
class ExportSpec:
    images_root: Path
    output_dir: Path
    model_name: str = DEFAULT_MODEL
    batch_size: int = 8
    weights: str = "pretrained"  # or "random" for checkpoint-free environments
    seed: int = 0

    def __post_init__(self):
        self.images_root = Path(self.images_root)
        self.output_dir = Path(self.output_dir)
        if not self.images_root.is_dir():
            raise FileNotFoundError(f"images root {self.images_root} is not a directory")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.model_name not in MODEL_REGISTRY:
            raise ValueError(
                f"unknown model {self.model_name!r}; choose from {sorted(MODEL_REGISTRY)}"
            )
        if self.weights not in ("pretrained", "random"):
            raise ValueError("weights must be 'pretrained' or 'random'")


def build_model(spec: ExportSpec) -> tuple[torch.nn.Module, int, str]:
    ctor, dim = MODEL_REGISTRY[spec.model_name]
    if spec.weights == "pretrained":
        model = ctor(weights="IMAGENET1K_V1")
        tag = "IMAGENET1K_V1"
    else:
        torch.manual_seed(spec.seed)
        model = ctor(weights=None)
        tag = f"random-seed-{spec.seed}"
    model.fc = torch.nn.Identity()  # forward() now returns the pooled features
    model.eval()
    return model, dim, tag


def eval_transform() -> transforms.Compose:
    return transforms.Compose(
        [
            transforms.Resize(256),
            transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
        ]
    )


def list_class_folders(images_root: Path) -> list[Path]:
    folders = sorted(p for p in images_root.iterdir() if p.is_dir())
    if not folders:
        raise ValueError(f"no class subfolders under {images_root}")
    return folders


def export(spec: ExportSpec) -> Path:
    """Write manifest + one FVEC file per class; returns the manifest path.

    Undecodable images are skipped and listed in export_report.json; a class
    with no decodable image at all is a hard error.
    """
    model, dim, weights_tag = build_model(spec)
    transform = eval_transform()

    out = spec.output_dir
    (out / "classes").mkdir(parents=True, exist_ok=True)
    entries = []
    skipped: dict[str, list[str]] = {}
    with torch.no_grad():
        for folder in list_class_folders(spec.images_root):
            tensors = []
            bad = []
            for image_path in sorted(folder.iterdir()):
                if not image_path.is_file():
                    continue
                try:
                    with Image.open(image_path) as img:
                        tensors.append(transform(img.convert("RGB")))
                except (UnidentifiedImageError, OSError):
                    bad.append(image_path.name)
            if bad:
                skipped[folder.name] = bad
            if not tensors:
                raise ValueError(f"class folder {folder} has no decodable image")

            rows = []
            for i in range(0, len(tensors), spec.batch_size):
                batch = torch.stack(tensors[i : i + spec.batch_size])
                rows.append(model(batch).numpy().astype(np.float32))
            vectors = np.concatenate(rows)

            fname = f"{safe_filename(folder.name)}.fvec"
            save_fvec(vectors, out / "classes" / fname)
            entries.append(
                {"name": folder.name, "file": f"classes/{fname}", "count": len(tensors)}
            )

    manifest_path = out / "manifest.json"
    write_manifest(dim, entries, f"{spec.model_name}:{weights_tag}", manifest_path)
    with open(out / "export_report.json", "w") as f:
        json.dump(
            {
                "model": spec.model_name,
                "weights": weights_tag,
                "classes": len(entries),
                "images": sum(e["count"] for e in entries),
                "skipped": skipped,
            },
            f,
            indent=2,
        )
        f.write("\n")
    return manifest_path
