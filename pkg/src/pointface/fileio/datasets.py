"""Manifest-driven dataset access and the directory sink used by the
generation command."""

from __future__ import annotations

from pathlib import Path

from ..errors import CloudFormatError, InvalidInput
from ..geometry.cloud import PointCloud
from ..morphable import DatasetManifest
from .cloudfile import load_cloud, save_cloud


class DirectorySink:
    """Writes clouds as <out>/clouds/<id>_<expr>.s3pc; returns the path
    recorded in the manifest (relative to the manifest's directory)."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        (self.out_dir / "clouds").mkdir(parents=True, exist_ok=True)

    def __call__(self, cloud: PointCloud, id_label: str, expr_label: str) -> str:
        rel = f"clouds/{id_label}_{expr_label}.s3pc"
        save_cloud(cloud, self.out_dir / rel)
        return rel


def load_manifest(path) -> DatasetManifest:
    return DatasetManifest.load(path)


def load_manifest_clouds(path, expr: str | None = None,
                         expr_not: str | None = None,
                         on_error: str = "raise"):
    """Load every cloud a manifest lists, labels attached from the records.

    expr / expr_not filter records by expression label. on_error="collect"
    returns (clouds, errors) instead of raising on unreadable files.
    """
    manifest = DatasetManifest.load(path)
    base = Path(path).parent
    clouds, errors = [], []
    for rec in manifest.records:
        if expr is not None and rec["expr_label"] != expr:
            continue
        if expr_not is not None and rec["expr_label"] == expr_not:
            continue
        file_path = base / rec["path"]
        try:
            cloud = load_cloud(file_path)
        except (OSError, CloudFormatError, InvalidInput) as exc:
            if on_error != "collect":
                raise
            errors.append({"path": str(file_path), "error": str(exc)})
            continue
        clouds.append(cloud.with_fields(id_label=rec["id_label"],
                                        expr_label=rec["expr_label"]))
    if on_error == "collect":
        return clouds, errors
    return clouds
