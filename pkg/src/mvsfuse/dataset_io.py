"""Persistence for depth maps (PFM), images (8-bit PNG) and sequence manifests (JSON)."""

from __future__ import annotations

import csv
import json
import os
import re
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import MalformedHeader, SchemaViolation, UnsupportedFormat
from .geometry import CameraIntrinsics, Pose
from .scene_synth import Frame, Sequence

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


# --- PFM ------------------------------------------------------------------


def write_pfm(path, depth: np.ndarray) -> None:
    """Write a single-channel map as little-endian PFM ("Pf", scale -1.0).

    Rows are stored bottom-to-top as the format requires.
    """
    data = np.asarray(depth)
    if data.ndim != 2:
        raise ValueError(f"PFM writer expects a 2-D map, got shape {data.shape}")
    h, w = data.shape
    body = np.flipud(data).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(body)


def _read_token_line(fh) -> str:
    line = fh.readline()
    if not line:
        raise MalformedHeader("unexpected end of file in PFM header")
    return line.decode("ascii", errors="replace").strip()


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 (H, W) or (H, W, 3) array, top row first."""
    with open(path, "rb") as fh:
        ident = _read_token_line(fh)
        if ident not in ("Pf", "PF"):
            raise MalformedHeader(f"bad PFM identifier {ident!r}")
        dims = _read_token_line(fh)
        m = re.fullmatch(r"(\d+)\s+(\d+)", dims)
        if not m:
            raise MalformedHeader(f"bad PFM dimensions line {dims!r}")
        w, h = int(m.group(1)), int(m.group(2))
        try:
            scale = float(_read_token_line(fh))
        except ValueError as exc:
            raise MalformedHeader("bad PFM scale line") from exc
        if scale == 0:
            raise MalformedHeader("PFM scale must be non-zero")
        channels = 3 if ident == "PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        raw = fh.read()
    count = w * h * channels
    if len(raw) < 4 * count:
        raise MalformedHeader(f"PFM body holds {len(raw) // 4} values, expected {count}")
    data = np.frombuffer(raw[: 4 * count], dtype=dtype).astype(np.float32)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return np.flipud(data.reshape(shape)).copy()


# --- PNG ------------------------------------------------------------------


def write_image(path, img: np.ndarray) -> None:
    """Quantise [0, 1] values to bytes with round(v * 255) and write a PNG."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if not (arr.ndim == 2 or (arr.ndim == 3 and arr.shape[2] == 3)):
        raise UnsupportedFormat(f"cannot write image of shape {arr.shape}")
    arr = np.nan_to_num(arr, nan=0.0)
    data = np.round(np.clip(arr, 0.0, 1.0) * 255).astype(np.uint8)
    PILImage.fromarray(data).save(path, format="PNG")


def read_image(path) -> np.ndarray:
    with PILImage.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            arr = np.asarray(im.convert("L"))
        elif im.mode in ("RGB", "RGBA", "P"):
            arr = np.asarray(im.convert("RGB"))
        else:
            raise UnsupportedFormat(f"unsupported PNG mode {im.mode}")
    return arr.astype(np.float64) / 255.0


def write_mask(path, mask: np.ndarray) -> None:
    PILImage.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    """Nonzero pixels are true."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 0


# --- manifests ------------------------------------------------------------


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise SchemaViolation(f"{where}.{key}" if where else key, "missing required field")
    return d[key]


def _numbers(value, n: int, where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64).reshape(-1)
    except (TypeError, ValueError):
        raise SchemaViolation(where, f"expected {n} numbers") from None
    if arr.size != n or not np.all(np.isfinite(arr)):
        raise SchemaViolation(where, f"expected {n} finite numbers")
    return arr


def _parse_pose(d: dict, where: str) -> Pose:
    rot = _numbers(_require(d, "rotation", where), 9, f"{where}.rotation").reshape(3, 3)
    trans = _numbers(_require(d, "translation", where), 3, f"{where}.translation")
    ortho = np.max(np.abs(rot.T @ rot - np.eye(3)))
    if ortho > 1e-6 or abs(np.linalg.det(rot) - 1.0) > 1e-6:
        raise SchemaViolation(f"{where}.rotation", "rotation not SO(3)")
    return Pose(rot, trans)


def _parse_intrinsics(d: dict) -> CameraIntrinsics:
    vals = {}
    for key in ("fx", "fy", "cx", "cy", "width", "height"):
        v = _require(d, key, "intrinsics")
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise SchemaViolation(f"intrinsics.{key}", "expected a number")
        vals[key] = v
    for key in ("width", "height"):
        if vals[key] != int(vals[key]):
            raise SchemaViolation(f"intrinsics.{key}", "expected an integer")
        vals[key] = int(vals[key])
    try:
        return CameraIntrinsics(**vals)
    except ValueError as exc:
        raise SchemaViolation("intrinsics", str(exc)) from None


def parse_manifest(doc: dict, base: Path) -> dict:
    """Validate a manifest document; returns resolved fields without loading files."""
    if not isinstance(doc, dict):
        raise SchemaViolation("", "manifest must be a JSON object")
    version = _require(doc, "version", "")
    if version != MANIFEST_VERSION:
        raise SchemaViolation("version", f"unsupported version {version!r}")
    intr = _parse_intrinsics(_require(doc, "intrinsics", ""))
    frames = _require(doc, "frames", "")
    if not isinstance(frames, list) or not frames:
        raise SchemaViolation("frames", "expected a non-empty list")
    parsed = []
    for i, fr in enumerate(frames):
        where = f"frames[{i}]"
        entry = {"cam_to_world": _parse_pose(_require(fr, "cam_to_world", where), f"{where}.cam_to_world")}
        entry["image_path"] = base / _require(fr, "image_path", where)
        for key in ("gt_depth_path", "prior_depth_path", "dynamic_mask_path"):
            entry[key] = base / fr[key] if fr.get(key) else None
        for key in ("image_path", "gt_depth_path", "prior_depth_path", "dynamic_mask_path"):
            if entry[key] is not None and not entry[key].exists():
                raise SchemaViolation(f"{where}.{key}", f"file not found: {entry[key]}")
        parsed.append(entry)
    return {"intrinsics": intr, "frames": parsed, "name": doc.get("name", "")}


def load_sequence(manifest_path) -> Sequence:
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("", f"invalid JSON: {exc}") from None
    parsed = parse_manifest(doc, manifest_path.parent)
    k = parsed["intrinsics"]
    frames = []
    for i, fr in enumerate(parsed["frames"]):
        image = read_image(fr["image_path"])
        if image.shape[:2] != k.shape:
            raise SchemaViolation(f"frames[{i}].image_path", "image size disagrees with intrinsics")
        gt = read_pfm(fr["gt_depth_path"]) if fr["gt_depth_path"] else None
        prior = read_pfm(fr["prior_depth_path"]) if fr["prior_depth_path"] else None
        mask = read_mask(fr["dynamic_mask_path"]) if fr["dynamic_mask_path"] else None
        frames.append(Frame(image, gt, fr["cam_to_world"], mask, prior))
    return Sequence(frames=frames, intrinsics=k, name=parsed["name"])


def _pose_doc(p: Pose) -> dict:
    return {
        "rotation": [float(x) for x in p.rotation.reshape(-1)],
        "translation": [float(x) for x in p.translation],
    }


def save_sequence(seq: Sequence, out_dir) -> Path:
    """Write images, depth maps, masks and ``manifest.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    for i, fr in enumerate(seq.frames):
        entry = {"image_path": f"image_{i:04d}.png"}
        write_image(out_dir / entry["image_path"], fr.image)
        if fr.gt_depth is not None:
            entry["gt_depth_path"] = f"depth_{i:04d}.pfm"
            write_pfm(out_dir / entry["gt_depth_path"], fr.gt_depth)
        if fr.prior_depth is not None:
            entry["prior_depth_path"] = f"prior_{i:04d}.pfm"
            write_pfm(out_dir / entry["prior_depth_path"], fr.prior_depth)
        if fr.dynamic_mask is not None:
            entry["dynamic_mask_path"] = f"dynamic_{i:04d}.png"
            write_mask(out_dir / entry["dynamic_mask_path"], fr.dynamic_mask)
        entry["cam_to_world"] = _pose_doc(fr.cam_to_world)
        frames.append(entry)
    doc = {
        "version": MANIFEST_VERSION,
        "name": seq.name,
        "intrinsics": seq.intrinsics.to_dict(),
        "frames": frames,
    }
    path = out_dir / MANIFEST_NAME
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def write_csv(path, header: list, rows: list) -> None:
    """CSV writer shared by the reports; floats get 9 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in row])


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
