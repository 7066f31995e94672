"""Minimal GLB helpers: build test meshes, parse geometry, render a frontal view."""

from __future__ import annotations

import io
import json
import struct

import numpy as np
from PIL import Image, ImageDraw

_MAGIC = 0x46546C67  # "glTF"
_CHUNK_JSON = 0x4E4F534A
_CHUNK_BIN = 0x004E4942

_COMPONENT_DTYPES = {
    5121: np.uint8,
    5123: np.uint16,
    5125: np.uint32,
    5126: np.float32,
}


def build_box_glb(extents: tuple[float, float, float] = (1.0, 1.0, 1.0),
                  color: tuple[float, float, float] = (0.8, 0.8, 0.8)) -> bytes:
    """Assemble a single-mesh GLB box; deterministic bytes for fixed inputs."""
    hx, hy, hz = (e / 2.0 for e in extents)
    corners = np.array(
        [[-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
         [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz]],
        dtype=np.float32,
    )
    faces = np.array(
        [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
         [0, 1, 5], [0, 5, 4], [2, 3, 7], [2, 7, 6],
         [1, 2, 6], [1, 6, 5], [3, 0, 4], [3, 4, 7]],
        dtype=np.uint16,
    )
    pos_bytes = corners.tobytes()
    idx_bytes = faces.tobytes()
    pad = (-len(idx_bytes)) % 4
    bin_blob = pos_bytes + idx_bytes + b"\x00" * pad

    gltf = {
        "asset": {"version": "2.0", "generator": "bookforge"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0}],
        "meshes": [{"primitives": [{"attributes": {"POSITION": 0}, "indices": 1, "material": 0}]}],
        "materials": [{"pbrMetallicRoughness": {"baseColorFactor": [*color, 1.0]}}],
        "accessors": [
            {
                "bufferView": 0,
                "componentType": 5126,
                "count": len(corners),
                "type": "VEC3",
                "min": corners.min(axis=0).tolist(),
                "max": corners.max(axis=0).tolist(),
            },
            {"bufferView": 1, "componentType": 5123, "count": faces.size, "type": "SCALAR"},
        ],
        "bufferViews": [
            {"buffer": 0, "byteOffset": 0, "byteLength": len(pos_bytes)},
            {"buffer": 0, "byteOffset": len(pos_bytes), "byteLength": len(idx_bytes)},
        ],
        "buffers": [{"byteLength": len(bin_blob)}],
    }
    return _pack_glb(gltf, bin_blob)


def parse_glb(data: bytes) -> tuple[dict, bytes]:
    """Split a GLB container into its JSON document and binary blob."""
    if len(data) < 12:
        raise ValueError("GLB too short")
    magic, version, _length = struct.unpack_from("<III", data, 0)
    if magic != _MAGIC:
        raise ValueError("not a GLB container")
    if version != 2:
        raise ValueError(f"unsupported glTF version {version}")
    offset = 12
    doc: dict | None = None
    blob = b""
    while offset + 8 <= len(data):
        chunk_len, chunk_type = struct.unpack_from("<II", data, offset)
        offset += 8
        chunk = data[offset:offset + chunk_len]
        offset += chunk_len
        if chunk_type == _CHUNK_JSON:
            doc = json.loads(chunk.decode("utf-8"))
        elif chunk_type == _CHUNK_BIN:
            blob = chunk
    if doc is None:
        raise ValueError("GLB missing JSON chunk")
    return doc, blob


def extract_geometry(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Collect positions (N,3 float) and triangles (M,3 int) over all primitives.

    Node transforms are ignored; geometry is read in mesh-local coordinates.
    """
    doc, blob = parse_glb(data)
    all_positions: list[np.ndarray] = []
    all_triangles: list[np.ndarray] = []
    base = 0
    for mesh in doc.get("meshes", []):
        for prim in mesh.get("primitives", []):
            pos_idx = prim.get("attributes", {}).get("POSITION")
            if pos_idx is None:
                continue
            positions = _read_accessor(doc, blob, pos_idx).reshape(-1, 3).astype(np.float64)
            if "indices" in prim:
                tris = _read_accessor(doc, blob, prim["indices"]).astype(np.int64).reshape(-1, 3)
            else:
                tris = np.arange(len(positions), dtype=np.int64).reshape(-1, 3)
            all_positions.append(positions)
            all_triangles.append(tris + base)
            base += len(positions)
    if not all_positions:
        raise ValueError("GLB contains no geometry")
    return np.concatenate(all_positions), np.concatenate(all_triangles)


def render_frontal(glb_bytes: bytes, size: int = 512,
                   background: tuple[int, int, int] = (245, 245, 245)) -> bytes:
    """Render the mesh viewed from +Z, bounding box framed, as PNG bytes.

    Painter-sorted flat shading only; this is the fallback when a provider
    returns no frontal image of its own.
    """
    positions, triangles = extract_geometry(glb_bytes)
    base_color = _base_color(glb_bytes)

    xy = positions[:, :2]
    depth = positions[:, 2]
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    span = max(float((hi - lo).max()), 1e-9)
    margin = 0.1 * span
    scale = (size - 1) / (span + 2 * margin)
    center = (lo + hi) / 2.0

    def to_px(points: np.ndarray) -> np.ndarray:
        shifted = (points - center) * scale
        px = shifted[:, 0] + size / 2.0
        py = size / 2.0 - shifted[:, 1]  # +Y up
        return np.stack([px, py], axis=1)

    pixels = to_px(xy)
    light = np.array([0.3, 0.5, 0.81], dtype=np.float64)
    light /= np.linalg.norm(light)

    image = Image.new("RGB", (size, size), background)
    draw = ImageDraw.Draw(image)
    order = np.argsort([depth[tri].mean() for tri in triangles])  # far first
    for tri_idx in order:
        tri = triangles[tri_idx]
        a, b, c = positions[tri]
        normal = np.cross(b - a, c - a)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal /= norm
        if normal[2] < 0:  # back face w.r.t. +Z viewer
            continue
        shade = 0.35 + 0.65 * max(float(normal @ light), 0.0)
        rgb = tuple(int(min(255, round(channel * 255 * shade))) for channel in base_color)
        draw.polygon([tuple(pt) for pt in pixels[tri]], fill=rgb)

    out = io.BytesIO()
    image.save(out, format="PNG")
    return out.getvalue()


def _base_color(glb_bytes: bytes) -> tuple[float, float, float]:
    doc, _ = parse_glb(glb_bytes)
    for material in doc.get("materials", []):
        factor = material.get("pbrMetallicRoughness", {}).get("baseColorFactor")
        if factor:
            return tuple(factor[:3])
    return (0.8, 0.8, 0.8)


def _read_accessor(doc: dict, blob: bytes, accessor_index: int) -> np.ndarray:
    accessor = doc["accessors"][accessor_index]
    view = doc["bufferViews"][accessor["bufferView"]]
    dtype = _COMPONENT_DTYPES[accessor["componentType"]]
    components = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4}[accessor["type"]]
    count = accessor["count"] * components
    offset = view.get("byteOffset", 0) + accessor.get("byteOffset", 0)
    if view.get("byteStride") not in (None, components * np.dtype(dtype).itemsize):
        raise ValueError("interleaved buffer views are not supported")
    return np.frombuffer(blob, dtype=dtype, count=count, offset=offset).copy()


def _pack_glb(doc: dict, bin_blob: bytes) -> bytes:
    json_bytes = json.dumps(doc, separators=(",", ":"), sort_keys=True).encode("utf-8")
    json_bytes += b" " * ((-len(json_bytes)) % 4)
    header = struct.pack("<III", _MAGIC, 2, 12 + 8 + len(json_bytes) + 8 + len(bin_blob))
    return (
        header
        + struct.pack("<II", len(json_bytes), _CHUNK_JSON) + json_bytes
        + struct.pack("<II", len(bin_blob), _CHUNK_BIN) + bin_blob
    )
