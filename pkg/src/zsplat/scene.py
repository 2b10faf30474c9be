"""Cameras, point-cloud assembly from posed depth maps, and file IO.

The on-disk formats are:

* tensor container: one JSON header line ``{"dtype": "f32", "shape": [...]}``
  followed by little-endian row-major payload bytes;
* camera JSON: pinhole intrinsics plus a 16-element row-major camera-to-world
  matrix;
* Gaussian PLY: binary little-endian with the 3DGS vertex layout (positions,
  zero normals, f_dc/f_rest SH coefficients, logit opacity, log scales,
  quaternion rotation), one float32 per property.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, InputError, ValidationError

# ---------------------------------------------------------------------------
# cameras


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with a rigid camera-to-world transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    cam_to_world: np.ndarray  # (4, 4) float64

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        m = np.asarray(self.cam_to_world, dtype=np.float64)
        if m.shape != (4, 4):
            raise InputError(f"cam_to_world must be 4x4, got {m.shape}")
        if not np.isfinite(m).all():
            raise InputError("cam_to_world contains non-finite values")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise InputError("cam_to_world last row must be [0, 0, 0, 1]")
        object.__setattr__(self, "cam_to_world", m)

    @property
    def rotation(self) -> np.ndarray:
        return self.cam_to_world[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.cam_to_world[:3, 3]

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "cam_to_world": [float(v) for v in self.cam_to_world.reshape(16)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Camera":
        try:
            fx, fy = float(data["fx"]), float(data["fy"])
            cx, cy = float(data["cx"]), float(data["cy"])
            mat = data["cam_to_world"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad camera record: {exc}") from exc
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape != (16,):
            raise FormatError(f"cam_to_world must hold 16 numbers, got shape {mat.shape}")
        return cls(fx, fy, cx, cy, mat.reshape(4, 4))


def read_camera(path) -> Camera:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid camera JSON: {exc}") from exc
    return Camera.from_dict(data)


def write_camera(path, camera: Camera) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(camera.to_dict(), fh, indent=2)
        fh.write("\n")


def unproject(depth: np.ndarray, camera: Camera) -> np.ndarray:
    """Lift an (H, W) depth map to world points, row-major pixel order.

    Depth is the camera-space z distance of the surface along each pixel ray
    ((u - cx)/fx, (v - cy)/fy, 1). Non-finite or negative depths are
    rejected; zero depth is allowed and degenerates to the camera center.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise InputError(f"depth map must be 2-D, got shape {depth.shape}")
    if not np.isfinite(depth).all():
        raise InputError("depth map contains non-finite values")
    if depth.size and depth.min() < 0:
        raise InputError("depth map contains negative values")
    h, w = depth.shape
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    z = depth
    x_cam = (u - camera.cx) / camera.fx * z
    y_cam = (v - camera.cy) / camera.fy * z
    pts_cam = np.stack([x_cam, y_cam, z], axis=-1).reshape(-1, 3)
    return pts_cam @ camera.rotation.T + camera.position


def project(points: np.ndarray, camera: Camera) -> np.ndarray:
    """World points to (u, v, z_cam) pixel coordinates; inverse of unproject."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pts_cam = (points - camera.position) @ camera.rotation
    z = pts_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = pts_cam[:, 0] / z * camera.fx + camera.cx
        v = pts_cam[:, 1] / z * camera.fy + camera.cy
    return np.stack([u, v, z], axis=1)


# ---------------------------------------------------------------------------
# point representation


@dataclass(frozen=True)
class PointRepresentation:
    """Structure-of-arrays point set carried through the transformer.

    positions (M, 3) float64, features (M, C) float32, colors (M, 3) float64
    in [0, 1], view_of (M,) int32 source-view index.
    """

    positions: np.ndarray
    features: np.ndarray
    colors: np.ndarray
    view_of: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        feat = np.ascontiguousarray(self.features)
        col = np.ascontiguousarray(self.colors, dtype=np.float64)
        view = np.ascontiguousarray(self.view_of, dtype=np.int32)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise InputError(f"positions must be (M, 3), got {pos.shape}")
        m = pos.shape[0]
        if feat.ndim != 2 or feat.shape[0] != m:
            raise InputError(f"features must be (M, C), got {feat.shape} for M={m}")
        if col.shape != (m, 3):
            raise InputError(f"colors must be (M, 3), got {col.shape}")
        if view.shape != (m,):
            raise InputError(f"view_of must be (M,), got {view.shape}")
        for name, arr in (("positions", pos), ("features", feat), ("colors", col)):
            if not np.isfinite(arr).all():
                raise InputError(f"{name} contain non-finite values")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "features", feat)
        object.__setattr__(self, "colors", col)
        object.__setattr__(self, "view_of", view)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def feature_width(self) -> int:
        return self.features.shape[1]

    def take(self, index: np.ndarray) -> "PointRepresentation":
        """Reindex every array with the same permutation / selection."""
        return PointRepresentation(
            self.positions[index],
            self.features[index],
            self.colors[index],
            self.view_of[index],
        )

    def with_features(self, features: np.ndarray) -> "PointRepresentation":
        return replace(self, features=features)


def assemble(views) -> PointRepresentation:
    """Concatenate per-view unprojections into one representation.

    ``views`` is a sequence of (depth (H, W), Camera, colors (H, W, 3),
    features (H, W, C) or (H*W, C)) tuples. Feature width must agree across
    views; view_of records each point's position in the input sequence.
    """
    if len(views) == 0:
        raise InputError("assemble needs at least one view")
    parts_pos, parts_feat, parts_col, parts_view = [], [], [], []
    width = None
    for i, (depth, camera, colors, features) in enumerate(views):
        depth = np.asarray(depth, dtype=np.float64)
        pts = unproject(depth, camera)
        m = pts.shape[0]
        colors = np.asarray(colors, dtype=np.float64).reshape(m, 3)
        if colors.min() < 0.0 or colors.max() > 1.0:
            raise InputError(f"view {i}: colors must lie in [0, 1]")
        features = np.asarray(features, dtype=np.float32).reshape(m, -1)
        if width is None:
            width = features.shape[1]
        elif features.shape[1] != width:
            raise InputError(
                f"view {i}: feature width {features.shape[1]} != {width} of view 0"
            )
        parts_pos.append(pts)
        parts_feat.append(features)
        parts_col.append(colors)
        parts_view.append(np.full(m, i, dtype=np.int32))
    return PointRepresentation(
        np.concatenate(parts_pos),
        np.concatenate(parts_feat),
        np.concatenate(parts_col),
        np.concatenate(parts_view),
    )


# ---------------------------------------------------------------------------
# Gaussians


@dataclass(frozen=True)
class Gaussians:
    """Predicted primitives: centers (M, 3), opacities (M,) in (0, 1),
    unit quaternions (M, 4), positive scales (M, 3), SH coefficients (M, 27)."""

    centers: np.ndarray
    opacities: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    sh: np.ndarray

    def __len__(self) -> int:
        return self.centers.shape[0]

    def validate(self) -> None:
        """Raise ValidationError naming the first offending primitive."""
        m = len(self)
        checks = [
            ("centers", self.centers, (m, 3)),
            ("opacities", self.opacities, (m,)),
            ("rotations", self.rotations, (m, 4)),
            ("scales", self.scales, (m, 3)),
            ("sh", self.sh, (m, 27)),
        ]
        for name, arr, shape in checks:
            if arr.shape != shape:
                raise ValidationError(f"{name}: expected shape {shape}, got {arr.shape}")
            bad = ~np.isfinite(arr).reshape(m, -1).all(axis=1)
            if bad.any():
                raise ValidationError(f"{name}: non-finite at index {int(bad.argmax())}")
        bad = (self.opacities <= 0.0) | (self.opacities >= 1.0)
        if bad.any():
            i = int(bad.argmax())
            raise ValidationError(
                f"opacities: value {self.opacities[i]} at index {i} not in (0, 1)"
            )
        norms = np.linalg.norm(self.rotations, axis=1)
        bad = np.abs(norms - 1.0) > 1e-6
        if bad.any():
            i = int(bad.argmax())
            raise ValidationError(f"rotations: norm {norms[i]} at index {i} != 1")
        bad = (self.scales <= 0.0).any(axis=1)
        if bad.any():
            i = int(bad.argmax())
            raise ValidationError(f"scales: non-positive entry at index {i}")


# ---------------------------------------------------------------------------
# tensor container


_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def write_tensor(path, array: np.ndarray) -> None:
    """Write a float32/float64 array: JSON header line, then raw payload."""
    array = np.asarray(array)
    name = _DTYPE_NAMES.get(array.dtype)
    if name is None:
        raise InputError(f"container supports float32/float64, got {array.dtype}")
    header = json.dumps(
        {"dtype": name, "shape": list(array.shape)}, separators=(", ", ": ")
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(array, dtype=_DTYPES[name]).tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a tensor container; FormatError carries the failing byte offset."""
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n", 0, 65536)
    if nl < 0:
        raise FormatError("missing header newline", offset=min(len(blob), 65536))
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad header JSON: {exc}", offset=0) from exc
    if not isinstance(header, dict):
        raise FormatError("header must be a JSON object", offset=0)
    dtype_name = header.get("dtype")
    if dtype_name not in _DTYPES:
        raise FormatError(f"unsupported dtype {dtype_name!r}", offset=0)
    shape = header.get("shape")
    if (
        not isinstance(shape, list)
        or not all(isinstance(d, int) and d >= 0 for d in shape)
    ):
        raise FormatError(f"bad shape {shape!r}", offset=0)
    dtype = _DTYPES[dtype_name]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    expected = count * dtype.itemsize
    payload = blob[nl + 1 :]
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes, header implies {expected}",
            offset=nl + 1 + min(len(payload), expected),
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


# ---------------------------------------------------------------------------
# scene directories (view_<i>/{depth.tns, camera.json, color.tns, feature.tns})


def write_scene_dir(path, views) -> None:
    """Write (depth, Camera, colors, features) tuples as a scene directory."""
    os.makedirs(path, exist_ok=True)
    for i, (depth, camera, colors, features) in enumerate(views):
        vdir = os.path.join(path, f"view_{i}")
        os.makedirs(vdir, exist_ok=True)
        write_tensor(os.path.join(vdir, "depth.tns"), np.asarray(depth, np.float32))
        write_camera(os.path.join(vdir, "camera.json"), camera)
        write_tensor(os.path.join(vdir, "color.tns"), np.asarray(colors, np.float32))
        write_tensor(os.path.join(vdir, "feature.tns"), np.asarray(features, np.float32))


def load_view_dir(vdir):
    depth = read_tensor(os.path.join(vdir, "depth.tns"))
    camera = read_camera(os.path.join(vdir, "camera.json"))
    colors = read_tensor(os.path.join(vdir, "color.tns"))
    features = read_tensor(os.path.join(vdir, "feature.tns"))
    return depth, camera, colors, features


def load_scene_dir(path, max_workers: int = 1):
    """Load ``view_<i>`` subdirectories in index order.

    ``max_workers`` > 1 reads views concurrently; the returned list is always
    in view order, so the assembled representation does not depend on it.
    """
    names = sorted(
        (d for d in os.listdir(path) if d.startswith("view_")),
        key=lambda d: int(d.split("_", 1)[1]),
    )
    if not names:
        raise InputError(f"no view_<i> directories under {path}")
    dirs = [os.path.join(path, d) for d in names]
    if max_workers <= 1:
        return [load_view_dir(d) for d in dirs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(load_view_dir, dirs))


# ---------------------------------------------------------------------------
# Gaussian PLY


_PLY_FIELDS = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(24)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


def write_gaussians_ply(path, gaussians: Gaussians) -> None:
    """Write primitives in the 3DGS binary vertex layout.

    Opacity is stored as its logit and scales as their logs, so a renderer
    applying sigmoid/exp recovers the constructor values. f_dc holds the
    first SH coefficient per channel, f_rest the remaining 24 channel-major.
    """
    gaussians.validate()
    m = len(gaussians)
    dtype = np.dtype([(name, "<f4") for name in _PLY_FIELDS])
    rec = np.zeros(m, dtype=dtype)
    for i, axis in enumerate("xyz"):
        rec[axis] = gaussians.centers[:, i]
    for i in range(3):
        rec[f"f_dc_{i}"] = gaussians.sh[:, i]
    for i in range(24):
        rec[f"f_rest_{i}"] = gaussians.sh[:, 3 + i]
    rec["opacity"] = _logit(gaussians.opacities)
    for i in range(3):
        rec[f"scale_{i}"] = np.log(gaussians.scales[:, i])
    for i in range(4):
        rec[f"rot_{i}"] = gaussians.rotations[:, i]
    header_lines = ["ply", "format binary_little_endian 1.0", f"element vertex {m}"]
    header_lines += [f"property float {name}" for name in _PLY_FIELDS]
    header_lines.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header_lines) + "\n").encode("ascii"))
        fh.write(rec.tobytes())


def read_gaussians_ply(path) -> Gaussians:
    """Read a PLY written by :func:`write_gaussians_ply`, undoing the
    opacity/scale transforms."""
    with open(path, "rb") as fh:
        blob = fh.read()
    end_tag = b"end_header\n"
    end = blob.find(end_tag)
    if end < 0:
        raise FormatError("missing end_header", offset=len(blob))
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    if not header or header[0] != "ply":
        raise FormatError("not a PLY file", offset=0)
    if "format binary_little_endian 1.0" not in header[1:3]:
        raise FormatError("expected binary little-endian 1.0", offset=4)
    count = None
    props = []
    for line in header:
        if line.startswith("element vertex "):
            count = int(line.split()[-1])
        elif line.startswith("element "):
            raise FormatError(f"unsupported element: {line}", offset=blob.find(line.encode()))
        elif line.startswith("property "):
            parts = line.split()
            if parts[1] != "float":
                raise FormatError(f"non-float property: {line}", offset=blob.find(line.encode()))
            props.append(parts[2])
    if count is None:
        raise FormatError("missing vertex element", offset=0)
    if props != _PLY_FIELDS:
        raise FormatError(
            f"vertex properties differ from the Gaussian layout (got {len(props)})",
            offset=0,
        )
    payload = blob[end + len(end_tag) :]
    dtype = np.dtype([(name, "<f4") for name in _PLY_FIELDS])
    expected = count * dtype.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes, header implies {expected}",
            offset=end + len(end_tag) + min(len(payload), expected),
        )
    rec = np.frombuffer(payload, dtype=dtype)
    centers = np.stack([rec[a] for a in "xyz"], axis=1).astype(np.float64)
    sh = np.stack(
        [rec[f"f_dc_{i}"] for i in range(3)]
        + [rec[f"f_rest_{i}"] for i in range(24)],
        axis=1,
    ).astype(np.float64)
    opacities = 1.0 / (1.0 + np.exp(-rec["opacity"].astype(np.float64)))
    scales = np.exp(
        np.stack([rec[f"scale_{i}"] for i in range(3)], axis=1).astype(np.float64)
    )
    rotations = np.stack([rec[f"rot_{i}"] for i in range(4)], axis=1).astype(np.float64)
    return Gaussians(centers, opacities, rotations, scales, sh)
