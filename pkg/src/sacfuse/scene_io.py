"""Camera sets, depth rasters and point clouds on disk.

File layout of a scene directory::

    view_<id>.cam   fx fy cx cy width height, then three rows of [R|t]
    view_<id>.pfm   single-channel little-endian PFM depth raster
    view_<id>.ppm   optional binary P6 image

Depth is z-depth along the optical axis. Invalid depth is stored as 0.0;
NaN and non-positive values are treated as invalid on read.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_ORTHO_TOL = 1e-9


class SceneFormatError(ValueError):
    """Raised when a scene file is missing, malformed or inconsistent."""

    def __init__(self, path, reason: str):
        self.path = Path(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"raster must be non-empty, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} raster"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform: ``x_cam = rotation @ x_world + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose contains non-finite values")
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation has determinant != +1")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Depth raster of shape (height, width); invalid pixels are <= 0 or NaN."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"depth raster must be 2-D, got shape {v.shape}")
        # canonical invalid encoding
        v[~(np.isfinite(v) & (v > 0))] = 0.0
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def valid(self) -> np.ndarray:
        return self.values > 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, DepthMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class CameraView:
    view_id: int
    intrinsics: CameraIntrinsics
    pose: Pose
    depth: DepthMap
    image: np.ndarray | None = None

    def __post_init__(self):
        h, w = self.depth.shape
        if (w, h) != (self.intrinsics.width, self.intrinsics.height):
            raise ValueError(
                f"view {self.view_id}: depth raster is {w}x{h} but intrinsics declare "
                f"{self.intrinsics.width}x{self.intrinsics.height}"
            )
        if self.image is not None:
            img = np.asarray(self.image)
            if img.shape != (h, w, 3) or img.dtype != np.uint8:
                raise ValueError(
                    f"view {self.view_id}: image must be uint8 of shape {(h, w, 3)}, "
                    f"got {img.dtype} {img.shape}"
                )

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    def __eq__(self, other):
        if not isinstance(other, CameraView):
            return NotImplemented
        same_image = (self.image is None and other.image is None) or (
            self.image is not None
            and other.image is not None
            and np.array_equal(self.image, other.image)
        )
        return (
            self.view_id == other.view_id
            and self.intrinsics == other.intrinsics
            and self.pose == other.pose
            and self.depth == other.depth
            and same_image
        )


@dataclass(eq=False)
class PointCloud:
    """Points with optional integer view labels and uint8 RGB colors."""

    points: np.ndarray
    labels: np.ndarray | None = None
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")
        n = len(self.points)
        if self.labels is not None:
            self.labels = np.asarray(self.labels).reshape(-1)
            if len(self.labels) != n:
                raise ValueError(f"{len(self.labels)} labels for {n} points")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(self.colors) != n:
                raise ValueError(f"{len(self.colors)} colors for {n} points")

    def __len__(self) -> int:
        return len(self.points)


# ---------------------------------------------------------------------------
# PFM / PPM rasters


def write_pfm(path, values: np.ndarray) -> None:
    """Write a single-channel float32 little-endian PFM, rows bottom-up."""
    data = np.asarray(values, dtype="<f4")
    if data.ndim != 2:
        raise ValueError("PFM writer expects a 2-D raster")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(data[::-1]).tobytes())


def _read_header_tokens(f, count: int, path) -> list[bytes]:
    tokens: list[bytes] = []
    while len(tokens) < count:
        line = f.readline()
        if not line:
            raise SceneFormatError(path, "truncated header")
        line = line.split(b"#", 1)[0]
        tokens.extend(line.split())
    return tokens


def read_pfm(path) -> np.ndarray:
    """Read a single-channel PFM into a (height, width) float64 array."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            if magic == b"PF":
                raise SceneFormatError(path, "3-channel PFM is not a depth raster")
            raise SceneFormatError(path, f"bad PFM magic {magic!r}")
        try:
            w, h = (int(x) for x in _read_header_tokens(f, 2, path)[:2])
            scale = float(f.readline().strip())
        except ValueError as exc:
            raise SceneFormatError(path, f"malformed PFM header ({exc})") from None
        if w < 1 or h < 1 or scale == 0:
            raise SceneFormatError(path, "malformed PFM header")
        dtype = "<f4" if scale < 0 else ">f4"
        payload = f.read()
    if len(payload) < 4 * w * h:
        raise SceneFormatError(path, f"expected {4 * w * h} payload bytes, found {len(payload)}")
    data = np.frombuffer(payload[: 4 * w * h], dtype=dtype).reshape(h, w)[::-1]
    return data.astype(np.float64)


def write_ppm(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.uint8)
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P6":
            raise SceneFormatError(path, f"only binary P6 images are supported, got {magic!r}")
        try:
            w, h, maxval = (int(x) for x in _read_header_tokens(f, 3, path)[:3])
        except ValueError:
            raise SceneFormatError(path, "malformed PPM header") from None
        if maxval != 255:
            raise SceneFormatError(path, f"unsupported maxval {maxval}")
        payload = f.read()
    if len(payload) < 3 * w * h:
        raise SceneFormatError(path, "truncated PPM payload")
    return np.frombuffer(payload[: 3 * w * h], dtype=np.uint8).reshape(h, w, 3).copy()


# ---------------------------------------------------------------------------
# camera sets

_VIEW_RE = re.compile(r"^view_(\d+)\.cam$")


def write_camera_file(path, intrinsics: CameraIntrinsics, pose: Pose) -> None:
    K = intrinsics
    rows = [f"{K.fx!r} {K.fy!r} {K.cx!r} {K.cy!r} {K.width} {K.height}"]
    Rt = np.hstack([pose.rotation, pose.translation[:, None]])
    rows += [" ".join(repr(float(x)) for x in row) for row in Rt]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_camera_file(path) -> tuple[CameraIntrinsics, Pose]:
    try:
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    except FileNotFoundError:
        raise SceneFormatError(path, "camera file not found") from None
    if len(lines) < 4:
        raise SceneFormatError(path, f"expected 4 lines, found {len(lines)}")
    head = lines[0].split()
    if len(head) != 6:
        raise SceneFormatError(path, "header must be 'fx fy cx cy width height'")
    try:
        fx, fy, cx, cy = (float(x) for x in head[:4])
        width, height = int(head[4]), int(head[5])
        intrinsics = CameraIntrinsics(fx, fy, cx, cy, width, height)
    except ValueError as exc:
        raise SceneFormatError(path, f"malformed header: {exc}") from None
    try:
        Rt = np.array([[float(x) for x in ln.split()] for ln in lines[1:4]])
    except ValueError:
        raise SceneFormatError(path, "pose rows must be decimal numbers") from None
    if Rt.shape != (3, 4):
        raise SceneFormatError(path, "pose must be three rows of four values")
    try:
        pose = Pose(Rt[:, :3], Rt[:, 3])
    except ValueError as exc:
        raise SceneFormatError(path, str(exc)) from None
    return intrinsics, pose


def write_camera_set(directory, views: list[CameraView]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for view in views:
        stem = directory / f"view_{view.view_id}"
        write_camera_file(stem.with_suffix(".cam"), view.intrinsics, view.pose)
        write_pfm(stem.with_suffix(".pfm"), view.depth.values)
        if view.image is not None:
            write_ppm(stem.with_suffix(".ppm"), view.image)


def load_camera_set(directory) -> list[CameraView]:
    """Load every ``view_<id>`` triple in ``directory``, sorted by view id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise SceneFormatError(directory, "not a directory")
    ids = sorted(
        int(m.group(1)) for p in directory.iterdir() if (m := _VIEW_RE.match(p.name))
    )
    if not ids:
        raise SceneFormatError(directory, "no view_<id>.cam files (empty camera set)")
    views = []
    for vid in ids:
        stem = directory / f"view_{vid}"
        intrinsics, pose = read_camera_file(stem.with_suffix(".cam"))
        pfm = stem.with_suffix(".pfm")
        if not pfm.exists():
            raise SceneFormatError(pfm, "depth raster not found")
        depth = read_pfm(pfm)
        if depth.shape != (intrinsics.height, intrinsics.width):
            raise SceneFormatError(
                pfm,
                f"dimension mismatch: raster is {depth.shape[1]}x{depth.shape[0]}, "
                f"camera declares {intrinsics.width}x{intrinsics.height}",
            )
        ppm = stem.with_suffix(".ppm")
        image = None
        if ppm.exists():
            image = read_ppm(ppm)
            if image.shape[:2] != depth.shape:
                raise SceneFormatError(ppm, "image dimensions differ from depth raster")
        views.append(CameraView(vid, intrinsics, pose, DepthMap(depth), image))
    return views


# ---------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def write_point_cloud(cloud: PointCloud, path) -> None:
    """Write ``cloud`` as binary little-endian PLY.

    Coordinates are stored as 32-bit floats, labels as 32-bit ints.
    """
    points = np.asarray(cloud.points)
    if not np.all(np.isfinite(points)):
        raise ValueError("refusing to write non-finite coordinates")
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if cloud.labels is not None:
        fields.append(("view_label", "<i4"))
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    rec = np.empty(len(points), dtype=fields)
    rec["x"], rec["y"], rec["z"] = points[:, 0], points[:, 1], points[:, 2]
    if cloud.labels is not None:
        rec["view_label"] = cloud.labels
    if cloud.colors is not None:
        rec["red"], rec["green"], rec["blue"] = cloud.colors.T
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(points)}"]
    header += ["property float x", "property float y", "property float z"]
    if cloud.labels is not None:
        header.append("property int view_label")
    if cloud.colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(rec.tobytes())


def _parse_ply_header(f, path):
    if f.readline().strip() != b"ply":
        raise SceneFormatError(path, "not a PLY file")
    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    while True:
        raw = f.readline()
        if not raw:
            raise SceneFormatError(path, "missing end_header")
        parts = raw.decode("ascii", "replace").split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        key = parts[0]
        if key == "end_header":
            break
        if key == "format":
            fmt = parts[1]
        elif key == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif key == "property":
            if not elements:
                raise SceneFormatError(path, "property before element")
            if parts[1] == "list":
                raise SceneFormatError(path, f"list property in element '{elements[-1][0]}' not supported")
            if parts[1] not in _PLY_TYPES:
                raise SceneFormatError(path, f"unknown property type {parts[1]!r}")
            elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
    if fmt not in ("binary_little_endian", "ascii"):
        raise SceneFormatError(path, f"unsupported PLY format {fmt!r}")
    return fmt, elements


def load_point_cloud(path) -> PointCloud:
    """Read the vertex element of a binary little-endian or ASCII PLY."""
    with open(path, "rb") as f:
        fmt, elements = _parse_ply_header(f, path)
        body = f.read()
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise SceneFormatError(path, "no vertex element")
    vertex_idx = names.index("vertex")
    if vertex_idx != 0 and fmt == "binary_little_endian":
        # earlier elements would need skipping; they never occur in our files
        raise SceneFormatError(path, "vertex must be the first element")
    _, count, props = elements[vertex_idx]
    prop_names = [p[0] for p in props]
    if not {"x", "y", "z"} <= set(prop_names):
        raise SceneFormatError(path, "vertex element lacks x/y/z")
    if fmt == "binary_little_endian":
        dtype = np.dtype([(n, "<" + t) for n, t in props])
        need = dtype.itemsize * count
        if len(body) < need:
            raise SceneFormatError(path, f"truncated payload: need {need} bytes, found {len(body)}")
        rec = np.frombuffer(body[:need], dtype=dtype)
        col = {n: rec[n] for n in prop_names}
    else:
        rows = body.decode("ascii").split("\n")
        rows = [r for r in rows if r.strip()]
        if len(rows) < count:
            raise SceneFormatError(path, f"truncated payload: {count} vertices declared, {len(rows)} found")
        try:
            table = np.array([r.split()[: len(props)] for r in rows[:count]], dtype=np.float64)
        except ValueError:
            raise SceneFormatError(path, "malformed ASCII vertex row") from None
        table = table.reshape(count, len(props))
        col = {n: table[:, i].astype(t) for i, (n, t) in enumerate(props)}
    points = np.stack([col["x"], col["y"], col["z"]], axis=1)
    labels = col["view_label"].astype(np.int32) if "view_label" in col else None
    colors = None
    if {"red", "green", "blue"} <= set(col):
        colors = np.stack([col["red"], col["green"], col["blue"]], axis=1).astype(np.uint8)
    try:
        return PointCloud(points, labels, colors)
    except ValueError as exc:
        raise SceneFormatError(path, str(exc)) from None
