"""Point-cloud container and file formats.

Supported formats: PLY and PCD, ASCII and binary little-endian. Binary
round trips are bit-exact (coordinates stored as doubles); ASCII writes
use six decimal places. Only x/y/z geometry is evaluated; extra fields
are skipped on read. Non-finite points are dropped on load with a
counted warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "CloudFormatError",
    "NonFinitePointsWarning",
    "PointCloud",
    "export_error_map",
    "read_cloud",
    "write_cloud",
]


class CloudFormatError(ValueError):
    """Raised for malformed cloud files; the message names file and line."""


class NonFinitePointsWarning(UserWarning):
    def __init__(self, dropped: int, path) -> None:
        self.dropped = dropped
        super().__init__(f"dropped {dropped} non-finite point(s) while reading {path}")


@dataclass(frozen=True)
class PointCloud:
    """Ordered set of 3D points in meters, with optional 8-bit RGB colors.

    Construction rejects NaN/Inf coordinates; loaders filter them out
    before building the cloud.
    """

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self) -> None:
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain NaN or Inf")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            col = np.ascontiguousarray(np.asarray(self.colors, dtype=np.uint8))
            if col.shape != (len(pts), 3):
                raise ValueError(
                    f"colors must be ({len(pts)}, 3), got shape {col.shape}"
                )
            col.flags.writeable = False
            object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return self.points.shape[0]


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


def _fail(path, line_no: int, line: str, why: str) -> None:
    raise CloudFormatError(f"{path}:{line_no}: {why}: {line.strip()!r}")


def _finite_filter(xyz: np.ndarray, path) -> np.ndarray:
    good = np.all(np.isfinite(xyz), axis=1)
    dropped = int(len(xyz) - good.sum())
    if dropped:
        warnings.warn(NonFinitePointsWarning(dropped, path), stacklevel=3)
        return xyz[good]
    return xyz


def _read_ply(path: Path) -> PointCloud:
    with open(path, "rb") as f:
        line_no = 0

        def next_line() -> str:
            nonlocal line_no
            raw = f.readline()
            if not raw:
                raise CloudFormatError(f"{path}: header ended before end_header")
            line_no += 1
            return raw.decode("ascii", errors="replace").strip()

        magic = next_line()
        if magic != "ply":
            _fail(path, line_no, magic, "not a PLY file (missing 'ply' magic)")

        fmt = None
        vertex_count = None
        properties: list[tuple[str, str]] = []  # (name, numpy dtype code)
        in_vertex = False
        vertex_seen = False
        while True:
            line = next_line()
            if line == "end_header":
                break
            if not line or line.startswith("comment") or line.startswith("obj_info"):
                continue
            parts = line.split()
            if parts[0] == "format":
                if len(parts) != 3:
                    _fail(path, line_no, line, "malformed format line")
                if parts[1] == "binary_big_endian":
                    _fail(path, line_no, line, "big-endian PLY is not supported")
                if parts[1] not in ("ascii", "binary_little_endian"):
                    _fail(path, line_no, line, f"unknown format {parts[1]!r}")
                fmt = parts[1]
            elif parts[0] == "element":
                if len(parts) != 3:
                    _fail(path, line_no, line, "malformed element line")
                if parts[1] == "vertex":
                    try:
                        vertex_count = int(parts[2])
                    except ValueError:
                        _fail(path, line_no, line, "bad vertex count")
                    in_vertex = True
                    vertex_seen = True
                else:
                    if not vertex_seen:
                        # vertex data must come first or byte offsets are unknown
                        _fail(path, line_no, line,
                              f"element {parts[1]!r} precedes vertex; unsupported layout")
                    in_vertex = False
            elif parts[0] == "property":
                if not in_vertex:
                    continue
                if parts[1] == "list":
                    _fail(path, line_no, line, "list property in vertex element")
                if len(parts) != 3:
                    _fail(path, line_no, line, "malformed property line")
                if parts[1] not in _PLY_TYPES:
                    _fail(path, line_no, line, f"unknown property type {parts[1]!r}")
                properties.append((parts[2], _PLY_TYPES[parts[1]]))
            else:
                _fail(path, line_no, line, "unrecognized header keyword")

        if fmt is None:
            raise CloudFormatError(f"{path}: header has no format line")
        if vertex_count is None:
            raise CloudFormatError(f"{path}: header has no vertex element")
        names = [n for n, _ in properties]
        for axis in ("x", "y", "z"):
            if axis not in names:
                raise CloudFormatError(f"{path}: vertex element lacks property {axis!r}")
            if properties[names.index(axis)][1] not in ("f4", "f8"):
                raise CloudFormatError(f"{path}: property {axis!r} must be float or double")

        has_colors = all(c in names for c in ("red", "green", "blue"))

        if fmt == "ascii":
            try:
                body = np.loadtxt(f, dtype=np.float64, ndmin=2, max_rows=vertex_count)
            except ValueError as exc:
                raise CloudFormatError(f"{path}: bad ASCII vertex data: {exc}") from None
            if body.shape[0] != vertex_count:
                raise CloudFormatError(
                    f"{path}: expected {vertex_count} vertex rows, got {body.shape[0]}"
                )
            if body.shape[1] != len(names):
                raise CloudFormatError(
                    f"{path}: expected {len(names)} columns per vertex, got {body.shape[1]}"
                )
            xyz = body[:, [names.index("x"), names.index("y"), names.index("z")]]
            colors = (
                body[:, [names.index(c) for c in ("red", "green", "blue")]]
                if has_colors else None
            )
        else:
            dt = np.dtype([(n, "<" + code) for n, code in properties])
            expected = vertex_count * dt.itemsize
            raw = f.read(expected)
            if len(raw) < expected:
                raise CloudFormatError(
                    f"{path}: truncated binary body: expected {expected} bytes "
                    f"for {vertex_count} vertices, got {len(raw)}"
                )
            rec = np.frombuffer(raw, dtype=dt, count=vertex_count)
            xyz = np.stack(
                [rec["x"].astype(np.float64), rec["y"].astype(np.float64),
                 rec["z"].astype(np.float64)], axis=1,
            )
            colors = (
                np.stack([rec["red"], rec["green"], rec["blue"]], axis=1)
                if has_colors else None
            )

    kept = _finite_filter(xyz, path)
    if colors is not None and len(kept) != len(xyz):
        colors = colors[np.all(np.isfinite(xyz), axis=1)]
    return PointCloud(kept, colors=None if colors is None else np.asarray(colors, np.uint8))


_PCD_TYPE_SIZES = {("F", 4): "f4", ("F", 8): "f8",
                   ("I", 1): "i1", ("I", 2): "i2", ("I", 4): "i4", ("I", 8): "i8",
                   ("U", 1): "u1", ("U", 2): "u2", ("U", 4): "u4", ("U", 8): "u8"}


def _read_pcd(path: Path) -> PointCloud:
    header: dict[str, list[str]] = {}
    with open(path, "rb") as f:
        line_no = 0
        while True:
            raw = f.readline()
            if not raw:
                raise CloudFormatError(f"{path}: header ended before DATA line")
            line_no += 1
            line = raw.decode("ascii", errors="replace").strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            header[parts[0].upper()] = parts[1:]
            if parts[0].upper() == "DATA":
                break

        for key in ("FIELDS", "SIZE", "TYPE", "COUNT", "POINTS", "DATA"):
            if key not in header:
                raise CloudFormatError(f"{path}: PCD header lacks {key}")
        fields = header["FIELDS"]
        sizes = [int(s) for s in header["SIZE"]]
        types = header["TYPE"]
        counts = [int(c) for c in header["COUNT"]]
        if not (len(fields) == len(sizes) == len(types) == len(counts)):
            raise CloudFormatError(f"{path}: FIELDS/SIZE/TYPE/COUNT lengths differ")
        n = int(header["POINTS"][0])
        mode = header["DATA"][0].lower()
        if mode == "binary_compressed":
            raise CloudFormatError(f"{path}: binary_compressed PCD is not supported")
        if mode not in ("ascii", "binary"):
            raise CloudFormatError(f"{path}: unknown DATA mode {mode!r}")

        for axis in ("x", "y", "z"):
            if axis not in fields:
                raise CloudFormatError(f"{path}: PCD lacks field {axis!r}")
            i = fields.index(axis)
            if types[i] != "F" or counts[i] != 1:
                raise CloudFormatError(
                    f"{path}: field {axis!r} must be scalar F (float), "
                    f"got TYPE {types[i]} COUNT {counts[i]}"
                )

        if mode == "ascii":
            total_cols = sum(counts)
            try:
                body = np.loadtxt(f, dtype=np.float64, ndmin=2, max_rows=n)
            except ValueError as exc:
                raise CloudFormatError(f"{path}: bad ASCII point data: {exc}") from None
            if body.shape != (n, total_cols):
                raise CloudFormatError(
                    f"{path}: expected {n} rows x {total_cols} cols, got {body.shape}"
                )
            col_of = {}
            col = 0
            for name, cnt in zip(fields, counts):
                col_of[name] = col
                col += cnt
            xyz = body[:, [col_of["x"], col_of["y"], col_of["z"]]]
        else:
            # PCD binary is little-endian by convention
            spec = []
            for name, size, typ, cnt in zip(fields, sizes, types, counts):
                code = _PCD_TYPE_SIZES.get((typ, size))
                if code is None:
                    raise CloudFormatError(
                        f"{path}: unsupported field {name!r} TYPE {typ} SIZE {size}"
                    )
                spec.append((name, "<" + code, (cnt,)) if cnt > 1 else (name, "<" + code))
            dt = np.dtype(spec)
            expected = n * dt.itemsize
            raw = f.read(expected)
            if len(raw) < expected:
                raise CloudFormatError(
                    f"{path}: truncated binary body: expected {expected} bytes "
                    f"for {n} points, got {len(raw)}"
                )
            rec = np.frombuffer(raw, dtype=dt, count=n)
            xyz = np.stack(
                [rec["x"].astype(np.float64), rec["y"].astype(np.float64),
                 rec["z"].astype(np.float64)], axis=1,
            )

    return PointCloud(_finite_filter(xyz, path))


def read_cloud(path) -> PointCloud:
    """Load a .ply or .pcd cloud; format (ASCII/binary) is auto-detected."""
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".ply":
        return _read_ply(p)
    if suffix == ".pcd":
        return _read_pcd(p)
    raise ValueError(f"unsupported cloud extension {suffix!r} (want .ply or .pcd)")


def _write_ply(path: Path, cloud: PointCloud, ascii_mode: bool) -> None:
    n = len(cloud)
    with open(path, "wb") as f:
        fmt = "ascii" if ascii_mode else "binary_little_endian"
        head = [f"ply", f"format {fmt} 1.0", f"element vertex {n}",
                "property double x", "property double y", "property double z"]
        if cloud.colors is not None:
            head += ["property uchar red", "property uchar green", "property uchar blue"]
        head.append("end_header")
        f.write(("\n".join(head) + "\n").encode("ascii"))
        if ascii_mode:
            if cloud.colors is None:
                np.savetxt(f, cloud.points, fmt="%.6f")
            else:
                rows = np.column_stack([cloud.points, cloud.colors.astype(np.int64)])
                np.savetxt(f, rows, fmt="%.6f %.6f %.6f %d %d %d")
        else:
            if cloud.colors is None:
                f.write(np.ascontiguousarray(cloud.points, dtype="<f8").tobytes())
            else:
                dt = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
                               ("red", "u1"), ("green", "u1"), ("blue", "u1")])
                rec = np.empty(n, dtype=dt)
                rec["x"], rec["y"], rec["z"] = cloud.points.T
                rec["red"], rec["green"], rec["blue"] = cloud.colors.T
                f.write(rec.tobytes())


def _write_pcd(path: Path, cloud: PointCloud, ascii_mode: bool) -> None:
    # PCD carries geometry only; colors are a PLY concern here
    n = len(cloud)
    mode = "ascii" if ascii_mode else "binary"
    head = (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\n"
        "FIELDS x y z\n"
        "SIZE 8 8 8\n"
        "TYPE F F F\n"
        "COUNT 1 1 1\n"
        f"WIDTH {n}\n"
        "HEIGHT 1\n"
        "VIEWPOINT 0 0 0 1 0 0 0\n"
        f"POINTS {n}\n"
        f"DATA {mode}\n"
    )
    with open(path, "wb") as f:
        f.write(head.encode("ascii"))
        if ascii_mode:
            np.savetxt(f, cloud.points, fmt="%.6f")
        else:
            f.write(np.ascontiguousarray(cloud.points, dtype="<f8").tobytes())


def write_cloud(path, cloud: PointCloud, ascii_mode: bool = False) -> None:
    """Write a cloud as .ply or .pcd (binary little-endian unless ascii_mode)."""
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".ply":
        _write_ply(p, cloud, ascii_mode)
    elif suffix == ".pcd":
        _write_pcd(p, cloud, ascii_mode)
    else:
        raise ValueError(f"unsupported cloud extension {suffix!r} (want .ply or .pcd)")


def export_error_map(cloud: PointCloud, distances, max_distance: float) -> PointCloud:
    """Color points on a linear blue-to-red ramp of distance / max_distance.

    d = 0 maps to (0, 0, 255), d >= max_distance to (255, 0, 0); the red
    and blue channels always sum to 255.
    """
    d = np.asarray(distances, dtype=np.float64).reshape(-1)
    if len(d) != len(cloud):
        raise ValueError(f"distance count {len(d)} != point count {len(cloud)}")
    if not np.all(np.isfinite(d)):
        raise ValueError("distances contain NaN or Inf")
    if max_distance <= 0:
        raise ValueError("max_distance must be positive")
    t = np.clip(d / float(max_distance), 0.0, 1.0)
    red = np.floor(255.0 * t + 0.5).astype(np.uint8)
    blue = (255 - red.astype(np.int16)).astype(np.uint8)
    colors = np.stack([red, np.zeros_like(red), blue], axis=1)
    return PointCloud(cloud.points, colors=colors)
