import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapmetrics import (
    CloudFormatError,
    NonFinitePointsWarning,
    PointCloud,
    export_error_map,
    read_cloud,
    write_cloud,
)


def _cloud(n=25, seed=0, colors=False):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3)) * 7.3
    col = rng.integers(0, 256, size=(n, 3), dtype=np.uint8) if colors else None
    return PointCloud(pts, colors=col)


def _write_text(path, text):
    path.write_bytes(text.encode("ascii"))
    return path


class TestPointCloud:
    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((4, 2)))

    def test_rejects_non_finite(self):
        pts = np.zeros((2, 3))
        pts[1, 0] = np.nan
        with pytest.raises(ValueError):
            PointCloud(pts)

    def test_rejects_color_shape_mismatch(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((3, 3)), colors=np.zeros((2, 3), dtype=np.uint8))

    def test_arrays_are_frozen(self):
        c = _cloud(colors=True)
        with pytest.raises(ValueError):
            c.points[0, 0] = 1.0
        with pytest.raises(ValueError):
            c.colors[0, 0] = 1

    def test_empty_cloud_is_allowed(self):
        assert len(PointCloud(np.empty((0, 3)))) == 0


class TestPlyRoundtrip:
    def test_binary_is_bit_exact(self, tmp_path):
        cloud = _cloud(seed=1)
        path = tmp_path / "c.ply"
        write_cloud(path, cloud)
        again = read_cloud(path)
        assert np.array_equal(again.points, cloud.points)
        assert again.colors is None

    def test_binary_with_colors(self, tmp_path):
        cloud = _cloud(seed=2, colors=True)
        path = tmp_path / "c.ply"
        write_cloud(path, cloud)
        again = read_cloud(path)
        assert np.array_equal(again.points, cloud.points)
        assert np.array_equal(again.colors, cloud.colors)

    def test_ascii_keeps_micrometer_precision(self, tmp_path):
        cloud = _cloud(seed=3, colors=True)
        path = tmp_path / "c.ply"
        write_cloud(path, cloud, ascii_mode=True)
        again = read_cloud(path)
        assert np.abs(again.points - cloud.points).max() < 5.1e-7
        assert np.array_equal(again.colors, cloud.colors)

    def test_rejects_unknown_extension(self, tmp_path):
        with pytest.raises(ValueError):
            write_cloud(tmp_path / "c.xyz", _cloud())
        with pytest.raises(ValueError):
            read_cloud(tmp_path / "c.xyz")


class TestPcdRoundtrip:
    def test_binary_is_bit_exact(self, tmp_path):
        cloud = _cloud(seed=4)
        path = tmp_path / "c.pcd"
        write_cloud(path, cloud)
        again = read_cloud(path)
        assert np.array_equal(again.points, cloud.points)

    def test_ascii_keeps_micrometer_precision(self, tmp_path):
        cloud = _cloud(seed=5)
        path = tmp_path / "c.pcd"
        write_cloud(path, cloud, ascii_mode=True)
        assert np.abs(read_cloud(path).points - cloud.points).max() < 5.1e-7

    def test_cross_format_copy(self, tmp_path):
        cloud = _cloud(seed=6)
        write_cloud(tmp_path / "a.ply", cloud)
        write_cloud(tmp_path / "b.pcd", read_cloud(tmp_path / "a.ply"))
        assert np.array_equal(read_cloud(tmp_path / "b.pcd").points, cloud.points)


class TestPlyParsing:
    def test_rejects_big_endian(self, tmp_path):
        path = _write_text(tmp_path / "b.ply", (
            "ply\nformat binary_big_endian 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n"
        ))
        with pytest.raises(CloudFormatError, match="big-endian"):
            read_cloud(path)

    def test_rejects_missing_magic_with_location(self, tmp_path):
        path = _write_text(tmp_path / "b.ply", "noply\nend_header\n")
        with pytest.raises(CloudFormatError, match=r"b\.ply:1"):
            read_cloud(path)

    def test_rejects_list_property_in_vertex(self, tmp_path):
        path = _write_text(tmp_path / "b.ply", (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property list uchar int vertex_indices\nend_header\n0\n"
        ))
        with pytest.raises(CloudFormatError, match="list property"):
            read_cloud(path)

    def test_rejects_element_before_vertex(self, tmp_path):
        path = _write_text(tmp_path / "b.ply", (
            "ply\nformat ascii 1.0\nelement face 0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n0 0 0\n"
        ))
        with pytest.raises(CloudFormatError, match="precedes vertex"):
            read_cloud(path)

    def test_rejects_integer_coordinates(self, tmp_path):
        path = _write_text(tmp_path / "b.ply", (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property int x\nproperty double y\nproperty double z\n"
            "end_header\n0 0 0\n"
        ))
        with pytest.raises(CloudFormatError, match="float or double"):
            read_cloud(path)

    def test_rejects_missing_axis(self, tmp_path):
        path = _write_text(tmp_path / "b.ply", (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nend_header\n0 0\n"
        ))
        with pytest.raises(CloudFormatError, match="lacks property 'z'"):
            read_cloud(path)

    def test_rejects_short_ascii_body(self, tmp_path):
        path = _write_text(tmp_path / "b.ply", (
            "ply\nformat ascii 1.0\nelement vertex 3\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n0 0 0\n1 1 1\n"
        ))
        with pytest.raises(CloudFormatError, match="expected 3 vertex rows"):
            read_cloud(path)

    def test_rejects_truncated_binary_body(self, tmp_path):
        path = tmp_path / "b.ply"
        write_cloud(path, _cloud(n=10, seed=7))
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(CloudFormatError, match="truncated binary body"):
            read_cloud(path)

    def test_drops_non_finite_rows_with_warning(self, tmp_path):
        path = _write_text(tmp_path / "b.ply", (
            "ply\nformat ascii 1.0\nelement vertex 4\n"
            "property double x\nproperty double y\nproperty double z\n"
            "property uchar red\nproperty uchar green\nproperty uchar blue\n"
            "end_header\n"
            "0 0 0 10 11 12\nnan 0 0 20 21 22\n1 1 1 30 31 32\n0 inf 0 40 41 42\n"
        ))
        with pytest.warns(NonFinitePointsWarning) as rec:
            cloud = read_cloud(path)
        assert rec[0].message.dropped == 2
        assert np.array_equal(cloud.points, [[0, 0, 0], [1, 1, 1]])
        assert np.array_equal(cloud.colors, [[10, 11, 12], [30, 31, 32]])


class TestPcdParsing:
    def test_rejects_missing_header_key(self, tmp_path):
        path = _write_text(tmp_path / "b.pcd", (
            "VERSION .7\nFIELDS x y z\nSIZE 8 8 8\nTYPE F F F\n"
            "POINTS 1\nDATA ascii\n0 0 0\n"
        ))
        with pytest.raises(CloudFormatError, match="lacks COUNT"):
            read_cloud(path)

    def test_rejects_binary_compressed(self, tmp_path):
        path = _write_text(tmp_path / "b.pcd", (
            "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
            "POINTS 1\nDATA binary_compressed\n"
        ))
        with pytest.raises(CloudFormatError, match="binary_compressed"):
            read_cloud(path)

    def test_rejects_integer_coordinate_field(self, tmp_path):
        path = _write_text(tmp_path / "b.pcd", (
            "FIELDS x y z\nSIZE 4 4 4\nTYPE I F F\nCOUNT 1 1 1\n"
            "POINTS 1\nDATA ascii\n0 0 0\n"
        ))
        with pytest.raises(CloudFormatError, match="must be scalar F"):
            read_cloud(path)

    def test_ascii_with_multi_count_extra_field(self, tmp_path):
        path = _write_text(tmp_path / "b.pcd", (
            "FIELDS x y z rgbpair\nSIZE 8 8 8 4\nTYPE F F F U\nCOUNT 1 1 1 2\n"
            "WIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA ascii\n"
            "1 2 3 7 8\n4 5 6 9 10\n"
        ))
        cloud = read_cloud(path)
        assert np.array_equal(cloud.points, [[1, 2, 3], [4, 5, 6]])

    def test_binary_with_multi_count_extra_field(self, tmp_path):
        header = (
            "FIELDS x y z pad\nSIZE 8 8 8 4\nTYPE F F F U\nCOUNT 1 1 1 2\n"
            "POINTS 2\nDATA binary\n"
        ).encode("ascii")
        rows = np.zeros(2, dtype=np.dtype([
            ("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("pad", "<u4", (2,)),
        ]))
        rows["x"] = [1.5, -2.5]
        rows["y"] = [0.25, 3.0]
        rows["z"] = [9.0, -1.0]
        path = tmp_path / "b.pcd"
        path.write_bytes(header + rows.tobytes())
        cloud = read_cloud(path)
        assert np.array_equal(cloud.points,
                              [[1.5, 0.25, 9.0], [-2.5, 3.0, -1.0]])

    def test_rejects_truncated_binary(self, tmp_path):
        path = tmp_path / "b.pcd"
        write_cloud(path, _cloud(n=5, seed=8))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(CloudFormatError, match="truncated binary body"):
            read_cloud(path)

    def test_drops_non_finite_with_warning(self, tmp_path):
        path = _write_text(tmp_path / "b.pcd", (
            "FIELDS x y z\nSIZE 8 8 8\nTYPE F F F\nCOUNT 1 1 1\n"
            "POINTS 3\nDATA ascii\n0 0 0\n1 nan 1\n2 2 2\n"
        ))
        with pytest.warns(NonFinitePointsWarning) as rec:
            cloud = read_cloud(path)
        assert rec[0].message.dropped == 1
        assert len(cloud) == 2


class TestErrorMap:
    def test_endpoint_and_midpoint_colors(self):
        cloud = PointCloud(np.zeros((3, 3)))
        colored = export_error_map(cloud, [0.0, 0.1, 0.2], max_distance=0.2)
        assert np.array_equal(
            colored.colors, [[0, 0, 255], [128, 0, 127], [255, 0, 0]]
        )

    def test_clips_beyond_max(self):
        cloud = PointCloud(np.zeros((2, 3)))
        colored = export_error_map(cloud, [5.0, 100.0], max_distance=0.2)
        assert np.array_equal(colored.colors, [[255, 0, 0], [255, 0, 0]])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_red_blue_split_the_ramp(self, seed):
        rng = np.random.default_rng(seed)
        d = rng.uniform(0.0, 0.5, size=20)
        colored = export_error_map(PointCloud(np.zeros((20, 3))), d, 0.25)
        red = colored.colors[:, 0].astype(int)
        t = np.clip(d / 0.25, 0.0, 1.0)
        assert np.array_equal(red, np.floor(255.0 * t + 0.5).astype(int))
        assert np.all(colored.colors[:, 1] == 0)
        assert np.all(red + colored.colors[:, 2].astype(int) == 255)

    def test_validation(self):
        cloud = PointCloud(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            export_error_map(cloud, [0.1], 0.2)
        with pytest.raises(ValueError):
            export_error_map(cloud, [0.1, np.nan], 0.2)
        with pytest.raises(ValueError):
            export_error_map(cloud, [0.1, 0.1], 0.0)
