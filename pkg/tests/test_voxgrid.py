"""Grid data model and UVOX serialization tests."""

import io

import numpy as np
import pytest

from partvox import (
    PartLabeling,
    SparseVoxelGrid,
    UvoxError,
    read_uvox,
    validate,
    write_uvox,
)
from partvox.voxgrid import UVOX_MAGIC

from conftest import random_valid_grid


def roundtrip(grid: SparseVoxelGrid) -> tuple[SparseVoxelGrid, bytes]:
    buf = io.BytesIO()
    count = write_uvox(grid, buf)
    data = buf.getvalue()
    assert count == len(data)
    return read_uvox(io.BytesIO(data)), data


class TestGridModel:
    def test_constructor_sorts_canonically(self):
        grid = SparseVoxelGrid(
            4,
            [[3, 0, 0], [0, 1, 0], [0, 0, 2], [0, 0, 1]],
            features=[[3.0], [1.0], [2.5], [2.0]],
            labels=[4, 1, 3, 2],
            num_parts=4,
        )
        assert grid.coords.tolist() == [[0, 0, 1], [0, 0, 2], [0, 1, 0], [3, 0, 0]]
        # features and labels ride along with the sort
        assert grid.features[:, 0].tolist() == [2.0, 2.5, 1.0, 3.0]
        assert grid.labels.tolist() == [2, 3, 1, 4]

    def test_arrays_are_frozen(self):
        grid = SparseVoxelGrid(4, [[1, 2, 3]])
        with pytest.raises(ValueError):
            grid.coords[0, 0] = 0

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ValueError, match="row count"):
            SparseVoxelGrid(4, [[0, 0, 0], [1, 1, 1]], features=[[1.0]])
        with pytest.raises(ValueError, match="length"):
            SparseVoxelGrid(4, [[0, 0, 0]], labels=[1, 2], num_parts=2)

    def test_labels_require_num_parts(self):
        with pytest.raises(ValueError, match="together"):
            SparseVoxelGrid(4, [[0, 0, 0]], labels=[1])
        with pytest.raises(ValueError, match="together"):
            SparseVoxelGrid(4, [[0, 0, 0]], num_parts=2)

    def test_active_count_bounded_by_lattice(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            grid = random_valid_grid(rng)
            assert grid.num_voxels <= grid.resolution**3


class TestValidate:
    def test_duplicate_coordinate(self):
        grid = SparseVoxelGrid(8, [[3, 3, 3], [3, 3, 3]])
        assert validate(grid) == "duplicate coordinate at rows 0,1"

    def test_out_of_range(self):
        grid = SparseVoxelGrid(128, [[128, 0, 0]])
        assert "out of range" in validate(grid)

    def test_empty_grid_ok(self):
        assert validate(SparseVoxelGrid(16, np.zeros((0, 3), dtype=np.int32))) is None

    def test_label_out_of_range(self):
        grid = SparseVoxelGrid(8, [[0, 0, 0]], labels=[3], num_parts=2)
        assert "label out of range" in validate(grid)

    def test_valid_grid_passes(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            assert validate(random_valid_grid(rng)) is None


class TestPartLabeling:
    def test_groups_partition_tokens(self):
        labeling = PartLabeling([2, 1, 2, 3, 1], 3)
        assert labeling.group_sizes.tolist() == [2, 2, 1]
        assert [g.tolist() for g in labeling.group_token_indices] == [
            [1, 4],
            [0, 2],
            [3],
        ]
        merged = np.sort(np.concatenate(labeling.group_token_indices))
        assert merged.tolist() == list(range(5))

    def test_empty_groups_allowed(self):
        labeling = PartLabeling([1, 1], 4)
        assert labeling.group_sizes.tolist() == [2, 0, 0, 0]

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            PartLabeling([1, 5], 4)
        with pytest.raises(ValueError):
            PartLabeling([0, 1], 4)

    def test_from_grid(self):
        grid = SparseVoxelGrid(4, [[0, 0, 0], [1, 1, 1]], labels=[2, 1], num_parts=2)
        labeling = PartLabeling.from_grid(grid)
        assert labeling.labels.tolist() == grid.labels.tolist()


class TestUvoxRoundTrip:
    def test_simple_roundtrip(self):
        grid = SparseVoxelGrid(
            16,
            [[1, 2, 3], [4, 5, 6]],
            features=[[0.5, -1.25], [3.75, 2.0]],
            labels=[1, 2],
            num_parts=2,
        )
        back, data = roundtrip(grid)
        assert back == grid
        assert data[:4] == UVOX_MAGIC

    def test_rewrite_is_bit_identical(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            grid = random_valid_grid(rng)
            back, data = roundtrip(grid)
            assert back == grid
            buf = io.BytesIO()
            write_uvox(back, buf)
            assert buf.getvalue() == data

    def test_empty_grid_roundtrip(self):
        grid = SparseVoxelGrid(32, np.zeros((0, 3), dtype=np.int32))
        back, _ = roundtrip(grid)
        assert back == grid
        assert back.num_voxels == 0

    def test_empty_grid_with_feature_channels(self):
        grid = SparseVoxelGrid(
            8, np.zeros((0, 3), dtype=np.int32), features=np.zeros((0, 3), np.float32)
        )
        back, _ = roundtrip(grid)
        assert back.num_channels == 3
        assert back.num_voxels == 0

    def test_trailing_bytes_left_unread(self):
        grid = SparseVoxelGrid(4, [[1, 1, 1]])
        buf = io.BytesIO()
        write_uvox(grid, buf)
        buf.write(b"EXTRA")
        buf.seek(0)
        assert read_uvox(buf) == grid
        assert buf.read() == b"EXTRA"


class TestUvoxErrors:
    def test_bad_magic(self):
        grid = SparseVoxelGrid(4, [[1, 1, 1]])
        buf = io.BytesIO()
        write_uvox(grid, buf)
        data = b"XVOX" + buf.getvalue()[4:]
        with pytest.raises(UvoxError, match="bad magic"):
            read_uvox(io.BytesIO(data))

    def test_unsupported_version(self):
        grid = SparseVoxelGrid(4, [[1, 1, 1]])
        buf = io.BytesIO()
        write_uvox(grid, buf)
        data = bytearray(buf.getvalue())
        data[4] = 99
        with pytest.raises(UvoxError, match="unsupported version"):
            read_uvox(io.BytesIO(bytes(data)))

    def test_truncated_coords(self):
        grid = SparseVoxelGrid(4, [[1, 1, 1], [2, 2, 2]])
        buf = io.BytesIO()
        write_uvox(grid, buf)
        data = buf.getvalue()[:-5]
        with pytest.raises(UvoxError, match="truncated payload"):
            read_uvox(io.BytesIO(data))

    def test_truncated_header(self):
        with pytest.raises(UvoxError, match="truncated payload"):
            read_uvox(io.BytesIO(b"UVOX\x01"))

    def test_inconsistent_flags(self):
        grid = SparseVoxelGrid(4, [[1, 1, 1]], labels=[1], num_parts=1)
        buf = io.BytesIO()
        write_uvox(grid, buf)
        data = bytearray(buf.getvalue())
        data[28] = 0  # clear flags while K stays nonzero
        with pytest.raises(UvoxError, match="inconsistent"):
            read_uvox(io.BytesIO(bytes(data)))

    def test_decoded_invariant_violation(self):
        # hand-craft a payload with a duplicated coordinate
        grid = SparseVoxelGrid(4, [[1, 1, 1], [2, 2, 2]])
        buf = io.BytesIO()
        write_uvox(grid, buf)
        data = bytearray(buf.getvalue())
        header_size = 32
        data[header_size + 12 : header_size + 24] = data[
            header_size : header_size + 12
        ]
        with pytest.raises(UvoxError, match="invariant violation"):
            read_uvox(io.BytesIO(bytes(data)))

    def test_write_refuses_invalid_grid(self):
        grid = SparseVoxelGrid(4, [[1, 1, 1], [1, 1, 1]])
        with pytest.raises(UvoxError, match="duplicate"):
            write_uvox(grid, io.BytesIO())

    def test_write_refuses_many_parts(self):
        grid = SparseVoxelGrid(4, [[1, 1, 1]], labels=[1], num_parts=300)
        with pytest.raises(UvoxError, match="255"):
            write_uvox(grid, io.BytesIO())
