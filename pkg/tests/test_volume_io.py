import numpy as np
import pytest

from oralcad.errors import ContractError, FormatError
from oralcad.volume_io import CtVolume, VoxelSpacing, load_raw_volume, mm_to_px, save_raw_volume


def test_roundtrip_preserves_every_voxel(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.integers(0, 65536, size=(3, 20, 17), dtype=np.uint16)
    vol = CtVolume(data, VoxelSpacing(0.25, 0.5), "p1")
    save_raw_volume(vol, tmp_path / "v.raw")
    back = load_raw_volume(tmp_path / "v.raw", 17, 20, 3, VoxelSpacing(0.25, 0.5), "p1")
    assert np.array_equal(back.data, data)
    assert (back.n_slices, back.height, back.width) == (3, 20, 17)
    assert back.spacing == VoxelSpacing(0.25, 0.5)


def test_file_is_little_endian_slice_major(tmp_path):
    data = np.zeros((2, 16, 16), dtype=np.uint16)
    data[1, 0, 1] = 0x0102
    save_raw_volume(CtVolume(data), tmp_path / "v.raw")
    raw = (tmp_path / "v.raw").read_bytes()
    assert len(raw) == 2 * 16 * 16 * 2
    off = 2 * (16 * 16 + 1)
    assert raw[off:off + 2] == b"\x02\x01"


def test_wrong_size_names_both_byte_counts(tmp_path):
    p = tmp_path / "v.raw"
    p.write_bytes(b"\0" * (16 * 16 * 2 + 1))
    with pytest.raises(FormatError, match=r"expected 512 bytes.*found 513 bytes"):
        load_raw_volume(p, 16, 16, 1)


def test_missing_file_is_an_os_error(tmp_path):
    with pytest.raises(OSError):
        load_raw_volume(tmp_path / "none.raw", 16, 16, 1)


def test_default_patient_id_is_file_stem(tmp_path):
    save_raw_volume(CtVolume(np.zeros((1, 16, 16), np.uint16)), tmp_path / "case7.raw")
    assert load_raw_volume(tmp_path / "case7.raw", 16, 16, 1).patient_id == "case7"


def test_volume_is_read_only_but_caller_array_is_not():
    a = np.zeros((1, 16, 16), np.uint16)
    vol = CtVolume(a)
    with pytest.raises(ValueError):
        vol.data[0, 0, 0] = 1
    a[0, 0, 0] = 5
    assert vol[0][0, 0] == 5


@pytest.mark.parametrize("shape", [(0, 16, 16), (1, 15, 16), (1, 16, 8), (16, 16)])
def test_bad_shapes_rejected(shape):
    with pytest.raises(ContractError):
        CtVolume(np.zeros(shape, np.uint16))


def test_negative_or_float_voxels_rejected():
    with pytest.raises(ContractError):
        CtVolume(-np.ones((1, 16, 16), np.int32))
    with pytest.raises(ContractError):
        CtVolume(np.zeros((1, 16, 16), np.float32))
    assert CtVolume(np.full((1, 16, 16), 7, np.int64)).data.dtype == np.uint16


def test_iteration_yields_slices_in_order():
    data = np.arange(3)[:, None, None] * np.ones((3, 16, 16), np.uint16)
    assert [int(s[0, 0]) for s in CtVolume(data.astype(np.uint16))] == [0, 1, 2]


@pytest.mark.parametrize("bad", [0.0, -0.2])
def test_spacing_must_be_positive(bad):
    with pytest.raises(ContractError):
        VoxelSpacing(bad, 0.2)
    with pytest.raises(ContractError):
        VoxelSpacing(0.2, bad)


def test_mm_to_px():
    assert mm_to_px(5.0, VoxelSpacing()) == pytest.approx(25.0)
    assert mm_to_px(0.0, VoxelSpacing()) == 0.0
    with pytest.raises(ContractError):
        mm_to_px(-1.0, VoxelSpacing())
