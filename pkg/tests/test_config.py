import pytest

from oralcad.config import Settings, load_settings, parse_settings
from oralcad.errors import SpecError


def test_defaults():
    s = Settings()
    assert (s.small_fill_mm, s.large_fill_mm, s.min_gap_mm, s.max_gap_mm) == (5, 30, 5, 30)
    assert (s.cb_min_mm, s.cb_max_mm, s.ob_min_mm, s.ob_max_mm) == (7.5, 20, 10, 25)
    assert (s.link_radius_mm, s.min_persistence, s.glcm_levels) == (5, 5, 32)
    assert s.spacing.in_plane_mm == 0.2
    assert load_settings(None) == s


def test_parse_overrides(tmp_path):
    text = """
[geometry]
in_plane_mm = 0.25
[cb]
glcm_levels = 16
[training]
epochs = 20
shuffle = no
"""
    p = tmp_path / "s.ini"
    p.write_text(text)
    s = load_settings(p)
    assert s.in_plane_mm == 0.25 and s.glcm_levels == 16
    assert s.training.epochs == 20 and s.training.shuffle is False
    assert s.small_fill_mm == 5.0


@pytest.mark.parametrize("text", [
    "[cb]\nsmall_fil_mm = 4\n",
    "[colour]\nx = 1\n",
    "[cb]\nglcm_levels = many\n",
    "[training]\nshuffle = perhaps\n",
    "[geometry]\nin_plane_mm = 0\n",
    "[training]\nepochs = 0\n",
    "no section\n",
])
def test_bad_settings(text):
    with pytest.raises(SpecError):
        parse_settings(text)
