import sys

import pytest

from oralcad.cb_pipeline import build_training_pool
from oralcad.mlp import TrainingConfig, train
from oralcad.phantom import ArcGeometry, CavitySpec, LesionSpec, PhantomSpec, centerline_point, generate_phantom, random_spec
from oralcad.volume_io import VoxelSpacing

# thicker slices keep the fixtures small: a 10 mm lesion spans 20 slices
THICK = VoxelSpacing(0.2, 0.5)


def case_spec(seed=1, lesions=(), cavities=(), n_slices=40, **kw):
    return PhantomSpec(seed=seed, n_slices=n_slices, spacing=THICK, lesions=tuple(lesions),
                       cavities=tuple(cavities), patient_id=f"case-{seed}", **kw)


def on_axis(s_mm, z_mm):
    x, y = centerline_point(ArcGeometry(), s_mm)
    return (round(x, 3), round(y, 3), z_mm)


@pytest.fixture(scope="session")
def mixed_case():
    """One 10 mm CB lesion, one 15 mm OB gap and a normal cavity."""
    spec = case_spec(
        seed=11,
        lesions=[LesionSpec("CB", on_axis(0.0, 10.0), 10.0), LesionSpec("OB", on_axis(45.0, 10.0), 15.0)],
        cavities=[CavitySpec(on_axis(-35.0, 10.0), 8.0)],
    )
    return spec, *generate_phantom(spec)


@pytest.fixture(scope="session")
def normal_case():
    spec = case_spec(seed=12, cavities=[CavitySpec(on_axis(-20.0, 8.0), 9.0), CavitySpec(on_axis(30.0, 12.0), 7.0)])
    return spec, *generate_phantom(spec)


@pytest.fixture(scope="session")
def small_model():
    """MLP trained on four thick-slice phantoms, two of them with a CB lesion."""
    cases = [
        generate_phantom(random_spec(s, n_cb=1 if s < 2 else 0, n_cavities=2, n_slices=40, spacing=THICK))
        for s in range(4)
    ]
    pool = build_training_pool(cases)
    return train(pool, TrainingConfig(epochs=150, seed=0))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
