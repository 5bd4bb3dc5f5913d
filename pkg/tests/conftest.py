import numpy as np
import pytest

from lamplocate.registration import TemplateDatabase, ViewpointGrid, register_model
from lamplocate.synthetic import INTRINSICS_DEFAULT, default_lamp_models

# Distances every 0.8 m so any query in [1.5, 8.3] m is within the 0.4 m
# selection tolerance of some template ring.
ACCEPTANCE_DISTANCES = tuple(np.arange(1.5, 8.4, 0.8))


@pytest.fixture(scope="session")
def lamp_models():
    return {m.model_id: m for m in default_lamp_models()}


@pytest.fixture(scope="session")
def lamp_db(lamp_models):
    """Template database for both reference lamps over the full hemisphere.

    Built once per session (~40 s); shared by the pipeline, refinement and
    acceptance tests.
    """
    import multiprocessing as mp

    grid = ViewpointGrid.hemisphere(azimuth_step_deg=30, elevation_step_deg=20,
                                    distances=ACCEPTANCE_DISTANCES, min_elevation_deg=10)
    db = TemplateDatabase(intrinsics=INTRINSICS_DEFAULT)
    for model in lamp_models.values():
        db.add_model(model, register_model(model, grid, INTRINSICS_DEFAULT,
                                           workers=mp.cpu_count()))
    return db
