from pathlib import Path

import numpy as np
import pytest

from mfac import import_csv, load_scenario, run

DATA = Path(__file__).parent / "data"


@pytest.mark.parametrize("name", ["example1_case2", "example3_mfac1", "example3_mfac2",
                                  "example3_mfac3"])
def test_trace_matches_frozen_copy(name):
    frozen = import_csv(DATA / f"{name}.csv")
    tr = run(load_scenario(name))
    np.testing.assert_array_equal(tr.k, frozen.k)
    for col in ("y_star", "y", "u", "e", "phi"):
        np.testing.assert_allclose(getattr(tr, col), getattr(frozen, col), rtol=1e-9, atol=1e-12,
                                   err_msg=col)


def test_case1_trace_matches_frozen_copy_before_disturbance_jump():
    # after the jump this run is amplified step by step, so only the early part is compared
    frozen = import_csv(DATA / "example1_case1.csv")
    tr = run(load_scenario("example1_case1"))
    assert len(tr) == len(frozen)
    early = tr.k <= 350
    for col in ("y", "u", "phi"):
        np.testing.assert_allclose(getattr(tr, col)[early], getattr(frozen, col)[early],
                                   rtol=1e-9, atol=1e-12, err_msg=col)
