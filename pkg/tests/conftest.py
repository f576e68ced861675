"""Shared fixtures: a small prebuilt record store for CLI/service tests."""

import numpy as np
import pytest

from nvpulse.dataset import GridSpec, build_dataset, query

MINI_GRID = GridSpec(
    isotopes=("n15",),
    b0s_T=(0.024,),
    thetas_deg=(2.7,),
    ms=(1,),
    transitions=("minus_one", "plus_one"),
    tau_points=128,
    spp=16,
)


@pytest.fixture(scope="session")
def mini_store(tmp_path_factory):
    """A two-record store (one per driven transition), built once."""
    root = tmp_path_factory.mktemp("mini_store")
    report = build_dataset(root, MINI_GRID)
    assert (report.written, report.failed) == (2, 0)
    return root


@pytest.fixture(scope="session")
def mini_records(mini_store):
    return query(mini_store)


def counts_csv(record, *, slope=1400.0, intercept=120.0, noise=0.02,
               seed=9) -> str:
    """Experimental-looking CSV derived from a stored record's trace."""
    rng = np.random.default_rng(seed)
    counts = slope * record.trace.p + intercept
    counts = counts * (1.0 + noise * rng.standard_normal(len(counts)))
    lines = ["tau_us,counts"]
    lines.extend(
        f"{float(x)!r},{float(c)!r}" for x, c in zip(record.trace.x, counts)
    )
    return "\n".join(lines) + "\n"
