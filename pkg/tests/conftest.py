import numpy as np
import pytest

from slabrecon import (
    ContiguousLayout,
    InterleavedLayout,
    PhantomSpec,
    generate_phantom,
    phantom_geometry,
)


@pytest.fixture(scope="session")
def interleaved_layout():
    return InterleavedLayout(slices_per_slab=23, slabs=2, slice_thickness_mm=1.2)


@pytest.fixture(scope="session")
def contiguous_layout():
    return ContiguousLayout(slices_per_slab=23, slabs=2, overlap_slices=1,
                            slice_thickness_mm=1.2)


@pytest.fixture(scope="session")
def standard_phantom(interleaved_layout):
    """Default phantom on the interleaved 46-slice grid, with its ROIs."""
    return generate_phantom(PhantomSpec(), phantom_geometry(interleaved_layout.final_slices))


@pytest.fixture(scope="session")
def contiguous_phantom(contiguous_layout):
    return generate_phantom(PhantomSpec(), phantom_geometry(contiguous_layout.final_slices))


def rmse_fraction(fused, coverage, truth) -> float:
    """RMSE over covered voxels as a fraction of the truth dynamic range."""
    covered = coverage.data > 0.5
    diff = fused.data[covered] - truth.data[covered]
    dyn = truth.data.max() - truth.data.min()
    return float(np.sqrt((diff ** 2).mean()) / dyn)
