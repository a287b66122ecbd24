import datetime

import pandas as pd
import pytest

from .context import (
    ROW_ID,
    TARGET,
    SliceSpec,
    build_reconstruction,
    derive_task_file,
    format_csv,
    generate_store_sales,
    write_reconstruction,
)

CUTOFF = datetime.date(2017, 7, 30)
HIDDEN_START = datetime.date(2017, 7, 31)
HIDDEN_END = datetime.date(2017, 8, 15)
FIXTURE_START = datetime.date(2017, 5, 1)
FIXTURE_STORES = (1, 2)
FIXTURE_FAMILIES = 3


def make_spec(stores=FIXTURE_STORES, **kwargs) -> SliceSpec:
    return SliceSpec(
        store_ids=stores,
        public_train_end=CUTOFF,
        hidden_start=HIDDEN_START,
        hidden_end=HIDDEN_END,
        auxiliary_truncation={"oil.csv": CUTOFF, "transactions.csv": CUTOFF},
        auxiliary_full_span={"holidays_events.csv", "stores.csv"},
        **kwargs,
    )


def submission_bytes(truth, transform=lambda values: values) -> bytes:
    frame = truth.frame.sort_values(ROW_ID)
    return format_csv(pd.DataFrame({
        "id": frame[ROW_ID].astype("int64").to_numpy(),
        "sales": transform(frame[TARGET].to_numpy()),
    }))


@pytest.fixture(scope="session")
def raw_files():
    return generate_store_sales(
        seed=7,
        stores=FIXTURE_STORES,
        family_count=FIXTURE_FAMILIES,
        start=FIXTURE_START,
        end=HIDDEN_END,
    )


@pytest.fixture(scope="session")
def slice_spec():
    return make_spec()


@pytest.fixture(scope="session")
def reconstruction(raw_files, slice_spec):
    return build_reconstruction(raw_files, slice_spec)


@pytest.fixture(scope="session")
def task(reconstruction, slice_spec):
    return derive_task_file(reconstruction, slice_spec)


@pytest.fixture
def reconstruction_dir(tmp_path, reconstruction, task):
    out_dir = tmp_path / "task"
    write_reconstruction(reconstruction, task, out_dir)
    return out_dir


@pytest.fixture
def truth_submission(reconstruction):
    return submission_bytes(reconstruction.hidden_truth)
