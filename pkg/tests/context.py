# -*- coding: utf-8 -*-

import sys
import os

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from forecast_harness.config import HarnessConfig  # noqa
from forecast_harness.data.reconstruction import (  # noqa
    SliceSpec,
    build_reconstruction,
    derive_task_file,
    load_reconstruction,
    write_reconstruction,
)
from forecast_harness.data.synthetic import generate_store_sales  # noqa
from forecast_harness.data.table import (  # noqa
    DATE,
    FAMILY,
    ROW_ID,
    STORE,
    TARGET,
    EntityKey,
    UnifiedSeriesTable,
    format_csv,
    ingest_table,
)
from forecast_harness.errors import HarnessError  # noqa
from forecast_harness.task.codec import parse_task_file, serialize_task_file  # noqa
from forecast_harness.task.model import AccessScope, TaskFile  # noqa
