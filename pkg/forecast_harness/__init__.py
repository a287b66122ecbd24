"""Initialize the forecast_harness package."""

import importlib.metadata

try:
    __version__ = importlib.metadata.version("forecast-harness")
except importlib.metadata.PackageNotFoundError:
    __version__ = "0.0.0"
