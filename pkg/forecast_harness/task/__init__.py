"""Task tuple: task file, workspace manifest and validation outcome."""
