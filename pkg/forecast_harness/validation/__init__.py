"""Validation interface: validity checks and scored metrics."""
