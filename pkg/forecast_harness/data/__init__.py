"""Unified data interface and slice reconstruction."""
