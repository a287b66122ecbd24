"""Command line surface of the forecast harness."""
