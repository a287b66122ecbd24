"""Local competition server and its client."""
