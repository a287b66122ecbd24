"""File-backed run memory."""
