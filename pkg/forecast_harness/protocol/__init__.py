"""Runtime protocol: dispatch, lifecycle, review, completion and the event log."""
