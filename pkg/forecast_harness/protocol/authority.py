"""Conflict resolution between completion signals."""

from typing import Sequence

from .records import CompletionSignal, SignalKind

# stricter signals win among equal ranks
STRICTNESS = {
    SignalKind.rebuttal_required: 0,
    SignalKind.continue_: 1,
    SignalKind.allow_stop: 2,
}


def resolve_authority(signals: Sequence[CompletionSignal]) -> CompletionSignal:
    """Pick the binding signal.

    The lowest authority rank decides; inside that rank the strictest kind
    wins, so stopping needs every deciding signal to allow it. Ties keep the
    earliest input. The result is always one of the inputs.
    """
    if not signals:
        raise ValueError("resolve_authority needs at least one signal")
    return min(
        enumerate(signals),
        key=lambda pair: (pair[1].issued_by.authority_rank, STRICTNESS[pair[1].kind], pair[0]),
    )[1]
