"""Tick-by-tick streaming runtime."""
from .session import (
    StreamSession,
    StreamEvent,
    MemoryReport,
    Policy,
    RESET_PER_FRAME,
    RETAIN_ACROSS_FRAMES,
    tick_position,
)

__all__ = [
    'StreamSession', 'StreamEvent', 'MemoryReport', 'Policy',
    'RESET_PER_FRAME', 'RETAIN_ACROSS_FRAMES', 'tick_position',
]
