"""Time-sortable 26-character identifiers (48-bit ms timestamp + 80-bit randomness).

Encoded in Crockford base32, so lexicographic order equals numeric order and
ids created later in one process always sort strictly after earlier ones.
"""

from __future__ import annotations

import os
import threading
import time

CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"

_TIMESTAMP_BITS = 48
_RANDOM_BITS = 80
_RANDOM_MAX = (1 << _RANDOM_BITS) - 1
_ID_LENGTH = 26


def _encode(value: int) -> str:
    chars = []
    for _ in range(_ID_LENGTH):
        chars.append(CROCKFORD[value & 0x1F])
        value >>= 5
    return "".join(reversed(chars))


class IdGenerator:
    """Monotonic id source: within one process each id is strictly greater
    (lexicographically) than every id issued before it, even under clock
    stalls or same-millisecond bursts."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._last_ts = -1
        self._last_rand = 0

    def new(self, ts_ms: int | None = None) -> str:
        if ts_ms is None:
            ts_ms = time.time_ns() // 1_000_000
        with self._lock:
            if ts_ms <= self._last_ts:
                # Same or rewound clock: bump the random tail instead.
                ts_ms = self._last_ts
                rand = self._last_rand + 1
                if rand > _RANDOM_MAX:
                    ts_ms += 1
                    rand = int.from_bytes(os.urandom(10), "big")
            else:
                rand = int.from_bytes(os.urandom(10), "big")
            self._last_ts = ts_ms
            self._last_rand = rand
        return _encode((ts_ms << _RANDOM_BITS) | rand)


_default_generator = IdGenerator()


def new_id(ts_ms: int | None = None) -> str:
    return _default_generator.new(ts_ms)
