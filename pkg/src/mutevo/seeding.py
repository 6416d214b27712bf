"""Deterministic seed fan-out.

Every sub-run (rate sampling, mock mutation, candidate processes) gets its
own seed derived from the master seed plus a label path, so any single run
can be reproduced in isolation without replaying the whole experiment.
"""

from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Hash arbitrary labels into a stable 63-bit seed.

    Uses repr() of each part, so strings, ints and floats are all fine as
    labels; the result is identical across processes and platforms.
    """
    text = "\x1f".join(repr(part) for part in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
