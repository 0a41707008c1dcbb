"""Counter-based random streams keyed by the work item they serve.

Every draw is a pure function of its key, so results do not depend on the
order in which keys are processed or how work is split between workers.
"""
from __future__ import annotations

import hashlib
from datetime import datetime

import numpy as np


def _token(part) -> str:
    if isinstance(part, datetime):
        return part.strftime("%Y-%m-%dT%H:%M:%SZ")
    return repr(part)


def key_int(*parts) -> int:
    """128-bit integer digest of the key tuple."""
    text = "\x1f".join(_token(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=16).digest(), "little")


def keyed_generator(*parts) -> np.random.Generator:
    """Philox generator whose key is derived from ``parts``."""
    return np.random.Generator(np.random.Philox(key=key_int(*parts)))
