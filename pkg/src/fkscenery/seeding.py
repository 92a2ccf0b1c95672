"""Deterministic seed substreams.

Every random quantity in the package is drawn from a numpy Generator whose
seed is derived from a master seed and a human readable label, so that any
piece of an experiment can be regenerated in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, label: str) -> int:
    """64-bit seed from (master, label) via BLAKE2b.

    Stable across platforms and Python versions because it only depends on the
    UTF-8 bytes of the decimal master seed and the label.
    """
    msg = f"{int(master)}:{label}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def rng_for(master: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, label))
