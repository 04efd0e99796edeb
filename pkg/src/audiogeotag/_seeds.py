"""Deterministic derivation of per-task seeds from the pipeline seed."""

import hashlib


def derive_seed(base_seed, *tokens):
    """Stable 64-bit seed from a base seed and a sequence of string tokens."""
    text = "|".join([str(int(base_seed))] + [str(t) for t in tokens])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
