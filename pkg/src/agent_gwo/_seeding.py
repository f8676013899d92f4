import hashlib

import numpy as np


def _as_int(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def derive_seed(*parts):
    """Stable 32-bit seed from a tuple of ints/strings, independent of call order."""
    ss = np.random.SeedSequence([_as_int(p) for p in parts])
    return int(ss.generate_state(1)[0])


def derive_rng(*parts):
    return np.random.default_rng(derive_seed(*parts))
