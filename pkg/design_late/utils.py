import datetime
import hashlib
import re
from pathlib import Path

import numpy as np


def get_copy_name(current_name: str) -> str:
    """Finds a good name for a copy of a preset.

    Currently adds "({timestamp} copy)" to the end of the name, or replaces
    the timestamp with current time if already present.
    """
    if m := re.fullmatch(r"(.*) \([0-9. -]* copy\)", current_name):
        current_name = m.group(1)
    timestamp = datetime.datetime.now().isoformat().replace(":", "-").replace("T", " ")
    return f"{current_name} ({timestamp} copy)"


def is_subpath(path: Path, subpath: Path) -> bool:
    """Checks if `subpath` lies inside `path`."""
    path = path.resolve()
    subpath = subpath.resolve()
    return subpath == path or path in subpath.parents


def arrays_checksum(*arrays: np.ndarray) -> str:
    """SHA-256 over the raw bytes of `arrays`, in order.

    Used to assert that a fixed population was not touched between
    replications.
    """
    digest = hashlib.sha256()
    for array in arrays:
        contiguous = np.ascontiguousarray(array)
        digest.update(str(contiguous.shape).encode())
        digest.update(contiguous.tobytes())
    return digest.hexdigest()
