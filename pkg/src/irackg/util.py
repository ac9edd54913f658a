"""Small shared helpers: hashing, stable ranking, atomic writes."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_rank(seed: int, token: str) -> str:
    """Deterministic, machine-independent rank for (seed, token).

    Ranking by the SHA-256 digest of "<seed>:<token>" gives every item a
    pseudorandom but fully reproducible position that does not depend on
    Python version, platform, or input ordering. Sampling and splitting
    select the lowest-ranked items.
    """
    return hashlib.sha256(f"{seed}:{token}".encode("utf-8")).hexdigest()


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write text to path via a temp file + rename so readers never see partial content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_json(path: Path | str, obj: object, *, indent: int | None = 2) -> None:
    atomic_write_text(path, json.dumps(obj, ensure_ascii=False, indent=indent) + "\n")


_QUOTE_TRANSLATION = str.maketrans(
    {
        "‘": "'",
        "’": "'",
        "‚": "'",
        "′": "'",
        "“": '"',
        "”": '"',
        "„": '"',
        "«": '"',
        "»": '"',
    }
)


def normalize_text(s: str) -> str:
    """Collapse whitespace runs and unify curly quotes; used for echo comparisons."""
    return " ".join(s.translate(_QUOTE_TRANSLATION).split())
