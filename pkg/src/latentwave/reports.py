"""Report artifacts: versioned CSV files and portable graymap dumps.

Every artifact is a pure function of its inputs (no timestamps, no
environment), so rerunning a command with identical inputs reproduces the
bytes exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

CSV_VERSION = "latentwave-report v1"


def write_csv(path, kind: str, header: list, rows: list, comments: list = ()):
    """Versioned CSV: comment line with schema kind, then header, then rows."""
    with open(path, "w") as fh:
        fh.write(f"# {CSV_VERSION} {kind}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_pgm(path, image: np.ndarray, lo: float | None = None, hi: float | None = None):
    """Binary 8-bit PGM plus a sidecar recording the affine value mapping.

    Values are mapped linearly from [lo, hi] (default: the image's own
    range) onto [0, 255]; the sidecar makes the mapping invertible.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ConfigError(f"PGM dump needs a 2-d image, got shape {image.shape}")
    lo = float(image.min()) if lo is None else float(lo)
    hi = float(image.max()) if hi is None else float(hi)
    span = hi - lo if hi > lo else 1.0
    quant = np.clip(np.rint((image - lo) / span * 255.0), 0, 255).astype(np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quant.tobytes())
    with open(f"{path}.range.txt", "w") as fh:
        fh.write(f"lo={lo:.17g}\nhi={hi:.17g}\nlevels=256\n"
                 f"value = lo + gray / 255 * (hi - lo)\n")


def read_pgm(path) -> np.ndarray:
    """Read back a binary 8-bit PGM written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ConfigError(f"{path}: not a binary PGM")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        if maxval != 255:
            raise ConfigError(f"{path}: unsupported maxval {maxval}")
        data = np.frombuffer(fh.read(w * h), dtype=np.uint8)
    return data.reshape(h, w)
