"""CSV and portable-graymap writers with deterministic formatting."""

from __future__ import annotations

import numpy as np


def fmt(v) -> str:
    """Shortest round-trip representation; ``nan`` for missing values."""
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if np.isnan(v) else repr(v)


def write_table(path, columns, rows, header_lines=()):
    lines = [f"# {h}" for h in header_lines]
    lines.append(",".join(columns))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_matrix(path, M, header_lines=()):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [f"# {h}" for h in header_lines]
    lines.extend(",".join(fmt(v) for v in row) for row in M)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vector(path) -> np.ndarray:
    """One value per line (commas also accepted); ``#`` lines are skipped."""
    with open(path) as fh:
        text = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    return np.array([float(v) for ln in text for v in ln.split(",") if v.strip()])


def write_pgm(path, image, bits: int = 8):
    """Binary PGM of ``image`` (row 0 = lowest y), linearly scaled to full range.

    Non-finite pixels map to black.
    """
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    img = np.flipud(np.asarray(image, dtype=float))
    finite = np.isfinite(img)
    maxval = 255 if bits == 8 else 65535
    out = np.zeros(img.shape)
    if finite.any():
        lo, hi = img[finite].min(), img[finite].max()
        span = hi - lo if hi > lo else 1.0
        out[finite] = np.rint((img[finite] - lo) / span * maxval)
    data = out.astype(">u1" if bits == 8 else ">u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii"))
        fh.write(data)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u1" if maxval < 256 else ">u2"
    return np.frombuffer(raw[pos + 1:], dtype=dtype).reshape(h, w)
