"""8-bit greyscale image I/O: PGM (P2/P5) natively, PNG via Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def read_grey(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        return np.asarray(Image.open(path).convert("L"), dtype=np.uint8)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    raise ValueError(f"unsupported image format: {path.suffix}")


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    # Tokenize the header, skipping comments.
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("only 8-bit PGM supported")
    if magic == b"P5":
        raster = data[i + 1 : i + 1 + w * h]
        return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()
    if magic == b"P2":
        values = data[i:].split()
        return np.array([int(v) for v in values[: w * h]], dtype=np.uint8).reshape(h, w)
    raise ValueError(f"not a PGM file: magic {magic!r}")


def write_pgm(img: np.ndarray, path) -> None:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    header = f"P5\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + img.tobytes())


def write_png(img: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(path)
