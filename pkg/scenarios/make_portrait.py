"""Regenerate portrait.pgm, the synthetic face used by the swarm scenarios.

Deterministic by construction (no RNG), so the committed file can always
be rebuilt byte for byte: python scenarios/make_portrait.py
"""

from pathlib import Path

import numpy as np

SIZE = 64


def portrait_array(size: int = SIZE) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    cx, cy = size * 0.5, size * 0.53
    img = np.full((size, size), 2.0)

    head = ((xx - cx) / (size * 0.26)) ** 2 + ((yy - cy) / (size * 0.32)) ** 2 <= 1.0
    img[head] = 200.0

    hair = (((xx - cx) / (size * 0.29)) ** 2
            + ((yy - (cy - size * 0.06)) / (size * 0.33)) ** 2 <= 1.0)
    img[hair & (yy < cy - size * 0.14)] = 60.0

    for ex in (cx - size * 0.11, cx + size * 0.11):
        eye = (xx - ex) ** 2 + (1.5 * (yy - (cy - size * 0.05))) ** 2 <= (size * 0.045) ** 2
        img[eye] = 20.0

    nose = (np.abs(xx - cx) <= size * 0.02) & (yy >= cy) & (yy <= cy + size * 0.1)
    img[nose] = 140.0

    mouth = (np.abs(xx - cx) <= size * 0.09) & (np.abs(yy - (cy + size * 0.18)) <= size * 0.02)
    img[mouth] = 30.0
    return img


def write_pgm(img: np.ndarray, path) -> None:
    lines = [f"P2", f"{img.shape[1]} {img.shape[0]}", "255"]
    for row in img.astype(int):
        lines.append(" ".join(str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    write_pgm(portrait_array(), Path(__file__).parent / "portrait.pgm")
