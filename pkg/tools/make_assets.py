"""Regenerate the shipped template assets (flag grids and letter glyphs).

Run from the repository root: ``python tools/make_assets.py``.
"""
import json
from pathlib import Path

import numpy as np
from PIL import Image

DATA = Path(__file__).resolve().parents[1] / "src" / "somgen" / "data"


def flag_grids():
    g = lambda: np.zeros((16, 16), dtype=bool)  # noqa: E731
    grids = []

    t = g()  # horizontal band
    t[6:11, :] = True
    grids.append(t)

    t = g()  # vertical band
    t[:, 6:11] = True
    grids.append(t)

    t = g()  # three horizontal stripes
    t[2:4, :] = True
    t[12:14, :] = True
    t[7, :] = True
    grids.append(t)

    t = g()  # three vertical stripes
    t[:, 3:5] = True
    t[:, 11:13] = True
    t[:, 7] = True
    grids.append(t)

    t = g()  # square ring
    t[2:14, 2:14] = True
    t[4:12, 4:12] = False
    grids.append(t)

    t = g()  # centred block
    t[4:12, 3:13] = True
    grids.append(t)

    t = g()  # upper-left canton
    t[2:10, 0:10] = True
    grids.append(t)

    t = g()  # lower-right canton
    t[6:14, 6:16] = True
    grids.append(t)
    return grids


def write_flags():
    grids = flag_grids()
    doc = {
        "schema_version": 1,
        "grid": 16,
        "note": "canonical stand-in geometries: 80 foreground cells each, corner cells never foreground",
        "templates": {str(i + 1): [[int(v) for v in row] for row in t] for i, t in enumerate(grids)},
    }
    with open(DATA / "flag_templates.json", "w") as fh:
        json.dump(doc, fh, indent=None, separators=(",", ":"))
        fh.write("\n")


# Block capitals on an 8x8 design grid (one-cell strokes), upsampled x4 to 32x32.
GLYPHS = {
    "H": [
        "........",
        ".#....#.",
        ".#....#.",
        ".#....#.",
        ".######.",
        ".#....#.",
        ".#....#.",
        ".#....#.",
    ],
    "K": [
        "........",
        ".#...#..",
        ".#..#...",
        ".#.#....",
        ".##.....",
        ".#.#....",
        ".#..#...",
        ".#...#..",
    ],
    "L": [
        "........",
        ".#......",
        ".#......",
        ".#......",
        ".#......",
        ".#......",
        ".#......",
        ".######.",
    ],
    "V": [
        "........",
        "#......#",
        "#......#",
        ".#....#.",
        ".#....#.",
        "..#..#..",
        "..#..#..",
        "...##...",
    ],
    "W": [
        "........",
        "#......#",
        "#......#",
        "#......#",
        "#..##..#",
        "#.#..#.#",
        "##....##",
        "#......#",
    ],
    "X": [
        "........",
        "#......#",
        ".#....#.",
        "..#..#..",
        "...##...",
        "..#..#..",
        ".#....#.",
        "#......#",
    ],
    "Y": [
        "........",
        "#......#",
        ".#....#.",
        "..#..#..",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
    ],
    "Z": [
        "........",
        "########",
        "......#.",
        ".....#..",
        "....#...",
        "...#....",
        "..#.....",
        "########",
    ],
}


def write_glyphs():
    out = DATA / "glyphs"
    out.mkdir(parents=True, exist_ok=True)
    for letter, rows in GLYPHS.items():
        design = np.array([[c == "#" for c in row] for row in rows], dtype=np.uint8)
        glyph = np.kron(design, np.ones((4, 4), dtype=np.uint8)) * 255
        Image.fromarray(glyph.astype(np.uint8)).save(out / f"{letter}.png", format="PNG")


if __name__ == "__main__":
    write_flags()
    write_glyphs()
