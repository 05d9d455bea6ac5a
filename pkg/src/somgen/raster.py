"""Raster types, PNG I/O, tiling and per-realization random streams."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np
from PIL import Image

IMAGE_SIZE = 256
MANIFEST_SCHEMA_VERSION = 1
SOM_NAMES = ("clb", "flags", "voronoi", "alphabet", "external")


class ImageFormatError(ValueError):
    """Raised when a file is not a decodable 8-bit grayscale raster."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster. ``data`` is a read-only (height, width) uint8 array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D raster, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
        arr = np.array(arr, dtype=np.uint8, order="C", copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_pixels(cls, pixels, width: int = IMAGE_SIZE, height: int = IMAGE_SIZE) -> "GrayImage":
        arr = np.asarray(pixels)
        if arr.size != width * height:
            raise ValueError(f"pixel count {arr.size} != {width}x{height}")
        if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
            raise ValueError("pixel values must lie in 0..255")
        return cls(arr.astype(np.uint8).reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def pixels(self) -> np.ndarray:
        """Row-major flat view of the intensities."""
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


def save_image(image: GrayImage, path) -> None:
    """Write ``image`` as a non-interlaced 8-bit single-channel PNG."""
    path = Path(path)
    if not path.parent.exists():
        raise FileNotFoundError(f"parent directory does not exist: {path.parent}")
    Image.fromarray(image.data).save(path, format="PNG", optimize=False)


def load_image(path, expected_size: tuple[int, int] | None = None) -> GrayImage:
    """Read an 8-bit grayscale PNG exactly as stored.

    ``expected_size`` is ``(width, height)``; a mismatch raises ``ImageFormatError``.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise ImageFormatError(f"unsupported bit depth: mode {mode} in {path}")
            if mode != "L":
                raise ImageFormatError(f"not an 8-bit grayscale image: mode {mode} in {path}")
            arr = np.array(im, dtype=np.uint8)
    except ImageFormatError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"unreadable image {path}: {exc}") from exc
    image = GrayImage(arr)
    if expected_size is not None and (image.width, image.height) != tuple(expected_size):
        raise ImageFormatError(
            f"dimension mismatch in {path}: got {image.width}x{image.height}, "
            f"expected {expected_size[0]}x{expected_size[1]}"
        )
    return image


def save_label_png(labels: np.ndarray, path) -> None:
    """Write an integer label raster as a 16-bit grayscale PNG."""
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise ValueError("labels must fit in 16 bits")
    Image.fromarray(labels.astype(np.uint16)).save(path, format="PNG")


def load_label_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im, dtype=np.int64)


@dataclass(frozen=True)
class TileGrid:
    """Row-major grid of square tiles over one image."""

    tile_size: int
    tiles: np.ndarray  # (rows, cols, tile, tile) read-only view

    @property
    def shape(self) -> tuple[int, int]:
        return self.tiles.shape[:2]

    def __len__(self) -> int:
        return self.tiles.shape[0] * self.tiles.shape[1]

    def __iter__(self) -> Iterator[np.ndarray]:
        rows, cols = self.shape
        for r in range(rows):
            for c in range(cols):
                yield self.tiles[r, c]

    def means(self) -> np.ndarray:
        return self.tiles.mean(axis=(2, 3))

    def assemble(self) -> GrayImage:
        rows, cols, t, _ = self.tiles.shape
        return GrayImage(self.tiles.transpose(0, 2, 1, 3).reshape(rows * t, cols * t))


def split_tiles(image: GrayImage, tile_size: int) -> TileGrid:
    if tile_size <= 0 or image.width % tile_size or image.height % tile_size:
        raise ValueError(f"tile size {tile_size} does not divide {image.width}x{image.height}")
    rows, cols = image.height // tile_size, image.width // tile_size
    tiles = image.data.reshape(rows, tile_size, cols, tile_size).transpose(0, 2, 1, 3)
    return TileGrid(tile_size, tiles)


def realization_seed(master_seed: int, realization_index: int) -> int:
    """64-bit seed of one realization, derived from the ensemble seed."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(realization_index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_from_seed(seed: int) -> np.random.Generator:
    # Philox is counter-based, so streams are identical on every platform
    return np.random.Generator(np.random.Philox(int(seed)))


def rng_stream(master_seed: int, realization_index: int) -> np.random.Generator:
    return rng_from_seed(realization_seed(master_seed, realization_index))


def label_stream(master_seed: int) -> np.random.Generator:
    """Stream for ensemble-level draws (class labels); disjoint from every realization stream."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(0, 0))
    return rng_from_seed(int(ss.generate_state(1, dtype=np.uint64)[0]))


@dataclass
class ManifestEntry:
    path: str
    class_label: int | None
    seed: int

    def to_json(self) -> dict:
        return {"path": self.path, "class": self.class_label, "seed": self.seed}


@dataclass
class EnsembleManifest:
    som_name: str
    master_seed: int
    entries: list[ManifestEntry] = field(default_factory=list)
    generation_params: dict[str, Any] = field(default_factory=dict)
    root: Path | None = None

    def __post_init__(self):
        if self.som_name not in SOM_NAMES:
            raise ValueError(f"unknown som_name {self.som_name!r}")

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def labels(self) -> list[int | None]:
        return [e.class_label for e in self.entries]

    def iter_images(self) -> Iterator[tuple[ManifestEntry, GrayImage]]:
        for e in self.entries:
            yield e, load_image(self.resolve(e), expected_size=(IMAGE_SIZE, IMAGE_SIZE))

    def to_json(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "som_name": self.som_name,
            "master_seed": self.master_seed,
            "params": self.generation_params,
            "entries": [e.to_json() for e in self.entries],
        }

    def save(self, path) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EnsembleManifest":
        path = Path(path)
        with open(path) as fh:
            doc = json.load(fh)
        version = doc.get("schema_version")
        if version != MANIFEST_SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema_version {version!r}")
        entries = [ManifestEntry(e["path"], e.get("class"), int(e["seed"])) for e in doc["entries"]]
        return cls(doc["som_name"], int(doc["master_seed"]), entries, doc.get("params", {}), root=path.parent)

    @classmethod
    def from_directory(cls, directory, som_name: str = "external") -> "EnsembleManifest":
        """Wrap a directory of PNG files (e.g. generated by a GAN) as an ensemble."""
        directory = Path(directory)
        files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
        entries = [ManifestEntry(p.name, None, 0) for p in files]
        return cls(som_name, 0, entries, {}, root=directory)


def open_ensemble(path, som_name: str = "external") -> EnsembleManifest:
    """Load a manifest file, or a directory holding ``manifest.json`` or loose PNGs."""
    path = Path(path)
    if path.is_dir():
        if (path / "manifest.json").exists():
            return EnsembleManifest.load(path / "manifest.json")
        return EnsembleManifest.from_directory(path, som_name)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return EnsembleManifest.load(path)
