"""Single-class alphabet SOM: exact letter and letter-pair prevalence per realization."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import NamedTuple

import numpy as np
from PIL import Image

from . import kernels
from .raster import IMAGE_SIZE, GrayImage

LETTERS = ("H", "K", "L", "V", "W", "X", "Y", "Z")
INDEX = {c: i for i, c in enumerate(LETTERS)}
BLOCK = 32
GRID = IMAGE_SIZE // BLOCK
N_TOKENS = GRID * GRID
UNCERTAINTY_SCALE = 16.0
EXCLUSION_CUTOFF = 12.0
MAX_EXCLUDED = 8
MIN_HZ_PAIRS = 12


class RealizationRejected(ValueError):
    """Too many badly formed letters to test the realization."""


@dataclass(frozen=True)
class AlphabetRules:
    frequencies: dict = field(
        default_factory=lambda: {"H": 16, "K": 2, "L": 1, "V": 4, "W": 8, "X": 1, "Y": 8, "Z": 24}
    )
    ordered_pairs: dict = field(default_factory=lambda: {("H", "V"): 4, ("W", "Y"): 8})
    unordered_pair: tuple = ("H", "Z")
    min_unordered: int = MIN_HZ_PAIRS

    def __post_init__(self):
        if sum(self.frequencies.values()) != N_TOKENS:
            raise ValueError(f"letter frequencies must sum to {N_TOKENS}")
        for (first, second), n in self.ordered_pairs.items():
            if self.frequencies[second] != n or self.frequencies[first] < n:
                raise ValueError(f"ordered pair {first}{second} x{n} inconsistent with frequencies")
        a, b = self.unordered_pair
        used_a = self.min_unordered + sum(n for (f, _), n in self.ordered_pairs.items() if f == a)
        if used_a > self.frequencies[a] or self.min_unordered > self.frequencies[b]:
            raise ValueError("unordered pair demand exceeds letter frequencies")

    def expected_counts(self) -> np.ndarray:
        return np.array([self.frequencies[c] for c in LETTERS], dtype=np.float64)


DEFAULT_RULES = AlphabetRules()


@dataclass(frozen=True)
class LetterSequence:
    """64 tokens in raster order, optionally with per-token uncertainty on the 0-16 scale."""

    tokens: tuple
    uncertainty: tuple | None = None

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if len(tokens) != N_TOKENS:
            raise ValueError(f"a realization holds {N_TOKENS} letters, got {len(tokens)}")
        bad = set(tokens) - set(LETTERS)
        if bad:
            raise ValueError(f"unknown letters {sorted(bad)}")
        object.__setattr__(self, "tokens", tokens)
        if self.uncertainty is not None:
            object.__setattr__(self, "uncertainty", tuple(float(u) for u in self.uncertainty))

    @classmethod
    def from_string(cls, text: str) -> "LetterSequence":
        return cls(tuple(text))

    def __str__(self) -> str:
        return "".join(self.tokens)

    @property
    def excluded(self) -> tuple:
        if self.uncertainty is None:
            return (False,) * N_TOKENS
        return tuple(u >= EXCLUSION_CUTOFF for u in self.uncertainty)

    @property
    def n_excluded(self) -> int:
        return sum(self.excluded)

    def indices(self) -> np.ndarray:
        return np.array([INDEX[c] for c in self.tokens], dtype=np.int64)


def arrange_sequence(rules: AlphabetRules = DEFAULT_RULES, stream: np.random.Generator | None = None) -> LetterSequence:
    """Shuffle rule-satisfying blocks and flatten them into a 64-letter raster.

    Ordered pairs become fixed two-letter blocks, the minimum number of unordered
    pairs become two-letter blocks in random order, and every remaining letter
    is a single block.
    """
    if stream is None:
        raise ValueError("a random stream is required")
    remaining = dict(rules.frequencies)
    blocks = []
    for (first, second), n in rules.ordered_pairs.items():
        blocks += [(first, second)] * n
        remaining[first] -= n
        remaining[second] -= n
    a, b = rules.unordered_pair
    flips = stream.random(rules.min_unordered) < 0.5
    for flip in flips:
        blocks.append((b, a) if flip else (a, b))
    remaining[a] -= rules.min_unordered
    remaining[b] -= rules.min_unordered
    for letter in LETTERS:
        blocks += [(letter,)] * remaining[letter]
    order = stream.permutation(len(blocks))
    tokens = tuple(c for k in order for c in blocks[k])
    return LetterSequence(tokens)


# ------------------------------------------------------------------- templates


class GlyphSet:
    """The eight 32x32 glyphs and the uncertainty scale they define."""

    def __init__(self, glyphs: np.ndarray):
        glyphs = np.ascontiguousarray(glyphs, dtype=np.uint8)
        if glyphs.shape != (len(LETTERS), BLOCK, BLOCK):
            raise ValueError(f"expected glyph array of shape (8, {BLOCK}, {BLOCK})")
        if np.any(glyphs.reshape(len(LETTERS), -1).max(axis=1) == 0):
            raise ValueError("every glyph needs foreground pixels")
        self.glyphs = glyphs
        g = glyphs.astype(np.float64)
        self.pairwise_mae = np.abs(g[:, None] - g[None]).mean(axis=(2, 3))
        off = self.pairwise_mae[~np.eye(len(LETTERS), dtype=bool)]
        if off.min() == 0:
            raise ValueError("glyphs must be pairwise distinct")
        self.max_pairwise_mae = float(off.max())

    @classmethod
    def load(cls, directory=None) -> "GlyphSet":
        arrays = []
        for letter in LETTERS:
            if directory is None:
                ref = resources.files("somgen").joinpath(f"data/glyphs/{letter}.png")
                with resources.as_file(ref) as p, Image.open(p) as im:
                    arrays.append(np.array(im.convert("L")))
            else:
                with Image.open(f"{directory}/{letter}.png") as im:
                    arrays.append(np.array(im.convert("L")))
        return cls(np.stack(arrays))

    def uncertainty(self, mae):
        """Map best-match MAE onto 0..16; 16 is reached at the largest pairwise template MAE."""
        return np.minimum(UNCERTAINTY_SCALE * np.asarray(mae, dtype=np.float64) / self.max_pairwise_mae, UNCERTAINTY_SCALE)


@lru_cache(maxsize=1)
def default_glyphs() -> GlyphSet:
    return GlyphSet.load()


def render_alphabet(sequence: LetterSequence, glyphs: GlyphSet | None = None) -> GrayImage:
    glyphs = glyphs or default_glyphs()
    idx = sequence.indices().reshape(GRID, GRID)
    tiles = glyphs.glyphs[idx]  # (8, 8, 32, 32)
    return GrayImage(tiles.transpose(0, 2, 1, 3).reshape(IMAGE_SIZE, IMAGE_SIZE))


def classify_letters(image: GrayImage, glyphs: GlyphSet | None = None) -> LetterSequence:
    """Nearest glyph by mean absolute error in each 32x32 block."""
    glyphs = glyphs or default_glyphs()
    if image.data.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError("alphabet images are 256x256")
    mae = kernels.block_mae(image.data, glyphs.glyphs)
    best = np.argmin(mae, axis=1)
    best_mae = mae[np.arange(mae.shape[0]), best]
    return LetterSequence(tuple(LETTERS[k] for k in best), tuple(glyphs.uncertainty(best_mae)))


# ------------------------------------------------------------------ validators


def letter_counts(sequence: LetterSequence, retained_only: bool = True) -> np.ndarray:
    idx = sequence.indices()
    if retained_only:
        idx = idx[~np.array(sequence.excluded)]
    return np.bincount(idx, minlength=len(LETTERS)).astype(np.float64)


def _check_rejected(sequence: LetterSequence) -> None:
    if sequence.n_excluded >= MAX_EXCLUDED:
        raise RealizationRejected(f"{sequence.n_excluded} badly formed letters (limit {MAX_EXCLUDED - 1})")


class FrequencyResult(NamedTuple):
    chi2: float
    exact_match: bool


def frequency_test(sequence: LetterSequence, rules: AlphabetRules = DEFAULT_RULES) -> FrequencyResult:
    """Chi-square of the retained letter counts against the prescribed frequencies."""
    _check_rejected(sequence)
    observed = letter_counts(sequence)
    expected = rules.expected_counts()
    expected = expected * observed.sum() / expected.sum()
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    exact = sequence.n_excluded == 0 and bool(np.array_equal(observed, rules.expected_counts()))
    return FrequencyResult(chi2, exact)


class PairCounts(NamedTuple):
    hv: int
    wy: int
    hz_unordered: int
    lone_v: int
    lone_y: int


def pair_prevalence(sequence: LetterSequence) -> PairCounts:
    """Adjacent-pair counts in flattened raster order (row ends wrap to the next row)."""
    _check_rejected(sequence)
    s = sequence.tokens
    prev, nxt = s[:-1], s[1:]
    hv = sum(1 for a, b in zip(prev, nxt) if a == "H" and b == "V")
    wy = sum(1 for a, b in zip(prev, nxt) if a == "W" and b == "Y")
    hz = sum(1 for a, b in zip(prev, nxt) if {a, b} == {"H", "Z"})
    lone_v = sum(1 for i, c in enumerate(s) if c == "V" and (i == 0 or s[i - 1] != "H"))
    lone_y = sum(1 for i, c in enumerate(s) if c == "Y" and (i == 0 or s[i - 1] != "W"))
    return PairCounts(hv, wy, hz, lone_v, lone_y)


def rule_violations(sequence: LetterSequence, rules: AlphabetRules = DEFAULT_RULES) -> list[str]:
    """Names of the hard rules a realization breaks (empty for a correct one)."""
    out = []
    if not frequency_test(sequence, rules).exact_match:
        out.append("letter_frequencies")
    pairs = pair_prevalence(sequence)
    if pairs.hv != rules.ordered_pairs.get(("H", "V"), 0) or pairs.lone_v:
        out.append("ordered_pair_HV")
    if pairs.wy != rules.ordered_pairs.get(("W", "Y"), 0) or pairs.lone_y:
        out.append("ordered_pair_WY")
    if pairs.hz_unordered < rules.min_unordered:
        out.append("unordered_pair_HZ")
    return out


class HZSummary(NamedTuple):
    mean: float
    std: float
    violations: list  # indices of realizations with fewer than 12 pairs


def hz_distribution(sequences) -> HZSummary:
    counts = np.array([pair_prevalence(s).hz_unordered for s in sequences], dtype=np.float64)
    if counts.size == 0:
        raise ValueError("empty ensemble")
    bad = [int(i) for i in np.flatnonzero(counts < MIN_HZ_PAIRS)]
    return HZSummary(float(counts.mean()), float(counts.std()), bad)


# ------------------------------------------------------------- positional map

MIN_REFERENCE_SIZE = 10_000


@dataclass(frozen=True)
class PositionReference:
    """Per-position letter counts of a true ensemble, shape (64, 8)."""

    counts: np.ndarray
    n: int

    @classmethod
    def from_sequences(cls, sequences) -> "PositionReference":
        counts = np.zeros((N_TOKENS, len(LETTERS)), dtype=np.int64)
        n = 0
        for seq in sequences:
            idx = seq.indices()
            keep = ~np.array(seq.excluded)
            counts[np.arange(N_TOKENS)[keep], idx[keep]] += 1
            n += 1
        return cls(counts, n)

    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=1, keepdims=True)

    def to_json(self) -> dict:
        return {"n": self.n, "counts": self.counts.tolist()}

    @classmethod
    def from_json(cls, doc) -> "PositionReference":
        return cls(np.array(doc["counts"], dtype=np.int64), int(doc["n"]))


def positional_error_map(recovered, reference: PositionReference, min_reference: int = MIN_REFERENCE_SIZE) -> np.ndarray:
    """8x8 map of chi-square statistics of per-position letter counts.

    Each cell compares the observed counts at one raster position with the
    reference counts at the same position as a 2 x 8 homogeneity table, so the
    reference ensemble's own sampling noise is accounted for. Letters absent
    from both samples at a position drop out of that cell's sum.
    """
    if reference.n < min_reference:
        raise ValueError(f"reference ensemble too small: {reference.n} < {min_reference}")
    observed = PositionReference.from_sequences(recovered)
    if observed.n == 0:
        raise ValueError("empty ensemble")
    obs = observed.counts.astype(np.float64)
    ref = reference.counts.astype(np.float64)
    n_obs = obs.sum(axis=1, keepdims=True)
    n_ref = ref.sum(axis=1, keepdims=True)
    total = n_obs + n_ref
    pooled = (obs + ref) / total
    with np.errstate(divide="ignore", invalid="ignore"):
        e_obs = n_obs * pooled
        e_ref = n_ref * pooled
        terms = np.where(e_obs > 0, (obs - e_obs) ** 2 / e_obs, 0.0) + np.where(e_ref > 0, (ref - e_ref) ** 2 / e_ref, 0.0)
    return terms.sum(axis=1).reshape(GRID, GRID)
