"""Deterministic synthetic "handwriting" line generator.

Each character owns a fixed seeded-random binary glyph mask; lines are
rendered with per-glyph scale/jitter/noise/intensity variation and can be
augmented with a global shear plus a morphological operation. Datasets are
written as PGM images plus TSV manifests, with per-line RNG streams derived
from (seed, line index) so rendering order never affects the bytes.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, ParseError

GLYPH_HEIGHT = 16
GLYPH_BASE_WIDTH = 8

# fixed lexicon, lowercase a-z only; generate_dataset takes a prefix of it
WORD_LIST = (
    "the and for are but not you all any can had her was one our out day get "
    "has him his how man new now old see two way who did its let put say she "
    "too use that with have this will your from they know want been good much "
    "some time very when come here just like long make many more only over "
    "such take than them well were what where which while after again before "
    "below between both down each few first found great house large light "
    "little live look made most move must name near never next night open "
    "other own part place point right same small sound spell still study "
    "their there these thing think three under until water work world would "
    "write year young about above across almost alone along already always "
    "animal answer around because become began behind"
).split()


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass
class GlyphAtlas:
    height: int
    base_width: int
    masks: dict[str, np.ndarray]

    def chars(self) -> tuple[str, ...]:
        return tuple(sorted(self.masks))


@dataclass
class LineSample:
    id: str
    image: np.ndarray  # (h, w), ink 1.0 on 0.0 background
    transcript: str


def build_glyph_atlas(seed: int, chars: str | None = None) -> GlyphAtlas:
    """Fixed random binary masks, ink density in [0.25, 0.55]; space is empty."""
    if chars is None:
        chars = "abcdefghijklmnopqrstuvwxyz "
    rng = _rng(seed, 0)
    masks: dict[str, np.ndarray] = {}
    for ch in sorted(set(chars)):
        if ch == " ":
            width = int(rng.integers(4, 9))
            masks[ch] = np.zeros((GLYPH_HEIGHT, width))
            continue
        while True:
            p_ink = rng.uniform(0.3, 0.5)
            mask = (rng.random((GLYPH_HEIGHT, GLYPH_BASE_WIDTH)) < p_ink).astype(float)
            if 0.25 <= mask.mean() <= 0.55:
                masks[ch] = mask
                break
    return GlyphAtlas(GLYPH_HEIGHT, GLYPH_BASE_WIDTH, masks)


def _hscale_nn(mask: np.ndarray, new_w: int) -> np.ndarray:
    w = mask.shape[1]
    cols = np.clip(np.round((np.arange(new_w) + 0.5) * w / new_w - 0.5).astype(int), 0, w - 1)
    return mask[:, cols]


def render_line(
    text: str,
    atlas: GlyphAtlas,
    rng: np.random.Generator,
    scale_range: tuple[float, float] = (0.75, 1.25),
    jitter: int = 1,
    flip_p: float = 0.03,
    intensity_range: tuple[float, float] = (0.7, 1.0),
) -> np.ndarray:
    """Concatenate per-glyph renderings with 2 px margins at both ends."""
    h = atlas.height
    pieces = [np.zeros((h, 2))]
    for ch in text:
        if ch not in atlas.masks:
            raise InputError(f"no glyph for character {ch!r}")
        mask = atlas.masks[ch]
        scale = rng.uniform(*scale_range)
        new_w = max(1, int(round(mask.shape[1] * scale)))
        glyph = _hscale_nn(mask, new_w)
        if jitter > 0:
            dy = int(rng.integers(-jitter, jitter + 1))
            shifted = np.zeros_like(glyph)
            if dy >= 0:
                shifted[dy:] = glyph[: h - dy]
            else:
                shifted[:dy] = glyph[-dy:]
            glyph = shifted
        if flip_p > 0:
            flips = rng.random(glyph.shape) < flip_p
            glyph = np.where(flips, 1.0 - glyph, glyph)
        intensity = rng.uniform(*intensity_range)
        pieces.append(glyph * intensity)
    pieces.append(np.zeros((h, 2)))
    return np.concatenate(pieces, axis=1)


def augment_image(
    img: np.ndarray,
    rng: np.random.Generator,
    max_shear: float = 0.15,
    morph_prob: float = 0.5,
) -> np.ndarray:
    """Horizontal shear, then (with prob 0.5) a 3x3 dilation or erosion."""
    h, w = img.shape
    angle = rng.uniform(-max_shear, max_shear)
    slope = math.tan(angle)
    center = (h - 1) / 2.0
    out = np.zeros_like(img)
    for i in range(h):
        dx = int(round(slope * (i - center)))
        if dx >= 0:
            out[i, dx:] = img[i, : w - dx] if dx < w else 0.0
        else:
            out[i, :dx] = img[i, -dx:]
    if rng.random() < morph_prob:
        dilate = rng.random() < 0.5
        padded = np.pad(out, 1, mode="edge")
        shifts = [padded[di : di + h, dj : dj + w] for di in range(3) for dj in range(3)]
        stack = np.stack(shifts)
        out = stack.max(axis=0) if dilate else stack.min(axis=0)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# PGM and manifest I/O


def write_pgm(path, img: np.ndarray) -> None:
    """Binary PGM (P5), 8-bit, value = round(255 * pixel)."""
    data = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    fields: list[bytes] = []
    i = 0
    while len(fields) < 4:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":  # comment to end of line
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(raw) and not raw[i : i + 1].isspace():
            i += 1
        fields.append(raw[start:i])
    i += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError as e:
        raise ParseError(f"{path}: non-numeric PGM header") from e
    if maxval != 255:
        raise ParseError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(raw[i : i + w * h], dtype=np.uint8)
    if data.size != w * h:
        raise ParseError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(np.float64) / 255.0


def write_manifest(path, rows: list[tuple[str, str, str]]) -> None:
    ids = [r[0] for r in rows]
    if len(set(ids)) != len(ids):
        raise ConfigError("manifest ids are not unique")
    with open(path, "w", encoding="utf-8") as f:
        for sample_id, rel_path, transcript in rows:
            f.write(f"{sample_id}\t{rel_path}\t{transcript}\n")


def read_manifest(path) -> list[tuple[str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 tab fields")
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def load_samples(manifest_path) -> list[LineSample]:
    base = os.path.dirname(os.path.abspath(manifest_path))
    samples = []
    for sample_id, rel_path, transcript in read_manifest(manifest_path):
        img_path = os.path.join(base, rel_path)
        if not os.path.exists(img_path):
            raise InputError(f"manifest {manifest_path}: missing image {img_path}")
        samples.append(LineSample(sample_id, read_pgm(img_path), transcript))
    return samples


# ---------------------------------------------------------------------------
# dataset generation


@dataclass
class DatasetConfig:
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 400
    lexicon_size: int = 100
    words_min: int = 3
    words_max: int = 7
    seed: int = 0

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ConfigError("split sizes must be >= 1")
        if not 1 <= self.lexicon_size <= len(WORD_LIST):
            raise ConfigError(f"lexicon_size must be in 1..{len(WORD_LIST)}")
        if not 1 <= self.words_min <= self.words_max:
            raise ConfigError("need 1 <= words_min <= words_max")


@dataclass
class DatasetPaths:
    root: str
    manifests: dict[str, str] = field(default_factory=dict)
    corpus: str = ""


def generate_dataset(out_dir, cfg: DatasetConfig) -> DatasetPaths:
    """Render train/val/test splits plus the LM corpus (train transcripts)."""
    lexicon = WORD_LIST[: cfg.lexicon_size]
    atlas = build_glyph_atlas(cfg.seed)
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    paths = DatasetPaths(root=str(out_dir))
    line_idx = 0
    train_transcripts: list[str] = []
    for split, count in (("train", cfg.n_train), ("val", cfg.n_val), ("test", cfg.n_test)):
        rows = []
        for _ in range(count):
            rng = _rng(cfg.seed, 1, line_idx)
            n_words = int(rng.integers(cfg.words_min, cfg.words_max + 1))
            words = [lexicon[int(rng.integers(0, len(lexicon)))] for _ in range(n_words)]
            transcript = " ".join(words)
            image = render_line(transcript, atlas, rng)
            sample_id = f"{split}_{line_idx:05d}"
            rel_path = f"images/{sample_id}.pgm"
            write_pgm(os.path.join(out_dir, rel_path), image)
            rows.append((sample_id, rel_path, transcript))
            if split == "train":
                train_transcripts.append(transcript)
            line_idx += 1
        manifest_path = os.path.join(out_dir, f"{split}.tsv")
        write_manifest(manifest_path, rows)
        paths.manifests[split] = manifest_path
    corpus_path = os.path.join(out_dir, "lm_corpus.txt")
    with open(corpus_path, "w", encoding="utf-8") as f:
        for t in train_transcripts:
            f.write(t + "\n")
    paths.corpus = corpus_path
    return paths
