"""Material label maps, palettes and the material smoothness term."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from matrelight.core import ImageIOError, MaterialError, SizingError, gray


@dataclass(frozen=True)
class MaterialPalette:
    """Label id -> (name, display color). Ids are ``0..K-1`` without gaps."""

    names: tuple[str, ...]
    colors: np.ndarray  # (K, 3) uint8

    def __post_init__(self):
        colors = np.asarray(self.colors, dtype=np.int64)
        if colors.ndim != 2 or colors.shape[1] != 3 or len(colors) != len(self.names):
            raise MaterialError("palette needs one RGB triple per name")
        if len(colors) == 0:
            raise MaterialError("palette is empty")
        if colors.min() < 0 or colors.max() > 255:
            raise MaterialError("palette colors must lie in 0..255")
        object.__setattr__(self, "colors", colors.astype(np.uint8))

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def from_entries(cls, entries) -> "MaterialPalette":
        """Build from ``(id, name, (r, g, b))`` tuples in any order."""
        entries = sorted(entries, key=lambda e: e[0])
        ids = [e[0] for e in entries]
        if ids != list(range(len(ids))):
            raise MaterialError(f"palette ids must be 0..K-1 without gaps, got {ids}")
        return cls(tuple(e[1] for e in entries), np.array([e[2] for e in entries]))

    def color_to_label(self) -> dict[tuple[int, int, int], int]:
        lut = {}
        for label, color in enumerate(self.colors):
            lut.setdefault(tuple(int(c) for c in color), label)
        return lut


def parse_palette(text: str) -> MaterialPalette:
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise MaterialError(f"palette line {lineno}: expected 'id name R G B', got {raw!r}")
        try:
            ident, r, g, b = int(parts[0]), int(parts[2]), int(parts[3]), int(parts[4])
        except ValueError:
            raise MaterialError(f"palette line {lineno}: non-integer field in {raw!r}") from None
        entries.append((ident, parts[1], (r, g, b)))
    return MaterialPalette.from_entries(entries)


def load_palette(path) -> MaterialPalette:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ImageIOError(f"cannot read palette {path}: {exc}") from exc
    return parse_palette(text)


def default_palette() -> MaterialPalette:
    """The bundled nine-material outdoor palette."""
    text = resources.files("matrelight").joinpath("data/default_palette.txt").read_text()
    return parse_palette(text)


@dataclass(frozen=True)
class MaterialMap:
    """Per-pixel material labels, ``(height, width)`` integer array."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise SizingError(f"material map must be a non-empty 2-D grid, got {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise MaterialError("material labels must be integers")
        if labels.min() < 0:
            raise MaterialError("material labels must be non-negative")
        labels = labels.astype(np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def check(self, palette: MaterialPalette) -> None:
        """Raise MaterialError naming the first label outside the palette."""
        bad = np.argwhere(self.labels >= len(palette))
        if len(bad):
            y, x = bad[0]
            raise MaterialError(
                f"label {self.labels[y, x]} at pixel (x={x}, y={y}) is outside "
                f"the palette range 0..{len(palette) - 1}"
            )


def labels_from_rgb(rgb: np.ndarray, palette: MaterialPalette) -> np.ndarray:
    """Exact color -> label lookup; unknown colors raise MaterialError."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    packed = (rgb[..., 0].astype(np.int64) << 16) | (rgb[..., 1].astype(np.int64) << 8) | rgb[..., 2]
    lut = palette.color_to_label()
    keys = np.array([(r << 16) | (g << 8) | b for (r, g, b) in lut], dtype=np.int64)
    vals = np.array(list(lut.values()), dtype=np.int64)
    order = np.argsort(keys)
    keys, vals = keys[order], vals[order]
    pos = np.clip(np.searchsorted(keys, packed), 0, len(keys) - 1)
    found = keys[pos] == packed
    if not found.all():
        y, x = np.argwhere(~found)[0]
        r, g, b = (int(c) for c in rgb[y, x])
        raise MaterialError(f"unknown material color ({r}, {g}, {b}) at pixel (x={x}, y={y})")
    return vals[pos]


def load_material_map(path, palette: MaterialPalette) -> MaterialMap:
    """Read a label map file.

    Single-channel 8-bit files hold raw labels. RGB (or palette-indexed)
    files are mapped back to labels by exact color match.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                labels = np.asarray(im, dtype=np.int64)
            elif mode in ("RGB", "RGBA", "P", "LA"):
                labels = labels_from_rgb(np.asarray(im.convert("RGB")), palette)
            else:
                raise ImageIOError(f"{path}: unsupported material map mode {mode!r} (need 8-bit L or RGB)")
    except (OSError, ValueError) as exc:
        if isinstance(exc, (ImageIOError, MaterialError)):
            raise
        raise ImageIOError(f"cannot read material map {path}: {exc}") from exc
    mmap = MaterialMap(labels)
    mmap.check(palette)
    return mmap


def recolor(mmap: MaterialMap, palette: MaterialPalette) -> np.ndarray:
    """Paint every pixel with its label's display color, scaled to ``[0, 1]``."""
    mmap.check(palette)
    return palette.colors[mmap.labels].astype(np.float64) / 255.0


def material_gray_term(mmap: MaterialMap, palette: MaterialPalette) -> np.ndarray:
    """Per-pixel ``gray(color of label) / 255``."""
    mmap.check(palette)
    c = palette.colors.astype(np.float64)
    per_label = gray(c[:, 0], c[:, 1], c[:, 2]) / 255.0
    return per_label[mmap.labels]
