"""Embedded 5x7 bitmap glyphs for digits 0-9 (no font dependencies)."""

from __future__ import annotations

_GLYPHS = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

GLYPH_W = 5
GLYPH_H = 7


def glyph_pixels(ch: str):
    """Yield (col, row) of set pixels for a digit glyph."""
    rows = _GLYPHS[ch]
    for row, bits in enumerate(rows):
        for col, bit in enumerate(bits):
            if bit == "1":
                yield col, row
