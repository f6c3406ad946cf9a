"""Scale-invariant differential analysis of block spectra.

Adjacent differences of the restructured DCT tensor are taken across block
rows, across block columns, and along the band axis; four absolute-value
moments per (channel, band) summarize each difference map. Concatenating the
moments yields a 2304-long descriptor whose length never depends on image
resolution. The extractor is fixed: nothing here is trainable and gradients
never flow through it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .errors import InputError, UsageError
from .frequency import BANDS, BlockSpectra, BoundingBox, PlanarImage, restructure

MODES = ("row", "col", "intra")
STATS = ("mean", "std", "skew", "kurt")
DESCRIPTOR_LENGTH = len(STATS) * len(MODES) * 3 * BANDS  # 2304

_STD_GUARD = 1e-12


@dataclass
class DifferentialMap:
    """Adjacent-difference tensor for one mode.

    Shapes: row -> [C,64,rows-1,cols]; col -> [C,64,rows,cols-1];
    intra -> [C,64,rows,cols] with band 63 identically zero (padding).
    """
    mode: str
    values: np.ndarray


@dataclass
class SidaDescriptor:
    """2304 global differential statistics.

    Canonical layout, outermost to innermost: statistic {mean, std, skew,
    kurt}, mode {row, col, intra}, channel {Y, Cb, Cr}, band 0..63.
    """
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (DESCRIPTOR_LENGTH,):
            raise UsageError(
                f"descriptor must have shape ({DESCRIPTOR_LENGTH},), got {self.values.shape}")

    @staticmethod
    def position(stat: str, mode: str, channel: int, band: int) -> int:
        """Flat index of one (stat, mode, channel, band) entry."""
        return ((STATS.index(stat) * len(MODES) + MODES.index(mode)) * 3 + channel) * BANDS + band


def block_differential(spectra: BlockSpectra, mode: str) -> DifferentialMap:
    """Adjacent differences along the axis selected by `mode`.

    The intra mode differences along the band axis (63 results) and zero-pads
    back to 64 bands so all modes share the band layout.
    """
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}, got {mode!r}")
    x = spectra.coefficients
    if mode == "row":
        if spectra.block_rows < 2:
            raise InputError(f"row differentials need at least 2 block rows, got {spectra.block_rows}")
        return DifferentialMap("row", x[:, :, 1:, :] - x[:, :, :-1, :])
    if mode == "col":
        if spectra.block_cols < 2:
            raise InputError(f"col differentials need at least 2 block cols, got {spectra.block_cols}")
        return DifferentialMap("col", x[:, :, :, 1:] - x[:, :, :, :-1])
    diff = x[:, 1:, :, :] - x[:, :-1, :, :]
    pad = np.zeros((x.shape[0], 1) + x.shape[2:])
    return DifferentialMap("intra", np.concatenate([diff, pad], axis=1))


def moment_stats(dmap: DifferentialMap) -> Dict[str, np.ndarray]:
    """Population mean/std/skew/kurt of |values| over the spatial block dims.

    Returns one [C, bands] array per statistic. Skewness is m3/std^3 and
    kurtosis m4/std^4 (not excess); both are defined as 0 wherever std falls
    below 1e-12, so constant regions stay NaN-free.
    """
    a = np.abs(dmap.values)
    mean = a.mean(axis=(2, 3))
    centered = a - mean[:, :, None, None]
    m2 = (centered ** 2).mean(axis=(2, 3))
    m3 = (centered ** 3).mean(axis=(2, 3))
    m4 = (centered ** 4).mean(axis=(2, 3))
    std = np.sqrt(m2)
    ok = std > _STD_GUARD
    skew = np.zeros_like(std)
    kurt = np.zeros_like(std)
    np.divide(m3, std ** 3, out=skew, where=ok)
    np.divide(m4, std ** 4, out=kurt, where=ok)
    return {"mean": mean, "std": std, "skew": skew, "kurt": kurt}


def assemble_descriptor(stats_by_mode: Dict[str, Dict[str, np.ndarray]]) -> SidaDescriptor:
    """Stack per-mode statistics into the canonical 2304-long layout."""
    for mode in MODES:
        if mode not in stats_by_mode:
            raise UsageError(f"missing statistics for mode {mode!r}")
    parts = []
    for stat in STATS:
        for mode in MODES:
            parts.append(stats_by_mode[mode][stat].reshape(-1))  # [C,64] -> channel-major
    return SidaDescriptor(np.concatenate(parts))


def sida_descriptor(spectra: BlockSpectra) -> SidaDescriptor:
    """Descriptor straight from block spectra (grid must be at least 2x2)."""
    stats = {mode: moment_stats(block_differential(spectra, mode)) for mode in MODES}
    return assemble_descriptor(stats)


def sida_from_image(img: PlanarImage, bbox: Optional[BoundingBox] = None) -> SidaDescriptor:
    """Full pipeline at original resolution: no resampling anywhere.

    The grid-cropped region must be at least 16x16 pixels so both inter-block
    modes are defined.
    """
    spectra = restructure(img, bbox)
    if spectra.block_rows < 2 or spectra.block_cols < 2:
        raise InputError(
            f"region gives a {spectra.block_rows}x{spectra.block_cols} block grid; "
            "need at least 2x2 (16x16 pixels) for differential analysis")
    return sida_descriptor(spectra)
