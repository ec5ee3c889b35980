"""Per-depth-band pixel counts in the original and the zoom image."""
import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from models.vpzoomer import synthesize_zoom
from utils.errors import DimensionMismatch

logger = logging.getLogger(__name__)

DEFAULT_BANDS = ((0.0, 17.0), (17.0, 34.0), (34.0, 51.2))
CSV_HEADER = ("band_lo", "band_hi", "count_orig", "count_zoom", "ratio")


@dataclass(frozen=True)
class BandRow:
    lo: float
    hi: float
    count_orig: int
    count_zoom: int
    ratio: float


@dataclass(frozen=True)
class DensityReport:
    rows: tuple

    @property
    def bands(self):
        return [(r.lo, r.hi) for r in self.rows]

    def ratio(self, i):
        return self.rows[i].ratio

    def _write_rows(self, f):
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([f"{r.lo:.4f}", f"{r.hi:.4f}", r.count_orig, r.count_zoom, f"{r.ratio:.4f}"])

    def format_csv(self):
        buf = io.StringIO()
        self._write_rows(buf)
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            self._write_rows(f)


def check_bands(bands):
    bands = tuple((float(lo), float(hi)) for lo, hi in bands)
    if not bands:
        raise ValueError("at least one depth band is required")
    for (lo, hi), nxt in zip(bands, bands[1:] + (None,)):
        if not lo < hi:
            raise ValueError(f"band ({lo}, {hi}] is empty")
        if nxt is not None and nxt[0] < hi:
            raise ValueError(f"bands must be sorted and disjoint, got {bands}")
    return bands


def _depth_values(depth):
    return np.asarray(getattr(depth, "values", depth), dtype=np.float64)


def band_counts(depth, bands=DEFAULT_BANDS):
    """Valid depth pixels per (lo, hi] band."""
    d = _depth_values(depth)
    d = d[np.isfinite(d) & (d > 0)]
    return [int(np.count_nonzero((d > lo) & (d <= hi))) for lo, hi in check_bands(bands)]


def zoom_band_counts(depth, geom, bands=DEFAULT_BANDS):
    d = _depth_values(depth)
    if d.shape != (geom.height, geom.width):
        raise DimensionMismatch(f"depth is {d.shape[1]}x{d.shape[0]}, geometry expects {geom.width}x{geom.height}")
    # nearest sampling keeps depths; invalid pixels warp as 0 and are not counted
    d = np.where(np.isfinite(d), d, 0.0)
    return band_counts(synthesize_zoom(d, geom, interpolation="nearest"), bands)


def _ratio(orig, zoom):
    if orig == 0:
        return 1.0 if zoom == 0 else float("inf")
    return zoom / orig


def rebalancing_report(depth, geom, bands=DEFAULT_BANDS):
    bands = check_bands(bands)
    orig = band_counts(depth, bands)
    zoom = zoom_band_counts(depth, geom, bands)
    rows = tuple(BandRow(lo, hi, o, z, _ratio(o, z)) for (lo, hi), o, z in zip(bands, orig, zoom))
    for r in rows:
        logger.info(f"band ({r.lo:g}, {r.hi:g}] m: {r.count_orig} -> {r.count_zoom} px, ratio {r.ratio:.4f}")
    return DensityReport(rows)
