"""Band power and three-band RGB scalp maps.

Per-channel Welch band powers (theta, alpha, beta) are spread over the head
disk with an exact thin-plate-spline interpolant evaluated on a 224 x 224
grid, then quantized jointly into one 8-bit RGB image (theta red, alpha
green, beta blue) normalized by the brightest value in the image.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from .preproc import InsufficientSamplesError
from .session import SAMPLE_RATE, default_layout

GRID_SIZE = 224


@dataclass(frozen=True)
class BandSpec:
    theta: tuple = (4.0, 7.0)
    alpha: tuple = (7.0, 13.0)
    beta: tuple = (13.0, 30.0)

    def __post_init__(self):
        bands = self.bands()
        for lo, hi in bands:
            if not lo < hi:
                raise ValueError(f"band [{lo}, {hi}) is empty")
        for (_, hi), (lo, _) in zip(bands, bands[1:]):
            if lo < hi:
                raise ValueError("bands must be ordered with non-overlapping interiors")

    def bands(self):
        return [tuple(self.theta), tuple(self.alpha), tuple(self.beta)]

    names = ("theta", "alpha", "beta")


# ---------------------------------------------------------------------------
# Spectra

def welch_psd(x, sample_rate=SAMPLE_RATE, nperseg=None, mask=None):
    """One-sided Welch PSD with Hann windows and 50 % overlap.

    Parameters
    ----------
    x : array_like
        1-D signal, or (n_samples, n_channels) array analysed column-wise.
    sample_rate : float
        Sampling rate in Hz.
    nperseg : int, optional
        Window length; defaults to one second of samples.  The input must be
        at least this long.
    mask : array_like of bool, optional
        Samples flagged as artifacts.  Windows touching a flagged sample are
        dropped from the average.

    Returns
    -------
    freqs : ndarray
        Bin centre frequencies, spacing ``sample_rate / nperseg``.
    psd : ndarray
        Power density (units**2 / Hz), shape (n_freqs,) or (n_freqs, n_channels).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if nperseg is None:
        nperseg = int(round(sample_rate))
    if nperseg < 2 or n < nperseg:
        raise ValueError(f"need at least {nperseg} samples for Welch PSD, got {n}")
    step = nperseg - nperseg // 2
    starts = np.arange(0, n - nperseg + 1, step)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        starts = np.array([s for s in starts if not mask[s:s + nperseg].any()], dtype=int)
        if starts.size == 0:
            raise InsufficientSamplesError("every Welch window overlaps a masked sample")
    win = np.hanning(nperseg + 1)[:-1]  # periodic Hann
    segs = x[starts[:, None] + np.arange(nperseg)]
    segs = segs - segs.mean(axis=1, keepdims=True)
    shape = (-1,) + (1,) * (x.ndim - 1)
    spec = np.fft.rfft(segs * win.reshape(shape), axis=1)
    psd = np.mean(np.abs(spec) ** 2, axis=0) / (sample_rate * np.sum(win ** 2))
    if nperseg % 2:
        psd[1:] *= 2
    else:
        psd[1:-1] *= 2
    freqs = np.fft.rfftfreq(nperseg, 1.0 / sample_rate)
    return freqs, psd


def band_power(freqs, psd, band):
    """Integrated power of bins whose centre lies in [lo, hi)."""
    lo, hi = band
    sel = (freqs >= lo) & (freqs < hi)
    if not sel.any():
        raise ValueError(f"band [{lo}, {hi}) contains no PSD bins")
    if lo < freqs[0] or hi > freqs[-1] + (freqs[1] - freqs[0]):
        raise ValueError(f"band [{lo}, {hi}) outside PSD support")
    df = freqs[1] - freqs[0]
    return np.maximum(np.sum(psd[sel], axis=0) * df, 0.0)


def band_power_map(clean, bands=BandSpec(), nperseg=None):
    """(14, 3) band powers of a masked trial, columns theta/alpha/beta."""
    if nperseg is None:
        nperseg = min(int(SAMPLE_RATE), clean.trial.n_samples)
    freqs, psd = welch_psd(clean.samples, clean.trial.sample_rate, nperseg,
                           mask=clean.rejected_mask)
    return np.stack([band_power(freqs, psd, b) for b in bands.bands()], axis=1)


# ---------------------------------------------------------------------------
# Scattered-to-grid interpolation

def grid_coords(size=GRID_SIZE):
    """Pixel-centre coordinates (x right, y towards the nose) on [-1, 1]^2."""
    c = -1.0 + (np.arange(size) + 0.5) * (2.0 / size)
    gx, gy = np.meshgrid(c, -c)
    return gx, gy


def electrode_nodes(positions, size=GRID_SIZE):
    """(row, col) of the grid node nearest each electrode."""
    pos = np.asarray(positions, dtype=float)
    col = np.clip(np.floor((pos[:, 0] + 1.0) * size / 2.0), 0, size - 1).astype(int)
    row = np.clip(np.floor((1.0 - pos[:, 1]) * size / 2.0), 0, size - 1).astype(int)
    return row, col


def _tps_kernel(r):
    with np.errstate(divide="ignore", invalid="ignore"):
        k = r ** 2 * np.log(r)
    return np.where(r > 0, k, 0.0)


def _tps_system(nodes):
    n = nodes.shape[0]
    d = np.linalg.norm(nodes[:, None] - nodes[None], axis=-1)
    a = np.zeros((n + 3, n + 3))
    a[:n, :n] = _tps_kernel(d)
    a[:n, n] = 1.0
    a[:n, n + 1:] = nodes
    a[n, :n] = 1.0
    a[n + 1:, :n] = nodes.T
    return a


@lru_cache(maxsize=8)
def _interpolation_operator(positions_key, size):
    pos = np.array(positions_key, dtype=float).reshape(-1, 2)
    row, col = electrode_nodes(pos, size)
    gx, gy = grid_coords(size)
    nodes = np.stack([gx[row, col], gy[row, col]], axis=1)
    if len(set(zip(row.tolist(), col.tolist()))) != len(row):
        raise ValueError("electrode positions coincide on the interpolation grid")
    n = nodes.shape[0]
    inv = np.linalg.inv(_tps_system(nodes))[:, :n]
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    basis = np.empty((pts.shape[0], n + 3))
    basis[:, :n] = _tps_kernel(np.linalg.norm(pts[:, None] - nodes[None], axis=-1))
    basis[:, n] = 1.0
    basis[:, n + 1:] = pts
    op = basis @ inv
    op.setflags(write=False)
    return op


@lru_cache(maxsize=4)
def _outside_disk(size):
    gx, gy = grid_coords(size)
    return (gx ** 2 + gy ** 2 > 1.0).ravel()


def interpolate_scalp_map(layout, values, size=GRID_SIZE):
    """Thin-plate-spline surface through the electrode values.

    Electrodes are snapped to their nearest grid node so the surface is exact
    there.  The spline overshoots between and beyond electrodes, so the
    surface is clamped to the range of the electrode values; pixels outside
    the unit disk are zero.  ``values`` may be (14,) or (14, m), giving a
    (size, size) or (size, size, m) result.
    """
    v = np.asarray(values, dtype=float)
    if v.shape[0] != len(layout.names):
        raise ValueError(f"expected {len(layout.names)} values, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    key = tuple(np.asarray(layout.positions_2d, dtype=float).ravel().tolist())
    op = _interpolation_operator(key, size)
    flat = v.reshape(v.shape[0], -1)
    out = np.clip(op @ flat, flat.min(axis=0), flat.max(axis=0))
    out[_outside_disk(size)] = 0.0
    return out.reshape((size, size) + v.shape[1:])


# ---------------------------------------------------------------------------
# RGB composition

@dataclass(frozen=True)
class ScalpImage:
    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {px.shape}")

    band_colors = {"theta": "R", "alpha": "G", "beta": "B"}


def compose_rgb_topomap(theta, alpha, beta):
    """Quantize three band grids into one image, jointly normalized to 255."""
    grids = np.stack([np.asarray(g, dtype=float) for g in (theta, alpha, beta)], axis=-1)
    if not np.all(np.isfinite(grids)):
        raise ValueError("grid values must be finite")
    grids = np.maximum(grids, 0.0)
    m = grids.max()
    if m <= 0:
        return ScalpImage(np.zeros(grids.shape, dtype=np.uint8))
    # non-negative, so floor(x + 0.5) is round-half-away-from-zero
    return ScalpImage(np.floor(255.0 * grids / m + 0.5).astype(np.uint8))


def scalp_image(band_powers, layout=None, size=GRID_SIZE):
    """(14, 3) band powers -> ScalpImage."""
    layout = layout or default_layout()
    grids = interpolate_scalp_map(layout, band_powers, size)
    return compose_rgb_topomap(grids[..., 0], grids[..., 1], grids[..., 2])


def render_png(image, path):
    Image.fromarray(np.ascontiguousarray(image.pixels), mode="RGB").save(
        Path(path), format="PNG", optimize=False, compress_level=9)


def dump_grid(grid, path):
    """Raw little-endian float32, row-major."""
    Path(path).write_bytes(np.ascontiguousarray(grid, dtype="<f4").tobytes())


def load_grid(path, shape):
    return np.frombuffer(Path(path).read_bytes(), dtype="<f4").reshape(shape)
