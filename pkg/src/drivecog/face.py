"""Geometric face features from 49-point landmark frames.

Each frame yields 30 values: 25 landmark distances divided by the face-box
diagonal and 5 angles in radians.  A trial is summarized by the mean,
95th percentile and population standard deviation of each value over its
valid frames (90 numbers, catalog-major).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CATALOG_VERSION = "face-geometry/1"

# 49-point layout (subject's right side is image left).
LANDMARK_NAMES = (
    [f"brow_r_{k}" for k in range(5)]            # 0-4, outer -> inner
    + [f"brow_l_{k}" for k in range(5)]          # 5-9, inner -> outer
    + [f"nose_bridge_{k}" for k in range(4)]     # 10-13, top -> tip
    + [f"nose_base_{k}" for k in range(5)]       # 14-18, 16 = below tip
    + ["eye_r_outer", "eye_r_upper_outer", "eye_r_upper_inner", "eye_r_inner",
       "eye_r_lower_inner", "eye_r_lower_outer"]  # 19-24
    + ["eye_l_inner", "eye_l_upper_inner", "eye_l_upper_outer", "eye_l_outer",
       "eye_l_lower_outer", "eye_l_lower_inner"]  # 25-30
    + ["mouth_r_corner"] + [f"lip_upper_{k}" for k in range(5)]  # 31-36, 34 = centre
    + ["mouth_l_corner"] + [f"lip_lower_{k}" for k in range(5)]  # 37-42, 40 = centre
    + ["mouth_r_inner", "lip_upper_inner_r", "lip_upper_inner_l",
       "mouth_l_inner", "lip_lower_inner_l", "lip_lower_inner_r"]  # 43-48
)

BROW_R = (0, 1, 2, 3, 4)
BROW_L = (5, 6, 7, 8, 9)
EYE_R = (19, 20, 21, 22, 23, 24)
EYE_L = (25, 26, 27, 28, 29, 30)
NOSE = tuple(range(10, 19))


@dataclass(frozen=True)
class GeometryFeature:
    name: str
    kind: str  # "dist" or "angle"
    points: tuple  # each entry is a tuple of landmark indices, averaged

    def to_dict(self):
        return {"name": self.name, "kind": self.kind,
                "points": [list(p) for p in self.points]}


def _d(name, a, b):
    return GeometryFeature(name, "dist", (tuple(a), tuple(b)))


def _ang(name, a, vertex, c):
    return GeometryFeature(name, "angle", (tuple(a), tuple(vertex), tuple(c)))


CATALOG = (
    _d("brow_r_centre__eye_r_mid", (2,), EYE_R),
    _d("brow_l_centre__eye_l_mid", (7,), EYE_L),
    _d("brow_r_mid__brow_l_mid", BROW_R, BROW_L),
    _d("nose_mid__mouth_r_corner", NOSE, (31,)),
    _d("nose_mid__mouth_l_corner", NOSE, (37,)),
    _d("eye_r_opening", (20, 21), (23, 24)),
    _d("eye_l_opening", (26, 27), (29, 30)),
    _d("eye_r_width", (19,), (22,)),
    _d("eye_l_width", (25,), (28,)),
    _d("mouth_width", (31,), (37,)),
    _d("mouth_outer_opening", (34,), (40,)),
    _d("mouth_inner_opening", (44, 45), (47, 48)),
    _d("brow_inner_gap", (4,), (5,)),
    _d("brow_r_inner__eye_r_inner", (4,), (22,)),
    _d("brow_l_inner__eye_l_inner", (5,), (25,)),
    _d("brow_r_outer__eye_r_outer", (0,), (19,)),
    _d("brow_l_outer__eye_l_outer", (9,), (28,)),
    _d("nose_tip__upper_lip", (16,), (34,)),
    _d("nose_length", (10,), (16,)),
    _d("eye_r_mid__mouth_r_corner", EYE_R, (31,)),
    _d("eye_l_mid__mouth_l_corner", EYE_L, (37,)),
    _d("nose_tip__lower_lip", (16,), (40,)),
    _d("interocular", EYE_R, EYE_L),
    _d("brow_r_mid__nose_tip", BROW_R, (16,)),
    _d("brow_l_mid__nose_tip", BROW_L, (16,)),
    _ang("mouth_corners_at_nose_tip", (31,), (16,), (37,)),
    _ang("eyes_at_nose_tip", EYE_R, (16,), EYE_L),
    _ang("brow_r_arch", (0,), (2,), (4,)),
    _ang("brow_l_arch", (5,), (7,), (9,)),
    _ang("mouth_r_corner_opening", (34,), (31,), (40,)),
)

STAT_NAMES = ("mean", "p95", "std")


def catalog_dict():
    return {"version": CATALOG_VERSION, "landmarks": list(LANDMARK_NAMES),
            "features": [f.to_dict() for f in CATALOG]}


def catalog_json():
    return json.dumps(catalog_dict(), indent=2)


def catalog_markdown():
    lines = ["| # | feature | kind | points |", "|---|---|---|---|"]
    for k, f in enumerate(CATALOG):
        pts = " ; ".join("mid(" + ", ".join(LANDMARK_NAMES[i] for i in p) + ")"
                         if len(p) > 1 else LANDMARK_NAMES[p[0]] for p in f.points)
        lines.append(f"| {k} | {f.name} | {f.kind} | {pts} |")
    return "\n".join(lines) + "\n"


def feature_names():
    return [f"face:{f.name}:{s}" for f in CATALOG for s in STAT_NAMES]


class InvalidFrameError(ValueError):
    pass


class FeatureMissingError(ValueError):
    """Too few valid frames to summarize a trial."""


def _group_matrix():
    """Averaging matrix mapping 49 landmarks to every point group of the catalog."""
    groups = [p for f in CATALOG for p in f.points]
    a = np.zeros((len(groups), len(LANDMARK_NAMES)))
    for r, idx in enumerate(groups):
        a[r, list(idx)] = 1.0 / len(idx)
    return a


_GROUPS = _group_matrix()


def points_features(points, boxes):
    """Geometry values for stacked frames: ``points`` (n, 49, 2), ``boxes`` (n, 4).

    Returns an (n, 30) array; rows whose angle arms have zero length are NaN.
    """
    pts = np.asarray(points, dtype=float)
    boxes = np.asarray(boxes, dtype=float)
    diag = np.hypot(boxes[:, 2], boxes[:, 3])
    g = np.einsum("gk,nkc->ngc", _GROUPS, pts)
    out = np.empty((pts.shape[0], len(CATALOG)))
    r = 0
    for k, f in enumerate(CATALOG):
        if f.kind == "dist":
            out[:, k] = np.linalg.norm(g[:, r] - g[:, r + 1], axis=1) / diag
        else:
            u, v = g[:, r] - g[:, r + 1], g[:, r + 2] - g[:, r + 1]
            cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
            dot = np.sum(u * v, axis=1)
            bad = (np.linalg.norm(u, axis=1) == 0) | (np.linalg.norm(v, axis=1) == 0)
            # atan2 is better conditioned than arccos near 0 and pi
            out[:, k] = np.where(bad, np.nan, np.arctan2(cross, dot))
        r += len(f.points)
    return out


def frame_features(frame):
    """30 geometry values of one valid frame."""
    if not frame.valid:
        raise InvalidFrameError("frame is marked invalid")
    out = points_features(np.asarray(frame.points, dtype=float)[None],
                          np.asarray(frame.face_box, dtype=float)[None])[0]
    if np.isnan(out).any():
        raise InvalidFrameError("degenerate angle: coincident landmarks")
    return out


def track_frame_features(track):
    """Per-frame features of a track (or list of frames), skipping invalid frames."""
    frames = [f for f in getattr(track, "frames", track) if f.valid]
    if not frames:
        return np.empty((0, len(CATALOG)))
    out = points_features(np.stack([np.asarray(f.points, dtype=float) for f in frames]),
                          np.array([f.face_box for f in frames], dtype=float))
    return out[~np.isnan(out).any(axis=1)]


def summary_statistics(values):
    """(mean, p95, std) over axis 0, concatenated per column: shape (3 * d,)."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] < 2:
        raise FeatureMissingError(f"need at least 2 frames, got {v.shape[0]}")
    mean = v[0] + (v - v[0]).mean(axis=0)  # exact for constant columns
    stats = np.stack([mean,
                      np.percentile(v, 95, axis=0, method="linear"),
                      np.sqrt(np.mean((v - mean) ** 2, axis=0))], axis=1)
    return stats.ravel()


def trial_statistics(per_frame):
    """90 trial features, ordered (mean, p95, std) per catalog entry."""
    per_frame = np.asarray(per_frame, dtype=float)
    if per_frame.ndim != 2 or per_frame.shape[1] != len(CATALOG):
        raise ValueError(f"expected (n_frames, {len(CATALOG)}) features")
    return summary_statistics(per_frame)


def face_rasters(frames, size=224, sigma=3.0):
    """Render valid frames' landmarks, cropped to each face box, as images.

    Stands in for the detected face crop when no camera frames are
    available: each landmark becomes a Gaussian blob (truncated at 4 sigma)
    on a black 8-bit canvas, the same in all three channels.  Returns an
    (n, size, size, 3) uint8 array.
    """
    frames = list(frames)
    if any(not f.valid for f in frames):
        raise InvalidFrameError("frame is marked invalid")
    n = len(frames)
    out = np.empty((n, size, size, 3), dtype=np.uint8)
    if n == 0:
        return out
    boxes = np.array([f.face_box for f in frames], dtype=float)
    pts = np.stack([np.asarray(f.points, dtype=float) for f in frames])
    u = (pts[:, :, 0] - boxes[:, None, 0]) / boxes[:, None, 2] * size
    v = (pts[:, :, 1] - boxes[:, None, 1]) / boxes[:, None, 3] * size
    offs = np.arange(-int(np.ceil(4 * sigma)), int(np.ceil(4 * sigma)) + 1)

    def taps(coord):
        idx = np.floor(coord)[..., None].astype(int) + offs
        w = np.exp(-0.5 * ((idx + 0.5 - coord[..., None]) / sigma) ** 2)
        inside = (idx >= 0) & (idx < size)
        return np.clip(idx, 0, size - 1), np.where(inside, w, 0.0)

    cols, wx = taps(u)
    rows, wy = taps(v)
    pix = rows[..., :, None] * size + cols[..., None, :]
    vals = wy[..., :, None] * wx[..., None, :]
    chunk = 16  # keeps the accumulation buffers cache-sized
    for s0 in range(0, n, chunk):
        m = min(chunk, n - s0)
        flat = pix[s0:s0 + m] + (np.arange(m) * size * size)[:, None, None, None]
        acc = np.bincount(flat.ravel(), vals[s0:s0 + m].ravel(), minlength=m * size * size)
        np.minimum(acc, 1.0, out=acc)
        acc *= 255.0
        acc += 0.5  # non-negative values: truncation after +0.5 rounds half up
        out[s0:s0 + m] = acc.astype(np.uint8).reshape(m, size, size, 1)
    return out


def face_raster(frame, size=224, sigma=3.0):
    """Single-frame version of :func:`face_rasters`."""
    return face_rasters([frame], size, sigma)[0]
