"""Quantitative quality control: ROI statistics, relative contrast, SNR,
and a slice-redundancy index for antero-posterior between-slab shifts.

The redundancy index compares how similar consecutive slices from
*different* slabs are (rho, cross-slab pairs (j, j+1)) against how similar
consecutive slices of the *same* slab are (rho0, pairs (j, j+K)). A
between-slab shift of one slice thickness makes cross-slab neighbours
near-identical while leaving same-slab similarity untouched, so
rho - rho0 jumps; the report flags when it exceeds a threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, EmptyROI, InvalidInput, LayoutMismatch
from .layout import InterleavedLayout, PaddedSlab, SlabLayout
from .volume import Volume

MOTION_RATING_LEVELS = ("none", "medium", "large")


@dataclass(frozen=True)
class EllipsoidROI:
    """Ellipsoid in world space; a voxel belongs if its centre satisfies
    sum((R^T (p - c) / semi_axes)^2) <= 1."""

    center_mm: tuple[float, float, float]
    semi_axes_mm: tuple[float, float, float]
    axes: np.ndarray = field(default_factory=lambda: np.eye(3))
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center_mm", tuple(float(v) for v in self.center_mm))
        object.__setattr__(self, "semi_axes_mm", tuple(float(v) for v in self.semi_axes_mm))
        ax = np.array(self.axes, dtype=float)
        ax.flags.writeable = False
        object.__setattr__(self, "axes", ax)
        if any(a <= 0 for a in self.semi_axes_mm):
            raise InvalidInput("ellipsoid semi-axes must be > 0")
        if ax.shape != (3, 3) or not np.allclose(ax.T @ ax, np.eye(3), atol=1e-6):
            raise InvalidInput("ROI axes must be orthonormal")

    def to_dict(self) -> dict:
        return {
            "center_mm": list(self.center_mm),
            "semi_axes_mm": list(self.semi_axes_mm),
            "axes": self.axes.tolist(),
            "label": self.label,
        }


@dataclass(frozen=True)
class ROIStats:
    mean: float
    std: float
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "count": self.count}


@dataclass(frozen=True)
class MotionRating:
    """Human rating metadata; the rating itself is not computed here."""

    level: str
    slab_index: int
    repetition: int = 0
    rater: str = ""
    note: str = ""

    def __post_init__(self):
        if self.level not in MOTION_RATING_LEVELS:
            raise InvalidInput(
                f"rating level must be one of {MOTION_RATING_LEVELS}, got {self.level!r}"
            )

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "slab_index": self.slab_index,
            "repetition": self.repetition,
            "rater": self.rater,
            "note": self.note,
        }


@dataclass(frozen=True)
class ShiftReport:
    rho: float | None
    rho0: float | None
    flag: bool
    threshold: float
    degenerate: bool = False
    cross_profile: tuple = ()
    same_profile: tuple = ()

    @property
    def margin(self) -> float | None:
        if self.rho is None or self.rho0 is None:
            return None
        return self.rho - self.rho0

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "rho0": self.rho0,
            "margin": self.margin,
            "flag": self.flag,
            "threshold": self.threshold,
            "degenerate": self.degenerate,
            "cross_profile": [list(p) for p in self.cross_profile],
            "same_profile": [list(p) for p in self.same_profile],
        }


def roi_stats(volume: Volume, roi: EllipsoidROI) -> ROIStats:
    """Mean/std/count over voxels whose centres fall inside the ellipsoid."""
    geom = volume.geometry
    # candidate index box around the ROI, then the exact inequality
    reach = float(max(roi.semi_axes_mm))
    center_idx = geom.world_to_index([roi.center_mm])[0]
    lo = np.maximum(np.floor(center_idx - reach / np.asarray(geom.spacing) - 1), 0).astype(int)
    hi = np.minimum(
        np.ceil(center_idx + reach / np.asarray(geom.spacing) + 1), np.asarray(geom.dims) - 1
    ).astype(int)
    if np.any(lo > hi):
        raise EmptyROI(f"ROI {roi.label!r} lies outside the volume")
    ix, iy, iz = np.meshgrid(
        np.arange(lo[0], hi[0] + 1),
        np.arange(lo[1], hi[1] + 1),
        np.arange(lo[2], hi[2] + 1),
        indexing="ij",
    )
    idx = np.column_stack([ix.ravel(), iy.ravel(), iz.ravel()])
    world = geom.index_to_world(idx.astype(float))
    local = (world - np.asarray(roi.center_mm)) @ roi.axes / np.asarray(roi.semi_axes_mm)
    inside = np.einsum("ij,ij->i", local, local) <= 1.0
    if not inside.any():
        raise EmptyROI(f"ROI {roi.label!r} contains no voxel centers")
    values = volume.data[idx[inside, 0], idx[inside, 1], idx[inside, 2]]
    return ROIStats(float(values.mean()), float(values.std()), int(inside.sum()))


def relative_contrast(gm: ROIStats, wm: ROIStats) -> float:
    """2 (<GM> - <WM>) / (<GM> + <WM>)."""
    denom = gm.mean + wm.mean
    if denom == 0:
        raise DegenerateInput("relative contrast undefined: <GM> + <WM> = 0")
    return 2.0 * (gm.mean - wm.mean) / denom


def snr(gm: ROIStats, bg: ROIStats) -> float:
    """<GM> / sigma_BG."""
    if bg.std == 0:
        raise DegenerateInput("SNR undefined: background std is 0")
    return gm.mean / bg.std


def _ncc(a: np.ndarray, b: np.ndarray) -> float | None:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom < 1e-12:
        return None
    return float((a * b).sum() / denom)


def _slices_and_coverage(obj):
    if isinstance(obj, Volume):
        return obj.data, np.ones(obj.dims, dtype=bool)
    if isinstance(obj, (tuple, list)) and all(isinstance(p, PaddedSlab) for p in obj):
        data = sum(p.signal.data for p in obj)
        cover = sum(p.mask.data for p in obj) >= 0.5
        return data, cover
    # fusion output: duck-typed to avoid importing the fusion module
    if hasattr(obj, "fused") and hasattr(obj, "coverage_map"):
        return obj.fused.data, obj.coverage_map.data >= 0.5
    raise InvalidInput(
        "shift_index expects a Volume, a FusionOutput, or a sequence of PaddedSlab"
    )


def shift_index(obj, layout: SlabLayout, threshold: float = 0.15,
                foreground_fraction: float = 0.2, min_region: int = 32) -> ShiftReport:
    """Slice-redundancy index over an interleaved stack.

    Correlations are computed per neighbouring slice pair on the
    intersection of both slices' coverage and foreground (values above
    ``foreground_fraction`` of the volume maximum, which makes the index
    invariant to global intensity scaling).
    """
    if not isinstance(layout, InterleavedLayout):
        raise LayoutMismatch("shift index is defined for interleaved layouts only")
    data, cover = _slices_and_coverage(obj)
    n_slices = data.shape[1]
    if n_slices != layout.final_slices:
        raise LayoutMismatch(
            f"stack has {n_slices} slices, layout expects {layout.final_slices}"
        )
    if n_slices < 4:
        raise LayoutMismatch("shift index needs at least 4 slices")

    peak = float(np.abs(data).max())
    if peak <= 0:
        return ShiftReport(None, None, False, threshold, degenerate=True)
    fg = np.abs(data) > foreground_fraction * peak

    def pair_ncc(j, step):
        a_ok = cover[:, j, :] & fg[:, j, :]
        b_ok = cover[:, j + step, :] & fg[:, j + step, :]
        region = a_ok & b_ok
        if region.sum() < min_region:
            return None
        return _ncc(data[:, j, :][region], data[:, j + step, :][region])

    k = layout.slabs
    cross, same = [], []
    for j in range(n_slices - 1):
        r = pair_ncc(j, 1)
        if r is not None:
            cross.append((j, r))
    for j in range(n_slices - k):
        r = pair_ncc(j, k)
        if r is not None:
            same.append((j, r))
    if not cross or not same:
        return ShiftReport(None, None, False, threshold, degenerate=True)

    # A one-slice shift duplicates anatomy into only one class of
    # consecutive pairs (which class depends on the shift direction), so
    # rho is the strongest per-class median rather than a pooled one.
    classes = [[r for j, r in cross if j % k == c] for c in range(k)]
    class_medians = [float(np.median(vals)) for vals in classes if vals]
    rho = max(class_medians)
    rho0 = float(np.median([r for _, r in same]))
    return ShiftReport(
        rho, rho0, bool(rho - rho0 >= threshold), threshold,
        cross_profile=tuple(cross), same_profile=tuple(same),
    )


@dataclass(frozen=True)
class QCReport:
    rc: float | None = None
    snr: float | None = None
    shift: ShiftReport | None = None
    rois: dict = field(default_factory=dict)
    motion_ratings: tuple = ()

    def to_dict(self) -> dict:
        return {
            "rc": self.rc,
            "snr": self.snr,
            "shift": self.shift.to_dict() if self.shift is not None else None,
            "rois": {label: s.to_dict() for label, s in self.rois.items()},
            "motion_ratings": [m.to_dict() for m in self.motion_ratings],
        }


def compute_qc(volume: Volume, rois: dict, shift: ShiftReport | None = None,
               motion_ratings=()) -> QCReport:
    """Standard QC block: ROI stats for every labelled ROI, RC from GM/WM,
    SNR from GM/BG, plus an optional shift report."""
    stats = {label: roi_stats(volume, roi) for label, roi in rois.items()}
    rc_value = None
    snr_value = None
    if "GM" in stats and "WM" in stats:
        rc_value = relative_contrast(stats["GM"], stats["WM"])
    if "GM" in stats and "BG" in stats and stats["BG"].std > 0:
        snr_value = snr(stats["GM"], stats["BG"])
    return QCReport(rc_value, snr_value, shift, stats, tuple(motion_ratings))


def load_rois(path) -> dict:
    """Read ROI definitions from a JSON sidecar {label: {center_mm, semi_axes_mm, axes?}}."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise InvalidInput("ROI sidecar must be a JSON object keyed by label")
    rois = {}
    for label, entry in raw.items():
        rois[label] = EllipsoidROI(
            tuple(entry["center_mm"]),
            tuple(entry["semi_axes_mm"]),
            np.array(entry.get("axes", np.eye(3).tolist())),
            label=entry.get("label", label),
        )
    return rois


def save_rois(rois: dict, path):
    payload = {label: roi.to_dict() for label, roi in rois.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
