"""Synthetic short-axis stacks with exact masks.

Geometry per cardiac slice: an LV blood-pool disk inside a myocardial ring,
with an RV crescent wrapped around the septum. Basal slices get an open,
slightly elliptical ring and a larger RV; apical slices get a small disk,
thin ring, blurred borders and no RV below the most basal apical slice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .core import (
    CmrStack,
    DatasetIndex,
    InvalidParams,
    Label,
    LabelMask,
    Phase,
    Region,
    SliceImage,
)
from .stratify import assign_regions, split_counts

ES_RADIUS_SCALE = 0.7
JITTER = 0.2
DATASET_FRACTIONS = (0.7, 0.15, 0.15)


@dataclass(frozen=True)
class PhantomParams:
    n_slices: int = 12
    n_noncardiac_each_end: int = 2
    image_size: int = 64
    lv_radius_base_px: float = 14.0
    lv_radius_apex_px: float = 5.0
    myo_thickness_px: float = 4.0
    rv_crescent: bool = True
    basal_ring_gap_deg: float = 70.0
    intensity_bloodpool: float = 0.9
    intensity_myo: float = 0.35
    intensity_bg: float = 0.1
    noise_sd: float = 0.05
    seed: int = 0
    # LV centre offset from the image centre, and the direction the basal gap opens
    center_offset_px: tuple[float, float] = (0.0, 4.0)
    gap_direction_deg: float = 135.0

    def validate(self) -> None:
        problems = []
        if self.n_slices < 1:
            problems.append("n_slices must be >= 1")
        if self.n_noncardiac_each_end < 0:
            problems.append("n_noncardiac_each_end must be >= 0")
        if self.n_slices - 2 * self.n_noncardiac_each_end < 1:
            problems.append("no cardiac slices left after non-cardiac padding")
        if self.image_size < 8:
            problems.append("image_size must be >= 8")
        if not self.lv_radius_base_px > self.lv_radius_apex_px > 0:
            problems.append("radii must decrease from base to apex and stay positive")
        if self.myo_thickness_px <= 0:
            problems.append("myo_thickness_px must be positive")
        if not 0 <= self.basal_ring_gap_deg < 180:
            problems.append("basal_ring_gap_deg must lie in [0, 180)")
        if self.noise_sd < 0:
            problems.append("noise_sd must be >= 0")
        for name in ("intensity_bloodpool", "intensity_myo", "intensity_bg"):
            if not 0 <= getattr(self, name) <= 1:
                problems.append(f"{name} must lie in [0, 1]")
        if problems:
            raise InvalidParams("; ".join(problems))


def _slice_geometry(params: PhantomParams, region: Region, x: float, is_first_apical: bool,
                    scale: float) -> dict:
    r_base, r_apex = params.lv_radius_base_px, params.lv_radius_apex_px
    # truncated-ellipsoid taper: flat through the middle, steep near the apex
    r_lv = r_apex + (r_base - r_apex) * math.sqrt(max(0.0, 1.0 - x * x))
    thickness = params.myo_thickness_px
    rv_scale = 0.65
    aspect = 1.0
    gap = 0.0
    blur = 0.0
    if region == Region.BASE:
        rv_scale *= 1.25
        aspect = 1.15
        gap = params.basal_ring_gap_deg
    elif region == Region.APEX:
        thickness *= 0.6
        rv_scale = 0.4 if is_first_apical else 0.0
        blur = 0.8
    return {
        "r_lv": r_lv * scale,
        "thickness": thickness,
        "rv_scale": rv_scale if params.rv_crescent else 0.0,
        "aspect": aspect,
        "gap": gap,
        "blur": blur,
    }


def _draw_slice(params: PhantomParams, geom: dict) -> tuple[np.ndarray, np.ndarray]:
    n = params.image_size
    cy = (n - 1) / 2 + params.center_offset_px[0]
    cx = (n - 1) / 2 + params.center_offset_px[1]
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    a = math.sqrt(geom["aspect"])
    rho = np.hypot(dy / a, dx * a)
    r_lv = geom["r_lv"]
    r_epi = r_lv + geom["thickness"]

    labels = np.zeros((n, n), dtype=np.uint8)
    intensity = np.full((n, n), params.intensity_bg, dtype=np.float64)

    if geom["rv_scale"] > 0:
        r_rv = geom["rv_scale"] * r_epi
        rv = (np.hypot(dy, xx - (cx - r_epi)) <= r_rv) & (rho > r_epi + 1.0)
        labels[rv] = Label.RVBP
        intensity[rv] = params.intensity_bloodpool

    ring = (rho > r_lv) & (rho <= r_epi)
    if geom["gap"] > 0:
        # image rows grow downward, so flip dy to get conventional angles
        angle = np.degrees(np.arctan2(-dy, dx))
        off = (angle - params.gap_direction_deg + 180.0) % 360.0 - 180.0
        in_gap = np.abs(off) <= geom["gap"] / 2
        # the opening reads as blood (outflow tract) but is not labelled
        intensity[ring & in_gap] = params.intensity_bloodpool
        ring &= ~in_gap
    labels[ring] = Label.LVM
    intensity[ring] = params.intensity_myo

    pool = rho <= r_lv
    labels[pool] = Label.LVBP
    intensity[pool] = params.intensity_bloodpool

    if geom["blur"] > 0:
        intensity = ndimage.gaussian_filter(intensity, geom["blur"], mode="nearest")
    return intensity, labels


def generate_stack(params: PhantomParams, phase: Phase | str = Phase.ED,
                   stack_id: Optional[str] = None) -> CmrStack:
    params.validate()
    phase = Phase(phase)
    stack_id = stack_id or f"phantom_s{params.seed}"
    rng = np.random.default_rng([params.seed, 0 if phase == Phase.ED else 1])
    scale = ES_RADIUS_SCALE if phase == Phase.ES else 1.0

    n_nc = params.n_noncardiac_each_end
    n_cardiac = params.n_slices - 2 * n_nc
    counts = split_counts(n_cardiac)
    plan = (
        [Region.BASE] * counts.base
        + [Region.MIDDLE] * counts.middle
        + [Region.APEX] * counts.apex
    )

    slices, masks = [], []
    for i in range(params.n_slices):
        j = i - n_nc
        if 0 <= j < n_cardiac:
            region = plan[j]
            x = j / (n_cardiac - 1) if n_cardiac > 1 else 0.5
            first_apical = region == Region.APEX and j == counts.base + counts.middle
            intensity, labels = _draw_slice(
                params, _slice_geometry(params, region, x, first_apical, scale)
            )
        else:
            intensity = np.full((params.image_size,) * 2, params.intensity_bg)
            labels = np.zeros((params.image_size,) * 2, dtype=np.uint8)
        noise = rng.normal(0.0, params.noise_sd, intensity.shape) if params.noise_sd > 0 else 0.0
        slices.append(
            SliceImage((intensity + noise).astype(np.float32), (1.0, 1.0), stack_id, i, phase)
        )
        masks.append(LabelMask(labels))

    stack = CmrStack(stack_id, phase, slices, masks)
    regions = assign_regions(stack)
    return stack.with_regions(regions)


def jitter_params(template: PhantomParams, seed: int) -> PhantomParams:
    """Per-stack geometry drawn within +-20% of the template."""
    rng = np.random.default_rng(seed)
    f = rng.uniform(1 - JITTER, 1 + JITTER, size=4)
    shift = rng.uniform(-JITTER, JITTER, size=2) * template.myo_thickness_px
    return replace(
        template,
        seed=seed,
        lv_radius_base_px=template.lv_radius_base_px * f[0],
        lv_radius_apex_px=template.lv_radius_apex_px * f[1],
        myo_thickness_px=template.myo_thickness_px * f[2],
        basal_ring_gap_deg=min(template.basal_ring_gap_deg * f[3], 179.0),
        center_offset_px=(
            template.center_offset_px[0] + float(shift[0]),
            template.center_offset_px[1] + float(shift[1]),
        ),
        gap_direction_deg=template.gap_direction_deg + float(rng.uniform(-20.0, 20.0)),
    )


def generate_dataset(n_stacks: int, params_template: PhantomParams, seed: int,
                     out_dir: str | Path) -> DatasetIndex:
    """Write ``n_stacks`` phantom subjects (ED and ES each) and return their index."""
    from .dataio import INDEX_FILE, build_index, save_index, save_stack

    if n_stacks < 0:
        raise InvalidParams("n_stacks must be >= 0")
    params_template.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n_stacks):
        params = jitter_params(params_template, seed + i)
        stack_id = f"phantom_{i:04d}"
        for phase in (Phase.ED, Phase.ES):
            stack = generate_stack(params, phase, stack_id)
            save_stack(stack, out_dir / stack.key)
    if n_stacks == 0:
        index = DatasetIndex([], str(out_dir))
    else:
        index = build_index(out_dir, seed, DATASET_FRACTIONS)
    save_index(index, out_dir / INDEX_FILE)
    return index
