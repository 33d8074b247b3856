"""Synthetic images whose class is written into their topology.

Class ``c`` gets ``c + 1`` dark filled disks and ``c`` annuli (loops with a
background-valued interior) on a bright background, so at mid-range
thresholds beta_0 = 2c + 1 and beta_1 = c.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .imaging import GrayImage, ManifestEntry, N_CLASSES, save_pgm, write_manifest

BACKGROUND = 200
DISK = 30
ANNULUS = 60

DISK_RADIUS = (2.5, 4.5)
RING_OUTER = (5.5, 7.5)
RING_WIDTH = 2.5
# centre spacing beyond the two radii; keeps shapes two background pixels apart
GAP = 3.0
BORDER = 2.0
MAX_ATTEMPTS = 1000


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    per_class_counts: Tuple[int, int, int, int] = (200, 200, 200, 200)
    image_size: Tuple[int, int] = (64, 64)
    noise_amplitude: int = 8
    seed: int = 0

    def __post_init__(self):
        if len(self.per_class_counts) != N_CLASSES or min(self.per_class_counts) < 0:
            raise ValueError("per_class_counts must be 4 non-negative integers")
        if not 0 <= self.noise_amplitude <= 20:
            raise ValueError("noise_amplitude must lie in [0, 20]")


def _place(rng, size, radii):
    h, w = size
    placed = []
    for r in radii:
        for _ in range(MAX_ATTEMPTS):
            lo = r + BORDER
            if lo > h - 1 - lo or lo > w - 1 - lo:
                raise PlacementError(f"shape of radius {r:.1f} does not fit a {h}x{w} image")
            cy = rng.uniform(lo, h - 1 - lo)
            cx = rng.uniform(lo, w - 1 - lo)
            if all(np.hypot(cy - py, cx - px) >= r + pr + GAP for py, px, pr in placed):
                placed.append((cy, cx, r))
                break
        else:
            raise PlacementError(f"could not place {len(radii)} shapes in {MAX_ATTEMPTS} attempts")
    return placed


def generate_image(class_id: int, rng: np.random.Generator, size: Tuple[int, int] = (64, 64),
                   noise_amplitude: int = 8) -> GrayImage:
    if not 0 <= class_id < N_CLASSES:
        raise ValueError(f"class_id must lie in [0, {N_CLASSES})")
    n_rings, n_disks = class_id, class_id + 1
    ring_r = rng.uniform(*RING_OUTER, size=n_rings)
    disk_r = rng.uniform(*DISK_RADIUS, size=n_disks)
    shapes = _place(rng, size, list(ring_r) + list(disk_r))
    img = np.full(size, BACKGROUND, dtype=np.int64)
    ii, jj = np.mgrid[0 : size[0], 0 : size[1]]
    for k, (cy, cx, r) in enumerate(shapes):
        dist = np.hypot(ii - cy, jj - cx)
        if k < n_rings:
            img[(dist <= r) & (dist > r - RING_WIDTH)] = ANNULUS
        else:
            img[dist <= r] = DISK
    if noise_amplitude:
        img += rng.integers(-noise_amplitude, noise_amplitude + 1, size=size)
    return GrayImage(np.clip(img, 0, 255))


def sample_rng(seed: int, class_id: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, class_id, index])


def generate_dataset(spec: SynthSpec, out_dir) -> Path:
    """Write ``c{class}_{index}.pgm`` images and ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for c, count in enumerate(spec.per_class_counts):
        for i in range(count):
            img = generate_image(c, sample_rng(spec.seed, c, i), spec.image_size, spec.noise_amplitude)
            path = out / f"c{c}_{i:05d}.pgm"
            save_pgm(img, path)
            entries.append(ManifestEntry(path, c))
    manifest = out / "manifest.csv"
    write_manifest(entries, manifest)
    return manifest


def generate_arrays(spec: SynthSpec):
    """In-memory variant of :func:`generate_dataset`: (images, labels)."""
    images, labels = [], []
    for c, count in enumerate(spec.per_class_counts):
        for i in range(count):
            images.append(generate_image(c, sample_rng(spec.seed, c, i), spec.image_size, spec.noise_amplitude))
            labels.append(c)
    return images, labels
