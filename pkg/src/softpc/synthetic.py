"""Synthetic shape families used as a desk-scale training/evaluation corpus.

Each family samples a canonical shape; `generate_synthetic_dataset` draws
per-cloud shape parameters and applies a random pose/scale jitter, all
deterministically from the seed.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .errors import ParameterError

FAMILIES = ("sphere", "airplane", "box")


def _split_counts(n: int, fractions: list[float]) -> list[int]:
    counts = [int(np.floor(f * n)) for f in fractions]
    counts[0] += n - sum(counts)
    return counts


def sample_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform samples on the unit sphere (exact radius 1)."""
    v = rng.normal(size=(n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # A zero draw is astronomically unlikely; resample defensively anyway.
    while np.any(norms == 0.0):
        bad = norms[:, 0] == 0.0
        v[bad] = rng.normal(size=(int(bad.sum()), 3))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norms


def sample_airplane(
    rng: np.random.Generator,
    n: int,
    span: float = 1.9,
    sweep: float = 0.25,
    ripple_freq: float = 40.0,
    ripple_phase: float = 0.8,
) -> np.ndarray:
    """Toy airplane: tapered fuselage, swept corrugated wing, engine pods,
    winglets, cockpit bump, and tail surfaces along x."""
    n_fus, n_wing, n_htail, n_fin, n_eng, n_wlet, n_cpit = _split_counts(
        n, [0.36, 0.30, 0.10, 0.06, 0.10, 0.04, 0.04]
    )
    parts = []
    half = span / 2.0

    x = rng.uniform(-1.0, 1.0, size=n_fus)
    radius = 0.08 * (1.0 - 0.55 * np.abs(x)) * (1.0 - 0.3 * np.clip(-x, 0.0, 1.0))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n_fus)
    parts.append(np.stack([x, radius * np.cos(phi), radius * np.sin(phi)], axis=1))

    y = rng.uniform(-half, half, size=n_wing)
    chord = 0.34 * (1.0 - 0.6 * np.abs(y) / half)
    xw = 0.15 + sweep * np.abs(y) - rng.uniform(0.0, 1.0, size=n_wing) * chord
    # Mild family-constant corrugation plus a slight dihedral.
    zw = (
        rng.uniform(-0.012, 0.012, size=n_wing)
        + 0.02 * np.sin(ripple_freq * np.pi * y / half + ripple_phase)
        + 0.08 * np.abs(y) / half
    )
    parts.append(np.stack([xw, y, zw], axis=1))

    yt = rng.uniform(-0.35, 0.35, size=n_htail)
    xt = -0.86 - rng.uniform(0.0, 0.14, size=n_htail)
    zt = rng.uniform(-0.01, 0.01, size=n_htail)
    parts.append(np.stack([xt, yt, zt], axis=1))

    xf = -0.85 - rng.uniform(0.0, 0.15, size=n_fin)
    zf = rng.uniform(0.0, 0.32, size=n_fin) * (1.0 - 0.5 * (xf + 1.0))
    yf = rng.uniform(-0.01, 0.01, size=n_fin)
    parts.append(np.stack([xf, yf, zf], axis=1))

    # Two engine-pod pairs slung under the wings: small detached components
    # are what give per-cloud transforms a hard time at tight budgets.
    side = np.where(rng.uniform(size=n_eng) < 0.5, -1.0, 1.0)
    station = np.where(rng.uniform(size=n_eng) < 0.5, 0.26, 0.56)
    ye = side * station * half + rng.uniform(-0.02, 0.02, size=n_eng)
    xe = 0.18 + sweep * np.abs(ye) + rng.uniform(-0.16, 0.16, size=n_eng)
    phe = rng.uniform(0.0, 2.0 * np.pi, size=n_eng)
    parts.append(
        np.stack([xe, ye + 0.045 * np.cos(phe), -0.075 + 0.045 * np.sin(phe)], axis=1)
    )

    # Winglets at the tips.
    side = np.where(rng.uniform(size=n_wlet) < 0.5, -1.0, 1.0)
    yw = side * half + rng.uniform(-0.012, 0.012, size=n_wlet)
    xwl = 0.15 + sweep * half - rng.uniform(0.0, 0.12, size=n_wlet)
    zwl = 0.08 + rng.uniform(0.0, 0.14, size=n_wlet)
    parts.append(np.stack([xwl, yw, zwl], axis=1))

    # Cockpit canopy bump.
    xc = rng.uniform(0.55, 0.8, size=n_cpit)
    phc = rng.uniform(0.2 * np.pi, 0.8 * np.pi, size=n_cpit)
    rc = 0.085 * np.sin(np.pi * (xc - 0.55) / 0.25)
    parts.append(np.stack([xc, rc * np.cos(phc) * 0.6, 0.04 + rc * np.sin(phc)], axis=1))

    return np.concatenate(parts, axis=0)


def sample_box(rng: np.random.Generator, n: int) -> np.ndarray:
    """Points on the 12 edges of the cube [-1, 1]^3."""
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    edge_pairs = [
        (0, 1), (0, 2), (0, 4), (1, 3), (1, 5), (2, 3),
        (2, 6), (3, 7), (4, 5), (4, 6), (5, 7), (6, 7),
    ]
    which = rng.integers(0, len(edge_pairs), size=n)
    t = rng.uniform(0.0, 1.0, size=(n, 1))
    a = corners[[edge_pairs[w][0] for w in which]]
    b = corners[[edge_pairs[w][1] for w in which]]
    return a + t * (b - a)


def _rotation(rng: np.random.Generator) -> np.ndarray:
    """Small-attitude jitter: yaw up to ~7 deg, pitch/roll up to ~3 deg.

    Kept mild on purpose: scanned-corpus categories are canonically aligned,
    and the fixed-size decoder is meant to spend capacity on shape, not pose.
    """
    yaw = rng.uniform(-0.12, 0.12)
    pitch = rng.uniform(-0.05, 0.05)
    roll = rng.uniform(-0.05, 0.05)
    cz, sz = np.cos(yaw), np.sin(yaw)
    cy, sy = np.cos(pitch), np.sin(pitch)
    cx, sx = np.cos(roll), np.sin(roll)
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    return rz @ ry @ rx


def generate_synthetic_dataset(
    family: str, count: int, points_per_cloud: int, seed: int
) -> list[PointCloud]:
    """Deterministic list of `count` jittered clouds from one shape family."""
    if family not in FAMILIES:
        raise ParameterError(f"unknown shape family {family!r} (expected one of {FAMILIES})")
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if points_per_cloud < 8:
        raise ParameterError(f"points_per_cloud must be >= 8, got {points_per_cloud}")
    clouds = []
    for i in range(count):
        rng = np.random.default_rng([seed, _family_tag(family), i])
        if family == "sphere":
            base = sample_sphere(rng, points_per_cloud)
        elif family == "airplane":
            span = rng.uniform(1.8, 2.05)
            sweep = rng.uniform(0.18, 0.32)
            # Corrugation is family-constant detail: hard for per-cloud
            # transforms, free for a codec that learns the family.
            base = sample_airplane(rng, points_per_cloud, span=span, sweep=sweep)
        else:
            base = sample_box(rng, points_per_cloud)
        scale = rng.uniform(0.9, 1.1)
        pts = (base @ _rotation(rng).T) * scale
        clouds.append(PointCloud(pts, id=f"{family}-{i:04d}"))
    return clouds


def _family_tag(family: str) -> int:
    return FAMILIES.index(family) + 101
