"""Synthetic volumes with known bent-catheter centerlines.

Catheter centerlines come straight from the forward bending simulation, so
the gold standard is exact by construction.  Tubes rasterize as dark cores
with a linear one-voxel edge, optionally wrapped in a bright rim; straight
distractor tubes and dark blobs provide the outlier-inducing clutter that a
robust search must reject.  All randomness flows through a 64-bit PCG
generator seeded from the spec, so identical specs give bit-identical
volumes.
"""

from __future__ import annotations

import json
import math
import warnings as _warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .engine import Trajectory
from .spring import SpringModelParams, find_max_force, simulate_forward
from .volume import BasePlane, SeedSet, Volume3D

_CENTERLINE_STEP = 0.25  # mm, dense resampling used for distance queries

# standard benchmark knobs
BENCH_N_VOLUMES = 10
BENCH_CATHETERS_PER_VOLUME = 10
BENCH_DIMS = (192, 192, 104)
BENCH_SPACING = (0.5, 0.5, 1.0)
BENCH_NOISE_LEVELS = (0.0, 4.0, 8.0)
BENCH_MAX_DEFLECTION = 11.0        # mm lateral at the catheter's own depth
BENCH_INSERTION_RANGE = (62.0, 86.0)
BENCH_MAX_CORE = 45.0              # faintest void core intensity
BENCH_DROPOUT_FRACTION = 0.5       # catheters with fading void windows
BENCH_N_PARALLEL_TUBES = 3         # unseeded neighbor-like tubes
BENCH_N_OBLIQUE_TUBES = 2
BENCH_N_DISTRACTOR_BLOBS = 3


@dataclass
class CatheterSpec:
    f0: float                    # uN tip-effective force
    insertion_depth: float       # mm from base plane to tip
    deflection_azimuth: float    # rad about the plane normal
    entry_point: tuple           # (u, v) mm in-plane offsets from the plane origin
    core_intensity: float = 0.0  # void darkness; > 0 models a fainter catheter
    dropouts: list = field(default_factory=list)  # (arc_start, arc_len) mm windows
                                                  # where the void fades out

    def __post_init__(self):
        self.entry_point = tuple(float(x) for x in self.entry_point)
        self.dropouts = [tuple(float(x) for x in w) for w in self.dropouts]


@dataclass
class BloomSpec:
    enabled: bool = False
    rim_radius: float = 1.0      # mm, rim peak offset outside the tube wall
    rim_gain: float = 60.0       # intensity added at the rim peak


@dataclass
class DistractorSpec:
    kind: str                    # "tube" | "blob"
    p0: tuple = (0.0, 0.0, 0.0)  # tube endpoints, or blob center in p0
    p1: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.8

    def __post_init__(self):
        self.p0 = tuple(float(x) for x in self.p0)
        self.p1 = tuple(float(x) for x in self.p1)


@dataclass
class PhantomSpec:
    dims: tuple = (160, 160, 96)
    spacing: tuple = (0.5, 0.5, 1.0)
    background_intensity: float = 100.0
    catheters: list = field(default_factory=list)
    tube_radius: float = 0.8
    noise_sigma: float = 0.0
    bloom: BloomSpec = field(default_factory=BloomSpec)
    distractors: list = field(default_factory=list)
    rng_seed: int = 0
    plane_offset: float = 4.0    # mm, base plane distance from the volume origin face

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        doc = json.loads(text)
        doc["bloom"] = BloomSpec(**doc.get("bloom", {}))
        doc["catheters"] = [CatheterSpec(**c) for c in doc.get("catheters", [])]
        doc["distractors"] = [DistractorSpec(**d) for d in doc.get("distractors", [])]
        for key in ("dims", "spacing"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


def save_phantom_spec(spec: PhantomSpec, path):
    Path(path).write_text(spec.to_json() + "\n")


def load_phantom_spec(path) -> PhantomSpec:
    return PhantomSpec.from_json(Path(path).read_text())


def _centerline_world(cath: CatheterSpec, model: SpringModelParams,
                      plane: BasePlane, in_plane: tuple) -> np.ndarray:
    """Exact forward-model polyline, truncated where the plane distance
    reaches the insertion depth, mapped into world coordinates."""
    if cath.insertion_depth > model.total_length:
        raise ValueError("insertion_depth exceeds the catheter length")
    state = simulate_forward(model, cath.f0)
    pos = state.positions                       # (n+1, 2) as (a, d)
    a = pos[:, 0]
    idx = np.searchsorted(a, cath.insertion_depth)
    if idx >= len(a):
        poly2d = pos
    else:
        frac = (cath.insertion_depth - a[idx - 1]) / (a[idx] - a[idx - 1])
        tip = pos[idx - 1] + frac * (pos[idx] - pos[idx - 1])
        poly2d = np.vstack([pos[:idx], tip])

    u, v = in_plane
    lateral = math.cos(cath.deflection_azimuth) * u + math.sin(cath.deflection_azimuth) * v
    entry = plane.point + cath.entry_point[0] * u + cath.entry_point[1] * v
    return entry[None, :] + np.outer(poly2d[:, 0], plane.normal) \
        + np.outer(poly2d[:, 1], lateral)


def _dense_polyline(poly: np.ndarray, step: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(2, int(np.ceil(arc[-1] / step)) + 1)
    targets = np.linspace(0.0, arc[-1], n)
    out = np.empty((n, 3))
    for c in range(3):
        out[:, c] = np.interp(targets, arc, poly[:, c])
    return out


def _voxel_grid_roi(vol_shape, spacing, origin, lo, hi):
    """Index ranges and world centers of the voxels inside a world-space box."""
    lo_idx = np.maximum(np.floor((lo - origin) / spacing).astype(int), 0)
    hi_idx = np.minimum(np.ceil((hi - origin) / spacing).astype(int) + 1,
                        np.asarray(vol_shape))
    if np.any(lo_idx >= hi_idx):
        return None
    ranges = [np.arange(lo_idx[c], hi_idx[c]) for c in range(3)]
    ii, jj, kk = np.meshgrid(*ranges, indexing="ij")
    centers = origin + np.stack([ii, jj, kk], axis=-1) * spacing
    return (slice(lo_idx[0], hi_idx[0]), slice(lo_idx[1], hi_idx[1]),
            slice(lo_idx[2], hi_idx[2])), centers


def _stamp_tube(data, spacing, origin, poly, radius, edge,
                bloom: BloomSpec | None = None, core_floor: float = 0.0,
                dropouts=(), background: float = 100.0):
    """Darken voxels near the polyline; optionally add a bright rim outside.

    ``core_floor`` lifts the void darkness (fainter catheter); ``dropouts``
    are (arc_start, arc_len) windows along the polyline where the void fades
    out entirely, with 2 mm soft shoulders.
    """
    dense = _dense_polyline(poly, _CENTERLINE_STEP)
    reach = radius + edge
    if bloom is not None and bloom.enabled:
        reach = max(reach, radius + 2.0 * bloom.rim_radius)
    roi = _voxel_grid_roi(data.shape, spacing, origin,
                          dense.min(axis=0) - reach - 1.0,
                          dense.max(axis=0) + reach + 1.0)
    if roi is None:
        return
    sl, centers = roi
    tree = cKDTree(dense)
    dist, idx = tree.query(centers.reshape(-1, 3), k=1)
    dist = dist.reshape(centers.shape[:3])

    # multiplicative darkening composes across crossing structures
    mult = np.clip((dist - (radius - edge / 2.0)) / edge, 0.0, 1.0)
    floor = min(max(core_floor / background, 0.0), 1.0)
    mult = floor + (1.0 - floor) * mult
    if dropouts:
        arc = (idx * _CENTERLINE_STEP).reshape(centers.shape[:3])
        visible = np.ones_like(mult)
        for start, length in dropouts:
            lo, hi = start, start + length
            fade = np.clip(np.minimum(arc - lo, hi - arc) / 2.0, 0.0, 1.0)
            visible = np.minimum(visible, 1.0 - fade)
        mult = 1.0 - (1.0 - mult) * visible
    data[sl] = (data[sl] * mult).astype(np.float32)

    if bloom is not None and bloom.enabled and bloom.rim_gain > 0:
        peak = radius + bloom.rim_radius
        bump = np.clip(1.0 - np.abs(dist - peak) / bloom.rim_radius, 0.0, 1.0)
        data[sl] = data[sl] + (bloom.rim_gain * bump).astype(np.float32)


def _stamp_blob(data, spacing, origin, center, radius, edge):
    center = np.asarray(center, dtype=float)
    reach = radius + edge
    roi = _voxel_grid_roi(data.shape, spacing, origin, center - reach - 1.0,
                          center + reach + 1.0)
    if roi is None:
        return
    sl, centers = roi
    dist = np.linalg.norm(centers - center, axis=-1)
    mult = np.clip((dist - (radius - edge / 2.0)) / edge, 0.0, 1.0)
    data[sl] = (data[sl] * mult).astype(np.float32)


def generate_phantom(spec: PhantomSpec,
                     model: SpringModelParams) -> tuple[Volume3D, list, SeedSet]:
    """Build (volume, gold centerlines, seeds) from a phantom spec."""
    dims = tuple(int(d) for d in spec.dims)
    spacing = np.asarray(spec.spacing, dtype=float)
    origin = np.zeros(3)
    extent = (np.asarray(dims) - 1) * spacing

    plane_point = np.array([extent[0] / 2.0, extent[1] / 2.0, spec.plane_offset])
    plane = BasePlane(point=plane_point, normal=np.array([0.0, 0.0, 1.0]))
    in_plane = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))

    data = np.full(dims, spec.background_intensity, dtype=np.float32)
    edge = float(np.max(spacing))

    polylines = []
    for cath in spec.catheters:
        poly = _centerline_world(cath, model, plane, in_plane)
        polylines.append(poly)

    for i, poly in enumerate(polylines):
        for j in range(i):
            di = cKDTree(_dense_polyline(poly, 0.5)).query(
                _dense_polyline(polylines[j], 0.5), k=1)[0].min()
            if di < 2.0 * spec.tube_radius:
                _warnings.warn(
                    f"catheters {j} and {i} pass within {di:.2f} mm of each other",
                    stacklevel=2)

    for d in spec.distractors:
        if d.kind == "tube":
            _stamp_tube(data, spacing, origin,
                        np.array([d.p0, d.p1], dtype=float), d.radius, edge)
        elif d.kind == "blob":
            _stamp_blob(data, spacing, origin, d.p0, d.radius, edge)
        else:
            raise ValueError(f"unknown distractor kind {d.kind!r}")

    for cath, poly in zip(spec.catheters, polylines):
        _stamp_tube(data, spacing, origin, poly, spec.tube_radius, edge,
                    spec.bloom, core_floor=cath.core_intensity,
                    dropouts=cath.dropouts,
                    background=spec.background_intensity)

    if spec.noise_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
        data = data + rng.normal(0.0, spec.noise_sigma, size=dims).astype(np.float32)

    vol = Volume3D(dims=dims, spacing=spacing, origin=origin,
                   axis_directions=np.eye(3), data=data)

    gold = []
    tips = []
    for poly in polylines:
        pts = poly[::-1].copy()          # distal tip first
        gold.append(Trajectory(points=pts, bezier_control=None, provenance=[],
                               estimates={}))
        tips.append(pts[0].copy())
    seeds = SeedSet(tips=tips, plane=plane)
    return vol, gold, seeds


def deflection_at_depth(model: SpringModelParams, f0: float, depth: float) -> float | None:
    """Lateral deflection where the forward catheter crosses plane depth; None
    when the catheter never reaches it."""
    state = simulate_forward(model, f0)
    a = state.positions[:, 0]
    if a[-1] < depth:
        return None
    i = int(np.searchsorted(a, depth))
    if i == 0:
        return 0.0
    frac = (depth - a[i - 1]) / (a[i] - a[i - 1])
    return float(state.positions[i - 1, 1] + frac * (state.positions[i, 1]
                                                     - state.positions[i - 1, 1]))


def force_for_deflection(model: SpringModelParams, depth: float,
                         d_target: float) -> float:
    """Tip force whose catheter deflects ``d_target`` mm at ``depth`` mm."""
    if d_target <= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        d = deflection_at_depth(model, hi, depth)
        if d is None or d >= d_target:
            break
        lo = hi
        hi *= 2.0
    else:
        raise ValueError(f"deflection {d_target} mm unreachable at depth {depth} mm")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        d = deflection_at_depth(model, mid, depth)
        if d is None or d >= d_target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class BenchmarkCase:
    volume_id: int
    volume: Volume3D
    gold: list
    seeds: SeedSet
    spec: PhantomSpec


@dataclass
class BenchmarkBundle:
    seed: int
    model: SpringModelParams
    cases: list

    @property
    def n_catheters(self) -> int:
        return sum(len(c.seeds.tips) for c in self.cases)


def standard_benchmark(seed: int,
                       model: SpringModelParams | None = None) -> BenchmarkBundle:
    """Fixed-derivation benchmark: 10 volumes x 10 catheters.

    Deflections span straight to strongly bent, insertion depths vary around
    the clinical average, noise cycles through three levels, and bloom rims
    plus distractor tubes/blobs appear on a subset of the volumes.
    Everything derives deterministically from ``seed``.
    """
    if model is None:
        model = SpringModelParams()
    rng = np.random.Generator(np.random.PCG64(seed))
    extent = (np.asarray(BENCH_DIMS) - 1) * np.asarray(BENCH_SPACING)
    cx, cy = extent[0] / 2.0, extent[1] / 2.0

    cases = []
    for v in range(BENCH_N_VOLUMES):
        noise = BENCH_NOISE_LEVELS[v % len(BENCH_NOISE_LEVELS)]
        bloom = BloomSpec(enabled=(v % 2 == 1), rim_radius=1.0, rim_gain=60.0)
        with_distractors = v >= 4

        catheters = []
        grid = [(ui, vi) for ui in (-18.0, -9.0, 0.0, 9.0, 18.0) for vi in (-7.0, 7.0)]
        order = rng.permutation(len(grid))
        n_cath = BENCH_CATHETERS_PER_VOLUME
        # deflection targets sweep the range within every volume
        targets = np.linspace(0.0, BENCH_MAX_DEFLECTION, n_cath)
        targets = rng.permutation(targets)
        for c in range(n_cath):
            eu, ev = grid[order[c]]
            eu += float(rng.uniform(-1.5, 1.5))
            ev += float(rng.uniform(-1.5, 1.5))
            depth = float(rng.uniform(*BENCH_INSERTION_RANGE))
            f0 = force_for_deflection(model, depth, float(targets[c]))
            core = float(rng.uniform(0.0, BENCH_MAX_CORE)) if rng.random() < 0.5 else 0.0
            dropouts = []
            if rng.random() < BENCH_DROPOUT_FRACTION:
                # fading void windows on the base side only: the tip is
                # clinician-identified (visible by assumption) and the
                # initialization cone relies on the mid-catheter zone
                for _ in range(int(rng.integers(1, 3))):
                    length = float(rng.uniform(6.0, 14.0))
                    hi = depth / 2.0 - 8.0 - length
                    if hi > 8.0:
                        dropouts.append((float(rng.uniform(8.0, hi)), length))
            catheters.append(CatheterSpec(
                f0=f0, insertion_depth=depth,
                deflection_azimuth=float(rng.uniform(0.0, 2.0 * math.pi)),
                entry_point=(eu, ev), core_intensity=core, dropouts=dropouts))

        distractors = []
        if with_distractors:
            # unseeded near-parallel tubes mimic neighbor catheters: the
            # classic wrong-track target for an unconstrained search
            for _ in range(BENCH_N_PARALLEL_TUBES):
                cath = catheters[int(rng.integers(0, n_cath))]
                ang = float(rng.uniform(0.0, 2.0 * math.pi))
                off = float(rng.uniform(4.5, 8.0))
                base = np.array([cx + cath.entry_point[0] + off * math.cos(ang),
                                 cy + cath.entry_point[1] + off * math.sin(ang),
                                 2.0])
                tilt = float(rng.uniform(0.0, 0.12))
                taz = float(rng.uniform(0.0, 2.0 * math.pi))
                u = np.array([math.sin(tilt) * math.cos(taz),
                              math.sin(tilt) * math.sin(taz), math.cos(tilt)])
                distractors.append(DistractorSpec(
                    kind="tube", p0=tuple(base),
                    p1=tuple(base + (extent[2] - 6.0) * u), radius=0.8))
            for _ in range(BENCH_N_OBLIQUE_TUBES):
                p0 = np.array([rng.uniform(cx - 30, cx + 30),
                               rng.uniform(cy - 30, cy + 30),
                               rng.uniform(15.0, extent[2] - 15.0)])
                u = rng.normal(size=3)
                u /= np.linalg.norm(u)
                distractors.append(DistractorSpec(
                    kind="tube", p0=tuple(p0 - 55.0 * u), p1=tuple(p0 + 55.0 * u),
                    radius=0.8))
            for _ in range(BENCH_N_DISTRACTOR_BLOBS):
                center = np.array([rng.uniform(cx - 25, cx + 25),
                                   rng.uniform(cy - 25, cy + 25),
                                   rng.uniform(15.0, extent[2] - 15.0)])
                distractors.append(DistractorSpec(
                    kind="blob", p0=tuple(center),
                    radius=float(rng.uniform(1.5, 3.5))))

        spec = PhantomSpec(dims=BENCH_DIMS, spacing=BENCH_SPACING,
                           catheters=catheters, noise_sigma=noise, bloom=bloom,
                           distractors=distractors,
                           rng_seed=int(rng.integers(2**62)))
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore")  # crossing catheters are intended here
            volume, gold, seeds = generate_phantom(spec, model)
        cases.append(BenchmarkCase(volume_id=v, volume=volume, gold=gold,
                                   seeds=seeds, spec=spec))
    return BenchmarkBundle(seed=seed, model=model, cases=cases)
