"""Model-guided catheter segmentation.

The walk starts at a given distal tip, estimates the bending model from one
long initialization cone, then alternates short model-proposed steps with
cone searches, gating each image candidate against the model proposal.  The
accepted points are finally approximated by a Bezier curve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bezier import fit_bezier
from .features import ConeSpec, FeatureMask, cone_search, cone_search_with_stats, \
    default_ray_step
from .spring import ModelTable, SingularConfigurationError, SpringModelParams, \
    build_model_table, lookup, simulate_backward
from .volume import BasePlane, Volume3D, distance_to_plane

_PARALLEL_EPS = 1e-6
# fraction of the local contrast by which the init cone must beat a flat score
_INIT_MARGIN = 0.1

TAG_IMAGE = "image"
TAG_MODEL = "model"
TAG_COMPROMISE = "compromise"


@dataclass
class SegmentationConfig:
    """All tunables of the segmentation engine."""

    n_c: int = 8                  # control / cone count
    d_tol: float = 1.0            # mm; 0 = model only, inf = image only
    r_cone: float = 20.0          # mm cone base radius
    mask: FeatureMask = field(default_factory=FeatureMask)
    n_rays: int = 600
    ray_step: float | None = None  # mm; None = half the smallest voxel spacing
    model: SpringModelParams = field(default_factory=SpringModelParams)
    table: ModelTable | None = None
    table_f_samples: int = 200
    table_resolution: int = 100
    eq4_literal: bool = False

    def __post_init__(self):
        if self.n_c < 3:
            raise ValueError("n_c must be at least 3")
        if self.d_tol < 0:
            raise ValueError("d_tol must be non-negative")
        if self.r_cone <= 0:
            raise ValueError("r_cone must be positive")

    def ensure_table(self) -> ModelTable:
        if self.table is None:
            self.table = build_model_table(self.model, self.table_f_samples,
                                           self.table_resolution)
        return self.table


@dataclass
class LocalFrame:
    """Right-handed frame: deflection-plane normal, deflection direction,
    reference (marching) direction."""

    n_loc: np.ndarray
    d_loc: np.ndarray
    r_loc: np.ndarray


@dataclass
class EstimateResult:
    a: float
    d: float
    alpha0_sum: float
    f0_est: float
    l_long: np.ndarray
    alpha_sum_est: float
    clamped: bool
    used_fallback: bool
    warnings: list

    def as_dict(self) -> dict:
        return {"a": self.a, "d": self.d, "alpha0_sum": self.alpha0_sum,
                "f0_est": self.f0_est}


@dataclass
class Trajectory:
    """Ordered catheter points, distal tip first, with fitted Bezier curve."""

    points: np.ndarray                 # (n, 3) world mm
    bezier_control: np.ndarray | None  # (m, 3) or None for exact polylines
    provenance: list                   # per-point tag
    estimates: dict
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "points": [[float(x) for x in p] for p in self.points],
            "bezier": None if self.bezier_control is None
                      else [[float(x) for x in p] for p in self.bezier_control],
            "provenance": list(self.provenance),
            "estimates": {k: float(v) for k, v in self.estimates.items()},
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Trajectory":
        bez = doc.get("bezier")
        return cls(points=np.asarray(doc["points"], dtype=float),
                   bezier_control=None if bez is None else np.asarray(bez, dtype=float),
                   provenance=list(doc.get("provenance", [])),
                   estimates=dict(doc.get("estimates", {})),
                   warnings=list(doc.get("warnings", [])))


def save_trajectory(traj: Trajectory, path):
    Path(path).write_text(json.dumps(traj.to_dict(), indent=2) + "\n")


def load_trajectory(path) -> Trajectory:
    return Trajectory.from_dict(json.loads(Path(path).read_text()))


def make_local_frame(l_s, r_ref, prev: LocalFrame | None = None) -> LocalFrame:
    """Local frame from a segment vector and the reference direction.

    The chain n = l x r, d = n x r, r_loc = n x d always yields
    r_loc = -r_ref exactly, so feeding the distally oriented segment makes
    the frame march proximally.  Segments parallel to the reference reuse the
    previous frame, or a fixed axis-aligned one when there is none.
    """
    l_s = np.asarray(l_s, dtype=float)
    r_ref = np.asarray(r_ref, dtype=float)
    norm = np.linalg.norm(l_s)
    if norm == 0:
        raise ValueError("segment vector must be non-zero")
    l_hat = l_s / norm
    r_hat = r_ref / np.linalg.norm(r_ref)
    n = np.cross(l_hat, r_hat)
    if np.linalg.norm(n) < _PARALLEL_EPS:
        if prev is not None:
            return prev
        e = np.zeros(3)
        e[int(np.argmin(np.abs(r_hat)))] = 1.0
        n = np.cross(e, r_hat)
    n /= np.linalg.norm(n)
    d = np.cross(n, r_hat)
    d /= np.linalg.norm(d)
    r_loc = np.cross(n, d)
    return LocalFrame(n_loc=n, d_loc=d, r_loc=r_loc)


def propose_model_point(t_k, frame: LocalFrame, alpha_sum_k: float,
                        d_seg: float) -> np.ndarray:
    """One model step of length d_seg from the current cone top."""
    if abs(alpha_sum_k) >= math.pi / 2:
        raise ValueError("alpha_sum_k must lie strictly inside (-pi/2, pi/2)")
    t_k = np.asarray(t_k, dtype=float)
    return t_k + d_seg * (frame.d_loc * math.sin(alpha_sum_k)
                          + frame.r_loc * math.cos(alpha_sum_k))


def gate_candidate(c_img, b_mod, d_tol: float) -> tuple[np.ndarray, str]:
    """Accept the image candidate, or place a compromise point toward it."""
    c_img = np.asarray(c_img, dtype=float)
    b_mod = np.asarray(b_mod, dtype=float)
    if d_tol == 0:
        return b_mod.copy(), TAG_MODEL
    dist = float(np.linalg.norm(c_img - b_mod))
    if dist < d_tol:
        return c_img.copy(), TAG_IMAGE
    step = min(d_tol, dist / 2.0)
    return b_mod + (c_img - b_mod) / dist * step, TAG_COMPROMISE


def estimate_model(vol: Volume3D, tip, plane: BasePlane,
                   config: SegmentationConfig) -> EstimateResult:
    """Per-catheter model estimation from one long initialization cone.

    The cone from the tip toward the base covers half the estimated length.
    If its best score does not beat a flat-image score by a margin of the
    local contrast, the long segment falls back to the straight guess along
    the reference direction.
    """
    tip = np.asarray(tip, dtype=float)
    a = float(distance_to_plane(plane, tip))
    if a <= 0:
        raise ValueError("tip must be strictly distal of the base plane")
    table = config.ensure_table()
    step = config.ray_step if config.ray_step is not None else default_ray_step(vol)
    warnings = []

    base = tip - (a / 2.0) * plane.normal
    cone = ConeSpec(apex=tuple(tip), base_center=tuple(base),
                    base_radius=config.r_cone, n_rays=config.n_rays)
    m_point, best_score, contrast = cone_search_with_stats(vol, cone, config.mask, step)
    used_fallback = best_score >= -_INIT_MARGIN * contrast
    if used_fallback:
        l_long = -(a / 2.0) * plane.normal
        warnings.append("init_fallback_straight")
    else:
        l_long = m_point - tip

    u_long = l_long / np.linalg.norm(l_long)
    alpha0_sum = math.acos(float(np.clip(u_long @ (-plane.normal), -1.0, 1.0)))
    if alpha0_sum >= math.pi / 2 - 1e-6:
        alpha0_sum = math.pi / 2 - 1e-3
        warnings.append("alpha0_clamped")

    z_axis = vol.axis_directions[:, 2]
    alpha_ref = math.acos(float(np.clip(abs(plane.normal @ z_axis), -1.0, 1.0)))
    denom = max(math.cos(alpha_ref), 1e-12)
    if config.eq4_literal:
        d = a / denom * math.sin(math.acos(float(np.clip(alpha0_sum, -1.0, 1.0))))
    else:
        d = a / denom * math.sin(alpha0_sum)

    res = lookup(table, a, d)
    if res.clamped:
        warnings.append("lookup_clamped")
    return EstimateResult(a=a, d=d, alpha0_sum=alpha0_sum, f0_est=res.f_est,
                          l_long=l_long, alpha_sum_est=res.alpha_sum_est,
                          clamped=res.clamped, used_fallback=used_fallback,
                          warnings=warnings)


def _angle_profile(model: SpringModelParams, alpha0_sum: float, f0_est: float,
                   max_arc: float):
    """Backward angles at model-segment granularity covering max_arc.

    Returns (arcs, alpha_sums, truncated): when the backward walk hits a
    singular configuration the profile is truncated there and the engine
    treats anything beyond as straight.
    """
    n_steps = min(model.n_seg, max(1, math.ceil(max_arc / model.seg_length)))
    try:
        bw = simulate_backward(model, alpha0_sum, f0_est, n_steps)
        arcs = np.arange(n_steps + 1) * model.seg_length
        return arcs, bw.alpha_sum, False
    except SingularConfigurationError as exc:
        if exc.step == 0:
            return np.array([0.0]), np.array([alpha0_sum]), True
        bw = simulate_backward(model, alpha0_sum, f0_est, exc.step)
        arcs = np.arange(exc.step + 1) * model.seg_length
        return arcs, bw.alpha_sum, True


def segment_catheter(vol: Volume3D, tip, plane: BasePlane,
                     config: SegmentationConfig) -> Trajectory:
    """Segment one catheter from its distal tip to the base plane."""
    tip = np.asarray(tip, dtype=float)
    est = estimate_model(vol, tip, plane, config)
    step = config.ray_step if config.ray_step is not None else default_ray_step(vol)
    warnings = list(est.warnings)

    d_seg = est.a / (config.n_c - 1)
    u_long = est.l_long / np.linalg.norm(est.l_long)
    arcs, alphas, truncated = _angle_profile(config.model, est.alpha0_sum,
                                             est.f0_est, (config.n_c - 1) * d_seg)
    if truncated:
        warnings.append("model_walk_truncated")
    max_arc = float(arcs[-1])

    points = [tip]
    tags = [TAG_IMAGE]

    hard = math.pi / 2 - 1e-6
    sign = 1.0 if est.alpha0_sum >= 0 else -1.0

    def walk_angle(arc: float) -> float:
        if truncated and arc > max_arc:
            return 0.0
        # the (a, d) model space is one-sided: a tip force never bends the
        # catheter past straight, so the profile may not cross zero; the last
        # backward entry is also unchecked by the singular guard
        alpha = sign * float(np.interp(arc, arcs, alphas))
        return sign * min(max(alpha, 0.0), hard)

    def search(apex: np.ndarray, b_mod: np.ndarray):
        if config.d_tol == 0:
            return b_mod
        cone = ConeSpec(apex=tuple(apex), base_center=tuple(b_mod),
                        base_radius=config.r_cone, n_rays=config.n_rays)
        c_img, _ = cone_search(vol, cone, config.mask, step)
        return c_img

    def accept(t_k: np.ndarray, candidate: np.ndarray, b_mod: np.ndarray) -> bool:
        """Gate, clip at the base plane; returns False when the walk is done."""
        accepted, tag = gate_candidate(candidate, b_mod, config.d_tol)
        dist = distance_to_plane(plane, accepted)
        if dist <= 0:
            d_k = distance_to_plane(plane, t_k)
            tau = d_k / (d_k - dist) if d_k != dist else 1.0
            accepted = t_k + tau * (accepted - t_k)
            points.append(accepted)
            tags.append(tag)
            return False
        points.append(accepted)
        tags.append(tag)
        return True

    # first iteration: step along the estimated long segment, no model angle yet
    b0 = tip + d_seg * u_long
    going = accept(tip, search(tip, b0), b0)

    frame = None
    while going and len(points) < config.n_c:
        k = len(points) - 1
        t_k = points[k]
        frame = make_local_frame(points[k - 1] - t_k, plane.normal, frame)
        alpha_k = walk_angle(k * d_seg)
        b_mod = propose_model_point(t_k, frame, alpha_k, d_seg)
        going = accept(t_k, search(t_k, b_mod), b_mod)

    pts = np.asarray(points)
    # fit against the densified polyline: a square interpolating fit through
    # the raw points would amplify their sub-voxel jitter near the curve ends;
    # a short refinement budget suffices for smoothing fits
    control = fit_bezier(_densify(pts, max(d_seg / 8.0, 0.5)),
                         min(config.n_c, len(pts)), max_iter=15)
    return Trajectory(points=pts, bezier_control=control, provenance=tags,
                      estimates=est.as_dict(), warnings=warnings)


def _densify(poly: np.ndarray, step: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(len(poly), int(np.ceil(arc[-1] / step)) + 1)
    t = np.linspace(0.0, arc[-1], n)
    return np.stack([np.interp(t, arc, poly[:, c]) for c in range(3)], axis=1)
