"""Curved-grid patch parameterization and rendering.

A patch is a G x G grid of cells drawn as stroked edges. Every unique edge
(interior edges are shared between neighboring cells and stored once) bends
as a quadratic Bezier: its control point sits at the edge midpoint displaced
along the edge normal by deform * curvature_limit cell-edge lengths. Cell
gates in [0, 1] modulate stroke opacity; a shared edge takes the max of its
two adjacent gates. A flat genome in [0, 1]^(G^2 + 2G(G+1)) decodes to
(gates, deforms), which keeps the search box-constrained.

Geometry below the 0.5 cell-edge offset bound cannot self-intersect, so any
genome decoded under curvature_limit < 0.5 is printable as a single
connected lattice.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import TopologyError

_BEZIER_SEGMENTS_RENDER = 32
_BEZIER_SEGMENTS_CHECK = 64
# intersections this close (cell units) to a shared grid vertex are the
# legitimate meeting point of the two curves, not a self-intersection
_VERTEX_TOL = 0.02


@dataclass(frozen=True)
class GridConfig:
    """Grid geometry and appearance knobs."""

    grid_dim: int = 5
    curvature_limit: float = 0.40
    line_width_ratio: float = 0.20
    patch_intensity: float = 0.0
    supersample: int = 4

    def __post_init__(self):
        if not isinstance(self.grid_dim, int) or self.grid_dim < 2:
            raise ValueError(f"grid_dim must be an integer >= 2, got {self.grid_dim}")
        if not 0.0 <= self.curvature_limit < 1.0:
            raise ValueError(f"curvature_limit must be in [0, 1), got {self.curvature_limit}")
        if not 0.0 < self.line_width_ratio <= 1.0:
            raise ValueError(f"line_width_ratio must be in (0, 1], got {self.line_width_ratio}")
        if not 0.0 <= self.patch_intensity <= 1.0:
            raise ValueError(f"patch_intensity must be in [0, 1], got {self.patch_intensity}")
        if not isinstance(self.supersample, int) or self.supersample < 1:
            raise ValueError(f"supersample must be an integer >= 1, got {self.supersample}")


@dataclass(frozen=True)
class PatchParams:
    """Decoded patch: per-cell gates and per-unique-edge deforms."""

    gates: np.ndarray  # (G, G), rows are grid rows, values in [0, 1]
    deforms: np.ndarray  # (2 * G * (G + 1),), values in [-1, 1]

    def __post_init__(self):
        gates = np.asarray(self.gates, dtype=np.float64)
        deforms = np.asarray(self.deforms, dtype=np.float64)
        if gates.ndim != 2 or gates.shape[0] != gates.shape[1]:
            raise ValueError(f"gates must be square, got shape {gates.shape}")
        g = gates.shape[0]
        if deforms.shape != (2 * g * (g + 1),):
            raise ValueError(
                f"deforms must have length {2 * g * (g + 1)} for G={g}, got {deforms.shape}"
            )
        if not (np.isfinite(gates).all() and np.isfinite(deforms).all()):
            raise ValueError("gates and deforms must be finite")
        if gates.min() < 0.0 or gates.max() > 1.0:
            raise ValueError("gates must lie in [0, 1]")
        if deforms.min() < -1.0 or deforms.max() > 1.0:
            raise ValueError("deforms must lie in [-1, 1]")
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "deforms", deforms)

    @property
    def grid_dim(self) -> int:
        return self.gates.shape[0]


@dataclass(frozen=True)
class RenderedPatch:
    """Rasterized patch: soft coverage alpha and an intensity field."""

    alpha: np.ndarray  # (side, side) in [0, 1]
    intensity: np.ndarray  # (side, side) in [0, 1]
    side: int


def genome_dim(cfg: GridConfig) -> int:
    """Flat genome length: G^2 gates + one deform per unique edge."""
    g = cfg.grid_dim
    return g * g + 2 * g * (g + 1)


def decode(flat: np.ndarray, cfg: GridConfig) -> PatchParams:
    """Map a flat genome to clamped patch parameters.

    Gates clamp to [0, 1]. Deform coordinates map from the [0, 1] search box
    to [-1, 1] (0.5 is straight) and clamp there, so the rendered control
    offset never exceeds curvature_limit cell-edge lengths.
    """
    flat = np.asarray(flat, dtype=np.float64)
    want = genome_dim(cfg)
    if flat.shape != (want,):
        raise ValueError(f"genome must have shape ({want},) for G={cfg.grid_dim}, got {flat.shape}")
    if not np.isfinite(flat).all():
        raise ValueError("genome must be finite")
    g = cfg.grid_dim
    gates = np.clip(flat[: g * g], 0.0, 1.0).reshape(g, g)
    deforms = np.clip(2.0 * flat[g * g :] - 1.0, -1.0, 1.0)
    return PatchParams(gates=gates, deforms=deforms)


def _edge_geometry(g: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Endpoints and normals of all unique edges in cell units.

    Horizontal edges come first, ordered by (grid row, cell column); then
    vertical edges ordered by (grid column, cell row). Matches the deform
    vector layout.
    """
    p0, p1, perp = [], [], []
    for r in range(g + 1):
        for c in range(g):
            p0.append((c, r))
            p1.append((c + 1, r))
            perp.append((0.0, 1.0))
    for c in range(g + 1):
        for r in range(g):
            p0.append((c, r))
            p1.append((c, r + 1))
            perp.append((1.0, 0.0))
    return np.array(p0, float), np.array(p1, float), np.array(perp, float)


def _edge_opacities(gates: np.ndarray) -> np.ndarray:
    """Effective opacity per unique edge: max over the adjacent cell gates."""
    g = gates.shape[0]
    out = np.zeros(2 * g * (g + 1))
    i = 0
    for r in range(g + 1):
        for c in range(g):
            vals = []
            if r - 1 >= 0:
                vals.append(gates[r - 1, c])
            if r <= g - 1:
                vals.append(gates[r, c])
            out[i] = max(vals)
            i += 1
    for c in range(g + 1):
        for r in range(g):
            vals = []
            if c - 1 >= 0:
                vals.append(gates[r, c - 1])
            if c <= g - 1:
                vals.append(gates[r, c])
            out[i] = max(vals)
            i += 1
    return out


def _control_points(p: PatchParams, cfg: GridConfig) -> np.ndarray:
    """Quadratic Bezier control point per edge, cell units."""
    p0, p1, perp = _edge_geometry(p.grid_dim)
    mid = 0.5 * (p0 + p1)
    offset = (p.deforms * cfg.curvature_limit)[:, None] * perp
    return mid + offset


def _bezier_polyline(p0: np.ndarray, c: np.ndarray, p1: np.ndarray, n: int) -> np.ndarray:
    """Flatten one quadratic Bezier into n segments (n + 1 points)."""
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return (1 - t) ** 2 * p0 + 2 * t * (1 - t) * c + t**2 * p1


def check_topology(p: PatchParams, cfg: GridConfig) -> bool:
    """True when no two active edge curves cross away from a shared vertex.

    Active means nonzero effective opacity. Curves are flattened densely and
    tested pairwise for segment intersections; crossings within a small
    neighborhood of a vertex both curves share are the legitimate lattice
    joints. Offsets below 0.5 cell-edges cannot produce crossings, so any
    decoded genome under curvature_limit < 0.5 passes.
    """
    g = p.grid_dim
    p0, p1, _ = _edge_geometry(g)
    ctrl = _control_points(p, cfg)
    opac = _edge_opacities(p.gates)
    active = np.nonzero(opac > 0.0)[0]
    if len(active) < 2:
        return True

    polys = {i: _bezier_polyline(p0[i], ctrl[i], p1[i], _BEZIER_SEGMENTS_CHECK) for i in active}
    los = {i: polys[i].min(axis=0) for i in active}
    his = {i: polys[i].max(axis=0) for i in active}

    for ai in range(len(active)):
        i = active[ai]
        for bj in range(ai + 1, len(active)):
            j = active[bj]
            if (los[i] > his[j] + 1e-9).any() or (los[j] > his[i] + 1e-9).any():
                continue
            shared = _shared_vertices(p0[i], p1[i], p0[j], p1[j])
            if _polylines_cross(polys[i], polys[j], shared):
                return False
    return True


def _shared_vertices(a0, a1, b0, b1) -> np.ndarray:
    """Grid vertices common to both edges, shape (k, 2)."""
    out = []
    for va in (a0, a1):
        for vb in (b0, b1):
            if abs(va[0] - vb[0]) < 1e-12 and abs(va[1] - vb[1]) < 1e-12:
                out.append(va)
    return np.array(out) if out else np.zeros((0, 2))


def _polylines_cross(pa: np.ndarray, pb: np.ndarray, shared: np.ndarray) -> bool:
    """Any segment pair intersection beyond the shared-vertex neighborhood."""
    a0, a1 = pa[:-1], pa[1:]
    b0, b1 = pb[:-1], pb[1:]
    na, nb = len(a0), len(b0)
    # broadcast all segment pairs at once
    p = np.repeat(a0, nb, axis=0)
    r = np.repeat(a1 - a0, nb, axis=0)
    q = np.tile(b0, (na, 1))
    s = np.tile(b1 - b0, (na, 1))
    pq = q - p
    denom = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    cross_pq_r = pq[:, 0] * r[:, 1] - pq[:, 1] * r[:, 0]
    cross_pq_s = pq[:, 0] * s[:, 1] - pq[:, 1] * s[:, 0]

    scale = np.maximum(np.linalg.norm(r, axis=1) * np.linalg.norm(s, axis=1), 1e-30)
    nonpar = np.abs(denom) > 1e-12 * scale
    pts = []
    if nonpar.any():
        t = np.where(nonpar, cross_pq_s / np.where(nonpar, denom, 1.0), -1.0)
        u = np.where(nonpar, cross_pq_r / np.where(nonpar, denom, 1.0), -1.0)
        hit = nonpar & (t >= -1e-12) & (t <= 1 + 1e-12) & (u >= -1e-12) & (u <= 1 + 1e-12)
        if hit.any():
            pts.append(p[hit] + t[hit, None] * r[hit])
    # collinear overlap: only a stretch of shared line longer than a point counts
    par = ~nonpar & (np.abs(cross_pq_r) <= 1e-9 * np.maximum(scale, 1.0))
    if par.any():
        idx = np.nonzero(par)[0]
        for k in idx:
            d = r[k]
            L2 = float(d @ d)
            if L2 < 1e-30:
                continue
            t0 = float((q[k] - p[k]) @ d) / L2
            t1 = float((q[k] + s[k] - p[k]) @ d) / L2
            lo, hi = max(0.0, min(t0, t1)), min(1.0, max(t0, t1))
            if hi - lo > 1e-9:
                mids = p[k] + np.array([lo, 0.5 * (lo + hi), hi])[:, None] * d
                pts.append(mids)
    if not pts:
        return False
    pts = np.vstack(pts)
    if len(shared) == 0:
        return True
    dmin = np.min(np.linalg.norm(pts[:, None, :] - shared[None], axis=2), axis=1)
    return bool((dmin > _VERTEX_TOL).any())


def render(p: PatchParams, cfg: GridConfig, side: int) -> RenderedPatch:
    """Rasterize the patch to a side x side soft alpha plus intensity field.

    Coverage is estimated on a supersampled lattice (binary stroke hit test
    against the flattened curves, max-combined across edges weighted by edge
    opacity) and box-downsampled. Pure function of its arguments.
    """
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    g = p.grid_dim
    ss = cfg.supersample
    hs = side * ss
    cell_px = side / g
    halfw = 0.5 * cfg.line_width_ratio * cell_px

    p0, p1, _ = _edge_geometry(g)
    ctrl = _control_points(p, cfg)
    opac = _edge_opacities(p.gates)

    canvas = np.zeros((hs, hs))
    # supersample centers in pixel units: (k + 0.5) / ss
    for e in np.nonzero(opac > 0.0)[0]:
        poly = _bezier_polyline(p0[e], ctrl[e], p1[e], _BEZIER_SEGMENTS_RENDER) * cell_px
        xmin, ymin = poly.min(axis=0) - halfw
        xmax, ymax = poly.max(axis=0) + halfw
        j_lo = max(0, int(math.floor(xmin * ss - 0.5)) - 1)
        j_hi = min(hs, int(math.ceil(xmax * ss - 0.5)) + 2)
        i_lo = max(0, int(math.floor(ymin * ss - 0.5)) - 1)
        i_hi = min(hs, int(math.ceil(ymax * ss - 0.5)) + 2)
        if j_lo >= j_hi or i_lo >= i_hi:
            continue
        xs = (np.arange(j_lo, j_hi) + 0.5) / ss
        ys = (np.arange(i_lo, i_hi) + 0.5) / ss
        pts = np.empty((len(ys) * len(xs), 2))
        pts[:, 0] = np.tile(xs, len(ys))
        pts[:, 1] = np.repeat(ys, len(xs))
        d2 = _dist2_to_polyline(pts, poly)
        mask = (d2 <= halfw * halfw).reshape(len(ys), len(xs))
        block = canvas[i_lo:i_hi, j_lo:j_hi]
        np.maximum(block, opac[e] * mask, out=block)

    alpha = canvas.reshape(side, ss, side, ss).mean(axis=(1, 3))
    intensity = np.full((side, side), cfg.patch_intensity)
    return RenderedPatch(alpha=alpha, intensity=intensity, side=side)


def _dist2_to_polyline(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Squared distance from each point to the nearest polyline segment."""
    a, b = poly[:-1], poly[1:]
    d = b - a
    l2 = np.maximum((d * d).sum(axis=1), 1e-30)
    # components kept separate: avoids (n_pts, n_segs, 2) temporaries
    dx = pts[:, 0:1] - a[None, :, 0]
    dy = pts[:, 1:2] - a[None, :, 1]
    t = (dx * d[None, :, 0] + dy * d[None, :, 1]) / l2[None]
    np.clip(t, 0.0, 1.0, out=t)
    ex = dx - t * d[None, :, 0]
    ey = dy - t * d[None, :, 1]
    return (ex * ex + ey * ey).min(axis=1)


def export_vector(p: PatchParams, cfg: GridConfig) -> str:
    """Emit the patch as an SVG document of stroked quadratic paths.

    One path per active edge (effective opacity > 0.5), round caps, stroke
    width equal to line_width_ratio in cell units. Refuses self-intersecting
    geometry since the output feeds fabrication.
    """
    if not check_topology(p, cfg):
        raise TopologyError("refusing to export self-intersecting patch geometry")
    g = p.grid_dim
    p0, p1, _ = _edge_geometry(g)
    ctrl = _control_points(p, cfg)
    opac = _edge_opacities(p.gates)
    paths = []
    for e in np.nonzero(opac > 0.5)[0]:
        d = (
            f"M {p0[e, 0]:.6g} {p0[e, 1]:.6g} "
            f"Q {ctrl[e, 0]:.6g} {ctrl[e, 1]:.6g} {p1[e, 0]:.6g} {p1[e, 1]:.6g}"
        )
        paths.append(f'  <path d="{d}" />')
    body = "\n".join(paths)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {g} {g}">\n'
        f'<g fill="none" stroke="#000000" stroke-width="{cfg.line_width_ratio:.6g}"'
        f' stroke-linecap="round">\n{body}\n</g>\n</svg>\n'
    )


def save_patch(p: PatchParams, cfg: GridConfig, path: str) -> None:
    """Persist patch parameters plus their grid config as JSON."""
    doc = {
        "grid_dim": p.grid_dim,
        "gates": p.gates.tolist(),
        "deforms": p.deforms.tolist(),
        "config": asdict(cfg),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_patch(path: str) -> tuple[PatchParams, GridConfig]:
    """Load patch parameters written by save_patch."""
    with open(path) as f:
        doc = json.load(f)
    try:
        cfg = GridConfig(**doc["config"])
        p = PatchParams(
            gates=np.array(doc["gates"], dtype=np.float64),
            deforms=np.array(doc["deforms"], dtype=np.float64),
        )
    except (KeyError, TypeError) as e:
        raise ValueError(f"malformed patch file {path}: {e}") from e
    if p.grid_dim != doc.get("grid_dim") or p.grid_dim != cfg.grid_dim:
        raise ValueError(f"patch file {path} grid_dim mismatch")
    return p, cfg
