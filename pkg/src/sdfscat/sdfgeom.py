"""Grid-based SDF utilities: analytic circle SDFs, fast-marching signed
distance from binary masks, zero-level-set point extraction, Chamfer
distance, and relative l2 error.

Sign convention everywhere: positive inside the obstacle.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError, FormatError


@dataclass(frozen=True)
class Rect:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("degenerate rectangle")

    @classmethod
    def square(cls, half: float) -> "Rect":
        return cls(-half, half, -half, half)

    def contains(self, x, y):
        return (
            (x >= self.xmin) & (x <= self.xmax)
            & (y >= self.ymin) & (y <= self.ymax)
        )


@dataclass
class SdfGrid:
    """Uniform grid of SDF samples; values[iy, ix] at (x0+ix*dx, y0+iy*dy)."""

    nx: int
    ny: int
    origin: tuple
    spacing: tuple
    values: np.ndarray

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid must be at least 2x2")
        if not (self.spacing[0] > 0 and self.spacing[1] > 0):
            raise ValueError("spacing must be positive")
        self.values = np.asarray(self.values, dtype=float).reshape(self.ny, self.nx)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite grid values")

    @property
    def xs(self):
        return self.origin[0] + self.spacing[0] * np.arange(self.nx)

    @property
    def ys(self):
        return self.origin[1] + self.spacing[1] * np.arange(self.ny)

    @classmethod
    def from_roi(cls, roi: Rect, nx: int, ny: int, values=None) -> "SdfGrid":
        dx = (roi.xmax - roi.xmin) / (nx - 1)
        dy = (roi.ymax - roi.ymin) / (ny - 1)
        if values is None:
            values = np.zeros((ny, nx))
        return cls(nx, ny, (roi.xmin, roi.ymin), (dx, dy), values)


@dataclass
class BinaryMask:
    nx: int
    ny: int
    origin: tuple
    spacing: tuple
    inside: np.ndarray

    def __post_init__(self):
        self.inside = np.asarray(self.inside, dtype=bool).reshape(self.ny, self.nx)


def circle_sdf(center, radius: float, roi: Rect, nx: int, ny: int) -> SdfGrid:
    """radius - |x - center| sampled on the grid; positive inside."""
    if not radius > 0:
        raise DomainError("circle_sdf: radius must be > 0")
    grid = SdfGrid.from_roi(roi, nx, ny)
    X, Y = np.meshgrid(grid.xs, grid.ys)
    grid.values = radius - np.hypot(X - center[0], Y - center[1])
    return grid


def ellipse_mask(center, rx: float, ry: float, roi: Rect, nx: int, ny: int) -> BinaryMask:
    """Axis-aligned ellipse indicator on the grid (ground-truth shapes)."""
    dx = (roi.xmax - roi.xmin) / (nx - 1)
    dy = (roi.ymax - roi.ymin) / (ny - 1)
    xs = roi.xmin + dx * np.arange(nx)
    ys = roi.ymin + dy * np.arange(ny)
    X, Y = np.meshgrid(xs, ys)
    inside = ((X - center[0]) / rx) ** 2 + ((Y - center[1]) / ry) ** 2 <= 1.0
    return BinaryMask(nx, ny, (roi.xmin, roi.ymin), (dx, dy), inside)


# ---------------------------------------------------------------------------
# Fast marching
# ---------------------------------------------------------------------------

def fmm_signed_distance(mask: BinaryMask) -> SdfGrid:
    """First-order fast marching solution of |grad d| = 1 from the
    indicator interface, signed positive inside.

    Cells adjacent to a flag transition are initialized at half the grid
    spacing along the transition axis (the interface is taken midway
    between opposite-flag cell centers).
    """
    inside = mask.inside
    if inside.all() or not inside.any():
        raise DegenerateInputError("mask must contain both inside and outside cells")
    ny, nx = inside.shape
    dx, dy = mask.spacing
    dist = np.full((ny, nx), np.inf)

    trans_x = np.zeros_like(inside)
    trans_x[:, :-1] |= inside[:, :-1] != inside[:, 1:]
    trans_x[:, 1:] |= inside[:, :-1] != inside[:, 1:]
    trans_y = np.zeros_like(inside)
    trans_y[:-1, :] |= inside[:-1, :] != inside[1:, :]
    trans_y[1:, :] |= inside[:-1, :] != inside[1:, :]
    init = np.full((ny, nx), np.inf)
    init[trans_x] = 0.5 * dx
    init[trans_y] = np.minimum(init[trans_y], 0.5 * dy)

    accepted = np.zeros((ny, nx), dtype=bool)
    heap = []
    counter = 0  # heap ties broken by insertion order
    seeds = np.argwhere(np.isfinite(init))
    for iy, ix in seeds:
        dist[iy, ix] = init[iy, ix]
        heapq.heappush(heap, (init[iy, ix], counter, iy, ix))
        counter += 1

    def solve_quadratic(iy, ix):
        # one-sided upwind values per axis
        best = []
        for (dj, di, h) in (((0, 1), (0, -1), dx), ((1, 0), (-1, 0), dy)):
            cand = np.inf
            for oy, ox in (dj, di):
                jy, jx = iy + oy, ix + ox
                if 0 <= jy < ny and 0 <= jx < nx and accepted[jy, jx]:
                    cand = min(cand, dist[jy, jx])
            if np.isfinite(cand):
                best.append((cand, h))
        if not best:
            return np.inf
        if len(best) == 1:
            return best[0][0] + best[0][1]
        (a, ha), (b, hb) = best
        # solve ((d-a)/ha)^2 + ((d-b)/hb)^2 = 1
        ia, ib = 1.0 / (ha * ha), 1.0 / (hb * hb)
        q2 = ia + ib
        q1 = -2.0 * (a * ia + b * ib)
        q0 = a * a * ia + b * b * ib - 1.0
        disc = q1 * q1 - 4.0 * q2 * q0
        if disc < 0:
            return min(a + ha, b + hb)
        d = (-q1 + np.sqrt(disc)) / (2.0 * q2)
        if d < max(a, b):
            return min(a + ha, b + hb)
        return d

    while heap:
        d, _, iy, ix = heapq.heappop(heap)
        if accepted[iy, ix]:
            continue
        accepted[iy, ix] = True
        for oy, ox in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            jy, jx = iy + oy, ix + ox
            if not (0 <= jy < ny and 0 <= jx < nx) or accepted[jy, jx]:
                continue
            trial = solve_quadratic(jy, jx)
            if trial < dist[jy, jx]:
                dist[jy, jx] = trial
                heapq.heappush(heap, (trial, counter, jy, jx))
                counter += 1

    signed = np.where(inside, dist, -dist)
    return SdfGrid(nx, ny, mask.origin, mask.spacing, signed)


# ---------------------------------------------------------------------------
# Level-set point extraction and metrics
# ---------------------------------------------------------------------------

def marching_squares(grid: SdfGrid, level: float = 0.0) -> np.ndarray:
    """Linearly interpolated level crossings on all grid edges, as an
    unordered [K, 2] point set (no connectivity). Nodes lying exactly on
    the level are emitted once at the node."""
    v = grid.values - level
    xs, ys = grid.xs, grid.ys
    pts = []

    v1, v2 = v[:, :-1], v[:, 1:]
    cross = v1 * v2 < 0.0
    if np.any(cross):
        iy, ix = np.nonzero(cross)
        t = v1[iy, ix] / (v1[iy, ix] - v2[iy, ix])
        pts.append(np.column_stack([xs[ix] + t * grid.spacing[0], ys[iy]]))

    v1, v2 = v[:-1, :], v[1:, :]
    cross = v1 * v2 < 0.0
    if np.any(cross):
        iy, ix = np.nonzero(cross)
        t = v1[iy, ix] / (v1[iy, ix] - v2[iy, ix])
        pts.append(np.column_stack([xs[ix], ys[iy] + t * grid.spacing[1]]))

    on_node = v == 0.0
    if np.any(on_node):
        iy, ix = np.nonzero(on_node)
        pts.append(np.column_stack([xs[ix], ys[iy]]))

    if not pts:
        return np.empty((0, 2))
    return np.concatenate(pts, axis=0)


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric sum of squared nearest-neighbor distances, halved.
    Exact brute force; point sets here stay in the low thousands."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise DomainError("chamfer: point sets must be nonempty")

    def one_sided(p, q):
        total = 0.0
        for start in range(0, len(p), 2048):
            chunk = p[start : start + 2048]
            d2 = ((chunk[:, None, :] - q[None, :, :]) ** 2).sum(axis=2)
            total += float(d2.min(axis=1).sum())
        return total

    return 0.5 * (one_sided(a, b) + one_sided(b, a))


def relative_l2(predicted, reference) -> float:
    """||predicted - reference||_2 / ||reference||_2 over complex samples."""
    p = np.asarray(predicted).ravel()
    r = np.asarray(reference).ravel()
    if p.shape != r.shape or r.size == 0:
        raise DomainError("relative_l2: shapes must match and be nonempty")
    denom = float(np.linalg.norm(r))
    if denom == 0.0:
        raise DomainError("relative_l2: reference has zero norm")
    return float(np.linalg.norm(p - r)) / denom


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def save_grid(grid: SdfGrid, path) -> None:
    header = (
        f"sdfgrid v1 {grid.nx} {grid.ny} {grid.origin[0]!r} {grid.origin[1]!r} "
        f"{grid.spacing[0]!r} {grid.spacing[1]!r}"
    )
    body = " ".join(repr(float(v)) for v in grid.values.ravel())
    with open(path, "w") as fh:
        fh.write(header + "\n" + body + "\n")


def load_grid(path) -> SdfGrid:
    with open(path) as fh:
        lines = fh.read().split("\n")
    head = lines[0].split()
    if len(head) != 8 or head[0] != "sdfgrid" or head[1] != "v1":
        raise FormatError("bad header, expected 'sdfgrid v1 ...'", line=1)
    try:
        nx, ny = int(head[2]), int(head[3])
        x0, y0, dx, dy = (float(v) for v in head[4:8])
    except ValueError as exc:
        raise FormatError(f"bad header field: {exc}", line=1) from None
    try:
        vals = np.array([float(v) for v in " ".join(lines[1:]).split()])
    except ValueError as exc:
        raise FormatError(f"bad value: {exc}", line=2) from None
    if vals.size != nx * ny:
        raise FormatError(f"expected {nx * ny} values, got {vals.size}", line=2)
    return SdfGrid(nx, ny, (x0, y0), (dx, dy), vals.reshape(ny, nx))


def load_pgm_mask(path, roi: Rect = Rect(-1.0, 1.0, -1.0, 1.0),
                  threshold: int = 128) -> BinaryMask:
    """Read a P2/P5 PGM silhouette; pixels >= threshold are inside.

    PGM rows run top to bottom; row 0 is mapped to the top of the ROI so
    the image appears unflipped in (x, y) coordinates.
    """
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        # skip whitespace and comments
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) < 4:
        raise FormatError("truncated PGM header", line=1)
    magic = tokens[0]
    try:
        nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise FormatError("bad PGM header numbers", line=1) from None
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        if maxval > 255:
            raise FormatError("16-bit PGM not supported", line=1)
        raw = data[pos : pos + nx * ny]
        if len(raw) != nx * ny:
            raise FormatError("truncated PGM pixel data", line=2)
        pix = np.frombuffer(raw, dtype=np.uint8).astype(int)
    elif magic == b"P2":
        try:
            pix = np.array([int(v) for v in data[pos:].split()])
        except ValueError:
            raise FormatError("bad PGM pixel value", line=2) from None
        if pix.size != nx * ny:
            raise FormatError(f"expected {nx * ny} pixels, got {pix.size}", line=2)
    else:
        raise FormatError(f"unsupported PGM magic {magic!r}", line=1)

    if nx < 2 or ny < 2:
        raise FormatError(f"mask must be at least 2x2, got {nx}x{ny}", line=1)
    img = pix.reshape(ny, nx)[::-1, :]  # flip so iy increases with y
    dx = (roi.xmax - roi.xmin) / (nx - 1)
    dy = (roi.ymax - roi.ymin) / (ny - 1)
    return BinaryMask(nx, ny, (roi.xmin, roi.ymin), (dx, dy), img >= threshold)


def save_pgm_mask(mask: BinaryMask, path) -> None:
    img = np.where(mask.inside[::-1, :], 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{mask.nx} {mask.ny}\n255\n".encode())
        fh.write(img.tobytes())
