"""Incident plane waves, sensor geometries, synthetic measurements, and
the additive white Gaussian noise model.

Measurements store the scattered field; the incident field is analytic at
the sensors, so losses compare scattered fields directly. Ground-truth
synthesis always runs the gridded-SDF forward model, never the neural one,
so inversion and data generation use structurally different
discretizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import difftape as dt
from . import ibim
from .errors import DomainError, FormatError, GeometryError
from .sdfgeom import Rect, SdfGrid


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave exp(i kappa x . d) with unit direction d."""

    kappa: float
    direction: tuple

    def __post_init__(self):
        if not self.kappa > 0:
            raise DomainError("IncidentWave: kappa must be > 0")
        d = np.asarray(self.direction, dtype=float)
        if abs(float(np.hypot(d[0], d[1])) - 1.0) > 1e-12:
            raise DomainError("IncidentWave: direction must be a unit vector")

    def field(self, px, py):
        """(re, im) of exp(i kappa x . d); unit modulus everywhere."""
        phase = self.kappa * (px * self.direction[0] + py * self.direction[1])
        return dt.cos(phase), dt.sin(phase)

    def normal_derivative(self, px, py, nx, ny):
        """(re, im) of i kappa (d . n) exp(i kappa x . d)."""
        dn = self.direction[0] * nx + self.direction[1] * ny
        f_re, f_im = self.field(px, py)
        scale = self.kappa * dn
        return -scale * f_im, scale * f_re


def plane_wave(w: IncidentWave, x):
    re, im = w.field(np.asarray([x[0]], dtype=float), np.asarray([x[1]], dtype=float))
    return complex(re[0] + 1j * im[0])


def plane_wave_dn(w: IncidentWave, x, n):
    nv = np.asarray(n, dtype=float)
    if abs(float(np.hypot(nv[0], nv[1])) - 1.0) > 1e-12:
        raise DomainError("plane_wave_dn: n must be a unit vector")
    re, im = w.normal_derivative(
        np.asarray([x[0]], dtype=float), np.asarray([x[1]], dtype=float),
        nv[0], nv[1],
    )
    return complex(re[0] + 1j * im[0])


def uniform_directions(n: int) -> list:
    """n unit vectors at uniformly spaced angles starting at 0 degrees."""
    angles = 2.0 * np.pi * np.arange(n) / n
    return [(float(np.cos(a)), float(np.sin(a))) for a in angles]


@dataclass(frozen=True)
class SensorArray:
    positions: np.ndarray  # [M, 2]
    descriptor: str

    def __post_init__(self):
        object.__setattr__(
            self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 2)
        )


def make_sensors(mode: str, m: int, radius: float, arcs=None) -> SensorArray:
    """mode 'full': m equally spaced angles starting at 0 degrees.
    mode 'arcs': m sensors split across the arc list proportionally to arc
    length, equally spaced within each arc with endpoints included."""
    if m < 1 or not radius > 0:
        raise GeometryError("make_sensors: need m >= 1 and radius > 0")
    if mode == "full":
        angles = 2.0 * np.pi * np.arange(m) / m
        desc = f"full:{m}:{radius!r}"
    elif mode == "arcs":
        if not arcs:
            raise GeometryError("make_sensors: arcs mode needs an arc list")
        spans = []
        for a, b in arcs:
            if not b > a:
                raise GeometryError(f"make_sensors: empty arc [{a}, {b}]")
            spans.append((float(a), float(b)))
        for i, (a1, b1) in enumerate(spans):
            for a2, b2 in spans[i + 1 :]:
                if a1 < b2 and a2 < b1:
                    raise GeometryError("make_sensors: overlapping arcs")
        lengths = np.array([b - a for a, b in spans])
        counts = np.floor(m * lengths / lengths.sum()).astype(int)
        frac = m * lengths / lengths.sum() - counts
        for i in np.argsort(-frac)[: m - counts.sum()]:
            counts[i] += 1
        angles = np.concatenate(
            [np.linspace(a, b, c) * np.pi / 180.0
             for (a, b), c in zip(spans, counts) if c > 0]
        )
        desc = "arcs:" + ";".join(f"{a},{b}" for a, b in spans) + f":{m}:{radius!r}"
    else:
        raise GeometryError(f"make_sensors: unknown mode {mode!r}")
    pos = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    if len(np.unique(pos.round(12), axis=0)) != len(pos):
        raise GeometryError("make_sensors: duplicate sensor positions")
    return SensorArray(pos, desc)


@dataclass
class MeasurementSet:
    """Flat record table over the (kappa, direction, sensor) grid."""

    kappas: np.ndarray  # [R]
    dir_idx: np.ndarray  # [R] ints
    directions: np.ndarray  # [R, 2]
    sensors: np.ndarray  # [R, 2]
    values: np.ndarray  # [R] complex scattered field
    snr_db: float = np.inf
    seed: int = 0

    def __len__(self):
        return len(self.values)

    def at_kappa(self, kappa: float, tol: float = 1e-9) -> "MeasurementSet":
        sel = np.abs(self.kappas - kappa) <= tol
        if not np.any(sel):
            raise DomainError(f"no measurement records at kappa = {kappa}")
        return MeasurementSet(
            self.kappas[sel], self.dir_idx[sel], self.directions[sel],
            self.sensors[sel], self.values[sel], self.snr_db, self.seed,
        )

    def unique_kappas(self) -> np.ndarray:
        return np.unique(self.kappas)


def synthesize(gt_sdf: SdfGrid, kappas, n_directions: int,
               sensors: SensorArray, snr_db: float, seed: int,
               roi: Rect, h: float, eps: float) -> MeasurementSet:
    """Run the gridded forward model for every (kappa, direction) pair,
    record the scattered field at the sensors, then add noise."""
    src = ibim.GridSdf(gt_sdf)
    dirs = uniform_directions(n_directions)
    rows = {k: [] for k in ("kap", "di", "dx", "dy", "sx", "sy", "u")}
    for kappa in kappas:
        incs = [IncidentWave(kappa, d) for d in dirs]
        u_re, u_im, _ = ibim.direct_solve(
            src, kappa, incs, sensors.positions, roi, h, eps
        )
        u = dt.value_of(u_re) + 1j * dt.value_of(u_im)
        for di, d in enumerate(dirs):
            m = len(sensors.positions)
            rows["kap"].append(np.full(m, kappa))
            rows["di"].append(np.full(m, di, dtype=int))
            rows["dx"].append(np.full(m, d[0]))
            rows["dy"].append(np.full(m, d[1]))
            rows["sx"].append(sensors.positions[:, 0])
            rows["sy"].append(sensors.positions[:, 1])
            rows["u"].append(u[:, di])
    ms = MeasurementSet(
        kappas=np.concatenate(rows["kap"]),
        dir_idx=np.concatenate(rows["di"]),
        directions=np.column_stack(
            [np.concatenate(rows["dx"]), np.concatenate(rows["dy"])]
        ),
        sensors=np.column_stack(
            [np.concatenate(rows["sx"]), np.concatenate(rows["sy"])]
        ),
        values=np.concatenate(rows["u"]),
        snr_db=np.inf,
        seed=seed,
    )
    if np.isfinite(snr_db):
        ms = add_noise(ms, snr_db, seed)
    return ms


def add_noise(m: MeasurementSet, snr_db: float, seed: int) -> MeasurementSet:
    """Complex AWGN per (kappa, direction) block: noise power is the block's
    mean |u|^2 scaled by 10^(-snr/10), split evenly over re/im. The RNG
    stream is derived from (seed, kappa index, direction index), so results
    do not depend on evaluation order."""
    if not np.isfinite(snr_db):
        raise DomainError("add_noise: snr_db must be finite")
    if len(m) == 0:
        raise DomainError("add_noise: empty measurement set")
    values = m.values.copy()
    uk = np.unique(m.kappas)
    for ki, kappa in enumerate(uk):
        for di in np.unique(m.dir_idx):
            sel = (m.kappas == kappa) & (m.dir_idx == di)
            if not np.any(sel):
                continue
            block = values[sel]
            power = float(np.mean(np.abs(block) ** 2))
            sigma2 = power * 10.0 ** (-snr_db / 10.0)
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(ki, int(di)))
            )
            noise = rng.normal(scale=np.sqrt(sigma2 / 2.0), size=(block.size, 2))
            values[sel] = block + noise[:, 0] + 1j * noise[:, 1]
    return MeasurementSet(
        m.kappas, m.dir_idx, m.directions, m.sensors, values, snr_db, seed
    )


# ---------------------------------------------------------------------------
# Measurement file: `meas v1 snr_db seed` header, then one line per record:
# kappa dir_idx dx dy sx sy re im (repr floats; round trip is bit-exact).
# ---------------------------------------------------------------------------

def save_measurements(m: MeasurementSet, path) -> None:
    lines = [f"meas v1 {float(m.snr_db)!r} {m.seed}"]
    for i in range(len(m)):
        lines.append(
            f"{float(m.kappas[i])!r} {int(m.dir_idx[i])} "
            f"{float(m.directions[i, 0])!r} {float(m.directions[i, 1])!r} "
            f"{float(m.sensors[i, 0])!r} {float(m.sensors[i, 1])!r} "
            f"{float(m.values[i].real)!r} {float(m.values[i].imag)!r}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_measurements(path) -> MeasurementSet:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty measurement file", line=1)
    head = lines[0].split()
    if len(head) != 4 or head[0] != "meas" or head[1] != "v1":
        raise FormatError("bad header, expected 'meas v1 snr seed'", line=1)
    try:
        snr_db = float(head[2])
        seed = int(head[3])
    except ValueError as exc:
        raise FormatError(f"bad header field: {exc}", line=1) from None
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 8:
            raise FormatError(f"expected 8 fields, got {len(parts)}", line=ln)
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise FormatError(f"bad float: {exc}", line=ln) from None
    if not rows:
        raise FormatError("measurement file has no records", line=2)
    arr = np.array(rows)
    return MeasurementSet(
        kappas=arr[:, 0],
        dir_idx=arr[:, 1].astype(int),
        directions=arr[:, 2:4],
        sensors=arr[:, 4:6],
        values=arr[:, 6] + 1j * arr[:, 7],
        snr_db=snr_db,
        seed=seed,
    )
