"""Inverse reconstruction stack: SDF pretraining, the measurement-misfit
loss with Eikonal/smoothness regularization over multiresolution ROI
samples, Adam, and the wave-number continuation loop with warm starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import difftape as dt
from . import ibim, sdfgeom, siren
from .errors import ConfigError, EmptyTubeError, TrainingError
from .scattering import IncidentWave, MeasurementSet
from .sdfgeom import Rect, SdfGrid


@dataclass(frozen=True)
class InverseConfig:
    roi: Rect = Rect(-1.1, 1.1, -1.1, 1.1)
    h: float = 2.2 / 48
    eps: float = 2.0 * 2.2 / 48
    lambda_eikonal: float = 3e-4
    lambda_smooth: float = 1e-7
    learning_rate: float = 5e-5
    iterations: int = 1500
    kappa_start: float = 1.5
    kappa_step: float = 0.5
    kappa_max: float = 7.0
    coarse_n: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.lambda_eikonal < 0 or self.lambda_smooth < 0:
            raise ConfigError("regularization weights must be >= 0")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not (self.kappa_start > 0 and self.kappa_step > 0):
            raise ConfigError("kappa schedule must be positive")

    def kappa_schedule(self) -> np.ndarray:
        n = int(np.floor((self.kappa_max - self.kappa_start) / self.kappa_step + 1e-9))
        return self.kappa_start + self.kappa_step * np.arange(n + 1)


@dataclass
class OptState:
    params: siren.SirenParams
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    log: list = field(default_factory=list)  # rows (iter, kappa, data, eik, smooth)

    @classmethod
    def fresh(cls, params: siren.SirenParams) -> "OptState":
        n = params.n_params
        return cls(params=params.copy(), m=np.zeros(n), v=np.zeros(n))


def adam_step(state: OptState, gradient: np.ndarray, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps_adam: float = 1e-8) -> OptState:
    """Standard bias-corrected Adam update on the flattened parameters."""
    if not np.all(np.isfinite(gradient)):
        raise TrainingError("non-finite gradient in adam_step")
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * gradient
    state.v = beta2 * state.v + (1.0 - beta2) * gradient * gradient
    mhat = state.m / (1.0 - beta1**state.step)
    vhat = state.v / (1.0 - beta2**state.step)
    theta = state.params.flat() - lr * mhat / (np.sqrt(vhat) + eps_adam)
    state.params = state.params.with_flat(theta)
    return state


def fit_sdf(target: SdfGrid, config: siren.SirenConfig, iterations: int,
            lr: float, seed: int, batch_size: int = 2048) -> siren.SirenParams:
    """Fit the network to the grid values by seeded-minibatch MSE plus a
    small Eikonal penalty (weight 0.01 on mean(| |grad| - 1 |^2))."""
    params = siren.init(config, seed)
    if iterations == 0:
        return params
    X, Y = np.meshgrid(target.xs, target.ys)
    px = X.ravel()
    py = Y.ravel()
    tv = target.values.ravel()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    state = OptState.fresh(params)
    tape = dt.Tape()
    n = px.size
    for it in range(iterations):
        idx = rng.integers(0, n, size=min(batch_size, n))
        tape.reset()
        bound = siren.BoundSiren(state.params, tape)
        value, gx, gy, _ = bound.eval_batch(px[idx], py[idx])
        resid = value - tv[idx]
        mse = dt.mean(resid * resid)
        gn = dt.sqrt(gx * gx + gy * gy)
        eik = dt.mean((gn - 1.0) * (gn - 1.0))
        loss_var = mse + 0.01 * eik
        if not np.isfinite(dt.value_of(loss_var)):
            raise TrainingError("fit_sdf loss diverged", iteration=it)
        grad = dt.backward(loss_var)
        # cosine decay: the constant-lr minibatch noise floor otherwise
        # dominates the final fit error
        lr_t = lr * 0.5 * (1.0 + np.cos(np.pi * it / iterations))
        state = adam_step(state, bound.gradient_flat(grad), lr_t)
    return state.params


def roi_samples(params: siren.SirenParams, config: InverseConfig) -> np.ndarray:
    """Multiresolution ROI sample points: a fixed coarse uniform grid plus
    all current tubular band points (the majority, once the band is finer
    than the coarse grid)."""
    coarse = _coarse_points(config)
    src = ibim.NeuralSdf(params)
    try:
        tq = ibim.build_tubular(src, config.roi, config.h, config.eps)
        tube = np.column_stack([tq.x, tq.y])
    except EmptyTubeError:
        tube = np.empty((0, 2))
    return np.concatenate([coarse, tube], axis=0)


def _coarse_points(config: InverseConfig) -> np.ndarray:
    n = config.coarse_n
    xs = np.linspace(config.roi.xmin, config.roi.xmax, n)
    ys = np.linspace(config.roi.ymin, config.roi.ymax, n)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


@dataclass
class LossParts:
    data: float
    eikonal: float
    smooth: float

    @property
    def total(self) -> float:
        return self.data + self.eikonal + self.smooth


def _grouped_measurements(meas_k: MeasurementSet):
    """Reshape the flat records into sensors [M, 2] and values [M, K]."""
    dir_ids = np.unique(meas_k.dir_idx)
    first = meas_k.dir_idx == dir_ids[0]
    sensors = meas_k.sensors[first]
    values = np.empty((len(sensors), len(dir_ids)), dtype=complex)
    directions = []
    for j, di in enumerate(dir_ids):
        sel = meas_k.dir_idx == di
        if np.count_nonzero(sel) != len(sensors):
            raise ConfigError("measurement records are not a complete grid")
        values[:, j] = meas_k.values[sel]
        directions.append(tuple(meas_k.directions[sel][0]))
    return sensors, directions, values


def loss(params: siren.SirenParams, meas_k: MeasurementSet,
         config: InverseConfig, tape: dt.Tape):
    """Loss at one wave number: mean squared measurement misfit over all
    records at this kappa, plus Eikonal and smoothness sums over the ROI
    samples. Returns (loss Var, LossParts, BoundSiren, TubularQuadrature).
    """
    if len(meas_k) == 0:
        raise ConfigError("empty measurement selection")
    kappa = float(meas_k.kappas[0])
    sensors, directions, values = _grouped_measurements(meas_k)
    incidents = [IncidentWave(kappa, d) for d in directions]

    bound = siren.BoundSiren(params, tape)
    neural = ibim.NeuralSdf(params)
    neural.bound = bound  # tape-recorded evaluation through one leaf set
    tq = ibim.build_tubular(neural, config.roi, config.h, config.eps)
    a_re, a_im = ibim.assemble_system(tq, kappa)
    rhs_re, rhs_im = ibim.assemble_rhs(tq, incidents)
    density = ibim.solve_density(a_re, a_im, rhs_re, rhs_im, kappa)
    u_re, u_im = ibim.eval_scattered(tq, density, kappa, sensors)

    d_re = u_re - values.real
    d_im = u_im - values.imag
    data = dt.total(d_re * d_re + d_im * d_im) / float(values.size)

    coarse = _coarse_points(config)
    _, cgx, cgy, clap = bound.eval_batch(coarse[:, 0], coarse[:, 1])
    eik_terms = []
    smooth_terms = []
    for gx, gy, lap in ((cgx, cgy, clap), (tq.grad_x, tq.grad_y, tq.lap)):
        gn = dt.sqrt(gx * gx + gy * gy)
        eik_terms.append(dt.total((gn - 1.0) * (gn - 1.0)))
        smooth_terms.append(dt.total(lap * lap))
    eik = eik_terms[0] + eik_terms[1]
    smooth = smooth_terms[0] + smooth_terms[1]

    total = (
        data
        + config.lambda_eikonal * eik
        + config.lambda_smooth * smooth
    )
    parts = LossParts(
        data=float(dt.value_of(data)),
        eikonal=config.lambda_eikonal * float(dt.value_of(eik)),
        smooth=config.lambda_smooth * float(dt.value_of(smooth)),
    )
    return total, parts, bound, tq


@dataclass
class StageSnapshot:
    kappa: float
    params: siren.SirenParams
    sdf: SdfGrid
    chamfer: float  # nan when no ground truth was supplied


def eval_params_grid(params: siren.SirenParams, roi: Rect, n: int = 256) -> SdfGrid:
    grid = SdfGrid.from_roi(roi, n, n)
    X, Y = np.meshgrid(grid.xs, grid.ys)
    value, _, _, _ = siren.eval_batch(params, X.ravel(), Y.ravel())
    grid.values = value.reshape(n, n)
    return grid


_GUARD_RANGE = (0.25, 4.0)
_GUARD_COOLDOWN = 100


def invert(config: InverseConfig, initial: siren.SirenParams,
           measurements: MeasurementSet, gt_points=None,
           progress=None):
    """Wave-number continuation: run `config.iterations` Adam steps per
    stage, warm-starting each stage from the previous stage's final
    parameters. Returns (OptState, [StageSnapshot]).

    A divergence guard rejects any iteration whose band gradient norms
    leave [0.25, 4] and halves the learning rate for the next 100
    iterations.
    """
    state = OptState.fresh(initial)
    snapshots = []
    tape = dt.Tape()
    guard_until = -1
    global_it = 0
    for kappa in config.kappa_schedule():
        meas_k = measurements.at_kappa(float(kappa))
        for it in range(config.iterations):
            tape.reset()
            try:
                total, parts, bound, tq = loss(state.params, meas_k, config, tape)
            except EmptyTubeError as exc:
                raise TrainingError(
                    f"stage kappa={kappa}: shape collapsed ({exc})",
                    iteration=it,
                ) from exc
            if not np.isfinite(dt.value_of(total)):
                raise TrainingError(
                    f"stage kappa={kappa}: loss is not finite", iteration=it
                )
            state.log.append(
                (global_it, float(kappa), parts.data, parts.eikonal, parts.smooth)
            )
            gn = tq.grad_norm_values()
            if float(gn.min()) < _GUARD_RANGE[0] or float(gn.max()) > _GUARD_RANGE[1]:
                guard_until = global_it + _GUARD_COOLDOWN
                global_it += 1
                continue  # rejected iteration: no parameter update
            lr = config.learning_rate * (0.5 if global_it <= guard_until else 1.0)
            grad = dt.backward(total)
            state = adam_step(state, bound.gradient_flat(grad), lr)
            global_it += 1
            if progress is not None:
                progress(global_it, float(kappa), parts)
        sdf = eval_params_grid(state.params, config.roi, 256)
        ch = np.nan
        if gt_points is not None:
            rec = sdfgeom.marching_squares(sdf, 0.0)
            if len(rec):
                ch = sdfgeom.chamfer(gt_points, rec)
        snapshots.append(
            StageSnapshot(float(kappa), state.params.copy(), sdf, ch)
        )
    return state, snapshots


def write_loss_log(log_rows, path) -> None:
    """CSV loss log: iter,kappa,data,eikonal,smooth,total."""
    with open(path, "w") as fh:
        fh.write("iter,kappa,data,eikonal,smooth,total\n")
        for it, kappa, data, eik, smooth in log_rows:
            kappa, data, eik, smooth = (float(v) for v in (kappa, data, eik, smooth))
            fh.write(
                f"{it},{kappa!r},{data!r},{eik!r},{smooth!r},"
                f"{data + eik + smooth!r}\n"
            )
