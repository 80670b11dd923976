"""Sine-activated coordinate MLP with analytic spatial derivatives.

One forward pass produces the value, spatial gradient, and spatial
Laplacian of the network by propagating, per layer, the pre-activation
Jacobian and the diagonal of the second-derivative tensor. Everything is
recorded on a difftape, so parameter gradients of any of the three outputs
come from a single reverse sweep; no nested differentiation is needed.

Sign convention downstream: the network value is a signed distance that is
positive inside the obstacle and negative outside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import difftape as dt
from .errors import FormatError

IN_FEATURES = 2


@dataclass(frozen=True)
class SirenConfig:
    hidden_layers: int = 2  # number of hidden-to-hidden sine layers
    hidden_features: int = 128
    omega0: float = 30.0

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_features < 1:
            raise ValueError("hidden_layers and hidden_features must be >= 1")
        if not self.omega0 > 0:
            raise ValueError("omega0 must be > 0")

    @property
    def n_weight_layers(self) -> int:
        # first sine layer + hidden sine layers + linear output
        return self.hidden_layers + 2

    def layer_shapes(self):
        f = self.hidden_features
        shapes = [(IN_FEATURES, f)]
        shapes += [(f, f)] * self.hidden_layers
        shapes.append((f, 1))
        return shapes


@dataclass
class SirenParams:
    """All weights and biases; weights[l] has shape (fan_in, fan_out)."""

    config: SirenConfig
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def with_flat(self, vec: np.ndarray) -> "SirenParams":
        out = SirenParams(self.config)
        pos = 0
        for w, b in zip(self.weights, self.biases):
            out.weights.append(vec[pos : pos + w.size].reshape(w.shape).copy())
            pos += w.size
            out.biases.append(vec[pos : pos + b.size].reshape(b.shape).copy())
            pos += b.size
        if pos != vec.size:
            raise ValueError("flat vector length does not match parameter count")
        return out

    def copy(self) -> "SirenParams":
        return self.with_flat(self.flat())


def init(config: SirenConfig, seed: int) -> SirenParams:
    """Scaled uniform initialization: first layer U(+-1/fan_in), later
    layers U(+-sqrt(6/fan_in)/omega0). Deterministic in the seed."""
    rng = np.random.default_rng(seed)
    params = SirenParams(config)
    for l, (fan_in, fan_out) in enumerate(config.layer_shapes()):
        bound = 1.0 / fan_in if l == 0 else np.sqrt(6.0 / fan_in) / config.omega0
        params.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.biases.append(rng.uniform(-bound, bound, size=fan_out))
    return params


class BoundSiren:
    """Network parameters registered as leaves on one tape.

    Evaluation through a bound instance is differentiable w.r.t. the
    parameters (and w.r.t. the input coordinates when those are Vars).
    """

    def __init__(self, params: SirenParams, tape: dt.Tape):
        self.params = params
        self.tape = tape
        self.weights = [tape.var(w) for w in params.weights]
        self.biases = [tape.var(b) for b in params.biases]

    def leaves(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def gradient_flat(self, grad: dt.Gradient) -> np.ndarray:
        return np.concatenate([grad.wrt(v).ravel() for v in self.leaves()])

    def eval_batch(self, px, py):
        return _forward(self.weights, self.biases, self.params.config, px, py)


def eval_batch(params: SirenParams, px, py):
    """Plain-numpy batched evaluation: (value, gx, gy, laplacian)."""
    return _forward(params.weights, params.biases, params.config, px, py)


@dataclass
class SdfEval:
    value: float
    gradient: tuple
    laplacian: float


def evaluate(params: SirenParams, x) -> SdfEval:
    """Single-point convenience wrapper around eval_batch."""
    px = np.asarray([x[0]], dtype=float)
    py = np.asarray([x[1]], dtype=float)
    v, gx, gy, lap = eval_batch(params, px, py)
    return SdfEval(float(v[0]), (float(gx[0]), float(gy[0])), float(lap[0]))


def _forward(weights, biases, config, px, py):
    """Value / Jacobian / diagonal-Hessian recursion over the sine layers.

    px, py: [N] coordinates (arrays or Vars). Returns [N] outputs.
    Per sine layer with pre-activation a = z W + b:
        z'  = sin(a)
        J'  = cos(a) * (J W)
        D'  = -sin(a) * (J W)^2 + cos(a) * (D W)
    where J, D hold d/dx_i and d^2/dx_i^2 of the layer input, one
    coordinate at a time (inputs are 2-D, so two J/D channels).
    """
    w0 = config.omega0
    n = value_of_len(px)
    X = dt.stack_cols(px, py)

    a = dt.matmul(X, weights[0]) + biases[0]
    a = w0 * a
    sin_a, cos_a = dt.sin(a), dt.cos(a)
    z = sin_a
    # first-layer input Jacobian is the identity in (x, y)
    jax = w0 * dt.take(weights[0], 0)  # [f]
    jay = w0 * dt.take(weights[0], 1)
    jx = cos_a * jax
    jy = cos_a * jay
    dx = -sin_a * jax * jax
    dy = -sin_a * jay * jay

    for l in range(1, 1 + config.hidden_layers):
        w, b = weights[l], biases[l]
        a = dt.matmul(z, w) + b
        sin_a, cos_a = dt.sin(a), dt.cos(a)
        jax = dt.matmul(jx, w)
        jay = dt.matmul(jy, w)
        dax = dt.matmul(dx, w)
        day = dt.matmul(dy, w)
        z = sin_a
        jx = cos_a * jax
        jy = cos_a * jay
        dx = -sin_a * jax * jax + cos_a * dax
        dy = -sin_a * jay * jay + cos_a * day

    wo, bo = weights[-1], biases[-1]
    value = dt.reshape(dt.matmul(z, wo), (n,)) + bo
    gx = dt.reshape(dt.matmul(jx, wo), (n,))
    gy = dt.reshape(dt.matmul(jy, wo), (n,))
    lap = dt.reshape(dt.matmul(dx, wo) + dt.matmul(dy, wo), (n,))
    return value, gx, gy, lap


def value_of_len(px):
    return int(dt.value_of(px).shape[0])


def values_only(params: SirenParams, px, py) -> np.ndarray:
    """Plain-numpy network values without derivative channels. Bitwise
    identical to eval_batch(...)[0]; used for cheap band selection."""
    w0 = params.config.omega0
    X = np.column_stack([np.asarray(px, dtype=float), np.asarray(py, dtype=float)])
    z = np.sin(w0 * (X @ params.weights[0] + params.biases[0]))
    for l in range(1, 1 + params.config.hidden_layers):
        z = np.sin(z @ params.weights[l] + params.biases[l])
    return (z @ params.weights[-1]).reshape(-1) + params.biases[-1]


# ---------------------------------------------------------------------------
# Parameter file format:  header `siren v1 <in> <hidden_layers> <features>
# <omega0>`, then one line of weights (row-major) and one line of biases per
# weight layer.  Values are printed with shortest-round-trip repr, so a
# save/load round trip is bit-exact.
# ---------------------------------------------------------------------------

def save(params: SirenParams, path) -> None:
    cfg = params.config
    lines = [
        f"siren v1 {IN_FEATURES} {cfg.hidden_layers} "
        f"{cfg.hidden_features} {cfg.omega0!r}"
    ]
    for w, b in zip(params.weights, params.biases):
        lines.append(" ".join(repr(float(v)) for v in w.ravel()))
        lines.append(" ".join(repr(float(v)) for v in b.ravel()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load(path) -> SirenParams:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty parameter file", line=1)
    head = lines[0].split()
    if len(head) != 6 or head[0] != "siren" or head[1] != "v1":
        raise FormatError("bad header, expected 'siren v1 ...'", line=1)
    try:
        in_f, hidden_layers, features = int(head[2]), int(head[3]), int(head[4])
        omega0 = float(head[5])
    except ValueError as exc:
        raise FormatError(f"bad header field: {exc}", line=1) from None
    if in_f != IN_FEATURES:
        raise FormatError(f"unsupported input dimension {in_f}", line=1)
    cfg = SirenConfig(hidden_layers=hidden_layers, hidden_features=features,
                      omega0=omega0)
    shapes = cfg.layer_shapes()
    expected = 1 + 2 * len(shapes)
    if len(lines) < expected:
        raise FormatError(
            f"expected {expected} lines for this layer count", line=len(lines)
        )
    params = SirenParams(cfg)
    ln = 1
    for fan_in, fan_out in shapes:
        for kind, size, shape in (
            ("weights", fan_in * fan_out, (fan_in, fan_out)),
            ("biases", fan_out, (fan_out,)),
        ):
            ln += 1
            try:
                vals = np.array([float(v) for v in lines[ln - 1].split()])
            except ValueError as exc:
                raise FormatError(f"bad float: {exc}", line=ln) from None
            if vals.size != size:
                raise FormatError(
                    f"{kind}: expected {size} values, got {vals.size}", line=ln
                )
            if kind == "weights":
                params.weights.append(vals.reshape(shape))
            else:
                params.biases.append(vals)
    return params
