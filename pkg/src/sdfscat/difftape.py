"""Reverse-mode automatic differentiation on an append-only tape.

Variables hold real numpy arrays (a scalar is a 0-d array), so one tape
node records one array operation; the reverse sweep visits each node once
and costs O(tape length). Complex quantities are carried as explicit
real/imag pairs, which keeps reverse mode exact for the real-valued losses
used downstream. The dense complex linear solve is a single tape node with
the implicit-function adjoint (b_bar = A^-H x_bar, A_bar = -b_bar x^H),
reusing the forward LU factorization.

The module-level math helpers (sin, cos, take, matmul, ...) dispatch on
their argument type: Var inputs are recorded on the tape, plain
arrays/floats fall through to numpy. Code written against these helpers
therefore runs unchanged in differentiable and plain-numeric contexts.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import specfun
from .errors import NumericError, SolverError


class _Node:
    __slots__ = ("name", "parents", "vjps")

    def __init__(self, name, parents, vjps):
        self.name = name
        self.parents = parents  # tuple of parent node indices
        self.vjps = vjps  # tuple of callables: out_adjoint -> parent adjoint


class Tape:
    """Recording context. Append-only; reset() reuses the instance."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._values: list[np.ndarray] = []

    def __len__(self):
        return len(self._nodes)

    def reset(self):
        self._nodes.clear()
        self._values.clear()

    def var(self, value) -> "Var":
        """Create a leaf variable (an optimization input)."""
        return self._emit("leaf", np.asarray(value, dtype=float), (), ())

    def _emit(self, name, value, parents, vjps) -> "Var":
        idx = len(self._nodes)
        self._nodes.append(_Node(name, parents, vjps))
        self._values.append(value)
        return Var(self, idx)


class Var:
    """Handle to one tape node; combine only with Vars from the same tape."""

    __slots__ = ("tape", "index")

    # Make `ndarray <op> Var` defer to our reflected operators instead of
    # numpy broadcasting over the Var object.
    __array_ufunc__ = None

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape._values[self.index]

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(#{self.index}, value={self.value!r})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return powc(self, p)

    def __getitem__(self, key):
        return take(self, key)


def value_of(x):
    """The numpy value behind x, whether Var, array, or scalar."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def is_var(*xs):
    return any(isinstance(x, Var) for x in xs)


def _tape_of(*xs) -> Tape:
    tapes = {x.tape for x in xs if isinstance(x, Var)}
    if len(tapes) != 1:
        raise NumericError("operands come from different tapes")
    return tapes.pop()


def _unbroadcast(g, shape):
    """Reduce gradient g (shape of the op output) back to a parent's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _record_elementwise(name, out, operands, partials):
    """Record an elementwise op. partials[i] is the local derivative array
    w.r.t. operand i (already evaluated); constants get no vjp."""
    tape = _tape_of(*operands)
    parents = []
    vjps = []
    for op, part in zip(operands, partials):
        if isinstance(op, Var):
            parents.append(op.index)
            shape = op.value.shape
            vjps.append(lambda g, p=part, s=shape: _unbroadcast(g * p, s))
    return tape._emit(name, out, tuple(parents), tuple(vjps))


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    if not is_var(a, b):
        return np.add(value_of(a), value_of(b))
    va, vb = value_of(a), value_of(b)
    return _record_elementwise("add", va + vb, (a, b), (1.0, 1.0))


def sub(a, b):
    if not is_var(a, b):
        return np.subtract(value_of(a), value_of(b))
    va, vb = value_of(a), value_of(b)
    return _record_elementwise("sub", va - vb, (a, b), (1.0, -1.0))


def mul(a, b):
    if not is_var(a, b):
        return np.multiply(value_of(a), value_of(b))
    va, vb = value_of(a), value_of(b)
    return _record_elementwise("mul", va * vb, (a, b), (vb, va))


def div(a, b):
    va, vb = value_of(a), value_of(b)
    if np.any(vb == 0.0):
        raise NumericError("div: division by zero")
    if not is_var(a, b):
        return va / vb
    inv = 1.0 / vb
    return _record_elementwise("div", va * inv, (a, b), (inv, -va * inv * inv))


def neg(a):
    if not is_var(a):
        return -value_of(a)
    return _record_elementwise("neg", -a.value, (a,), (-1.0,))


def powc(a, p):
    """a ** p for a constant real exponent p."""
    va = value_of(a)
    if not is_var(a):
        return va**p
    if p != int(p) and np.any(va < 0.0):
        raise NumericError("pow: fractional power of negative base")
    return _record_elementwise("pow", va**p, (a,), (p * va ** (p - 1),))


def sin(a):
    if not is_var(a):
        return np.sin(value_of(a))
    return _record_elementwise("sin", np.sin(a.value), (a,), (np.cos(a.value),))


def cos(a):
    if not is_var(a):
        return np.cos(value_of(a))
    return _record_elementwise("cos", np.cos(a.value), (a,), (-np.sin(a.value),))


def exp(a):
    if not is_var(a):
        return np.exp(value_of(a))
    out = np.exp(a.value)
    return _record_elementwise("exp", out, (a,), (out,))


def log(a):
    va = value_of(a)
    if np.any(va <= 0.0):
        raise NumericError("log: non-positive argument")
    if not is_var(a):
        return np.log(va)
    return _record_elementwise("log", np.log(va), (a,), (1.0 / va,))


def sqrt(a):
    va = value_of(a)
    if np.any(va < 0.0):
        raise NumericError("sqrt: negative argument")
    if not is_var(a):
        return np.sqrt(va)
    if np.any(va == 0.0):
        raise NumericError("sqrt: derivative singular at 0")
    out = np.sqrt(va)
    return _record_elementwise("sqrt", out, (a,), (0.5 / out,))


def abs2(re, im):
    """Squared complex modulus re^2 + im^2."""
    return add(mul(re, re), mul(im, im))


# Bessel functions as differentiable primitives; derivative identities
# J0' = -J1, Y0' = -Y1, J1' = J0 - J1/x, Y1' = Y0 - Y1/x.

def bessel_j0(a):
    va = value_of(a)
    if not is_var(a):
        return specfun.bessel_j0(va)
    out = specfun.bessel_j0(va)
    return _record_elementwise("j0", out, (a,), (-specfun.bessel_j1(va),))


def bessel_y0(a):
    va = value_of(a)
    if not is_var(a):
        return specfun.bessel_y0(va)
    out = specfun.bessel_y0(va)
    return _record_elementwise("y0", out, (a,), (-specfun.bessel_y1(va),))


def bessel_j1(a):
    va = value_of(a)
    if not is_var(a):
        return specfun.bessel_j1(va)
    out = specfun.bessel_j1(va)
    d = specfun.bessel_j0(va) - out / va
    return _record_elementwise("j1", out, (a,), (d,))


def bessel_y1(a):
    va = value_of(a)
    if not is_var(a):
        return specfun.bessel_y1(va)
    out = specfun.bessel_y1(va)
    d = specfun.bessel_y0(va) - out / va
    return _record_elementwise("y1", out, (a,), (d,))


def bessel_all(a):
    """(j0, y0, j1, y1) from one shared evaluation; the four output nodes
    reuse the same value arrays for their derivatives, so the whole family
    costs a single series pass instead of eight."""
    va = value_of(a)
    j0v, y0v, j1v, y1v = specfun.bessel_all(va)
    if not is_var(a):
        return j0v, y0v, j1v, y1v
    inv = 1.0 / va
    j0 = _record_elementwise("j0", j0v, (a,), (-j1v,))
    y0 = _record_elementwise("y0", y0v, (a,), (-y1v,))
    j1 = _record_elementwise("j1", j1v, (a,), (j0v - j1v * inv,))
    y1 = _record_elementwise("y1", y1v, (a,), (y0v - y1v * inv,))
    return j0, y0, j1, y1


# ---------------------------------------------------------------------------
# Structural ops
# ---------------------------------------------------------------------------

def reshape(a, shape):
    if not is_var(a):
        return np.reshape(value_of(a), shape)
    old = a.value.shape
    out = a.value.reshape(shape)
    return a.tape._emit(
        "reshape", out, (a.index,), (lambda g: g.reshape(old),)
    )


def take(a, key):
    """a[key] with a constant index/mask (selection is not differentiated)."""
    if not is_var(a):
        return value_of(a)[key]
    out = a.value[key]
    shape = a.value.shape

    def vjp(g):
        acc = np.zeros(shape)
        np.add.at(acc, key, g)
        return acc

    return a.tape._emit("take", out, (a.index,), (vjp,))


def where(mask, a, b):
    """Select with a constant boolean mask (mask is not differentiated)."""
    mask = np.asarray(mask, dtype=bool)
    va, vb = value_of(a), value_of(b)
    if not is_var(a, b):
        return np.where(mask, va, vb)
    out = np.where(mask, va, vb)
    operands, partials = (a, b), (mask.astype(float), (~mask).astype(float))
    return _record_elementwise("where", out, operands, partials)


def stack_cols(a, b):
    """Column-stack two [N] operands into [N, 2]."""
    va, vb = value_of(a), value_of(b)
    if not is_var(a, b):
        return np.column_stack([va, vb])
    out = np.column_stack([va, vb])
    tape = _tape_of(a, b)
    parents, vjps = [], []
    for i, op in enumerate((a, b)):
        if isinstance(op, Var):
            parents.append(op.index)
            vjps.append(lambda g, col=i: g[:, col])
    return tape._emit("stack_cols", out, tuple(parents), tuple(vjps))


def matmul(a, b):
    va, vb = value_of(a), value_of(b)
    if not is_var(a, b):
        return va @ vb
    out = va @ vb
    tape = _tape_of(a, b)
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a.index)
        vjps.append(lambda g: g @ vb.T)
    if isinstance(b, Var):
        parents.append(b.index)
        vjps.append(lambda g: va.T @ g)
    return tape._emit("matmul", out, tuple(parents), tuple(vjps))


def total(a, axis=None):
    """Sum of entries (optionally along one axis)."""
    if not is_var(a):
        return np.sum(value_of(a), axis=axis)
    out = np.sum(a.value, axis=axis)
    shape = a.value.shape

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), shape).copy()

    return a.tape._emit("sum", out, (a.index,), (vjp,))


def mean(a, axis=None):
    n = value_of(a).size if axis is None else value_of(a).shape[axis]
    return div(total(a, axis=axis), float(n))


# ---------------------------------------------------------------------------
# Dense complex linear solve (single tape node, custom adjoint)
# ---------------------------------------------------------------------------

def _check_pivots(lu, amax):
    piv = np.abs(np.diag(lu))
    bad = np.nonzero(piv < 1e-12 * max(amax, 1e-300))[0]
    if bad.size:
        raise SolverError(f"singular matrix: pivot {int(bad[0])} is negligible")


def solve_complex(a_re, a_im, b_re, b_im):
    """Solve (a_re + i a_im) x = (b_re + i b_im); returns (x_re, x_im).

    b may be a vector [N] or a block of right-hand sides [N, K]. Forward
    uses LU with partial pivoting; the factorization is retained for the
    adjoint pass (one A^-H solve per backward call).
    """
    va = value_of(a_re) + 1j * value_of(a_im)
    vb = value_of(b_re) + 1j * value_of(b_im)
    if va.ndim != 2 or va.shape[0] != va.shape[1]:
        raise SolverError("matrix must be square")
    factor = lu_factor(va)
    _check_pivots(factor[0], float(np.max(np.abs(va))))
    x = lu_solve(factor, vb)
    if not is_var(a_re, a_im, b_re, b_im):
        return x.real, x.imag

    tape = _tape_of(a_re, a_im, b_re, b_im)
    out = np.stack([x.real, x.imag])

    def solve_adjoints(g):
        xbar = g[0] + 1j * g[1]
        bbar = lu_solve(factor, xbar, trans=2)  # A^-H xbar
        xc = x if x.ndim == 2 else x[:, None]
        bc = bbar if bbar.ndim == 2 else bbar[:, None]
        abar = -bc @ xc.conj().T
        return abar, bbar

    cache = {}

    def part(g, which):
        key = id(g)
        if cache.get("key") != key:
            cache["key"] = key
            cache["val"] = solve_adjoints(g)
        abar, bbar = cache["val"]
        return {"are": abar.real, "aim": abar.imag,
                "bre": bbar.real, "bim": bbar.imag}[which]

    parents, vjps = [], []
    for op, which in ((a_re, "are"), (a_im, "aim"), (b_re, "bre"), (b_im, "bim")):
        if isinstance(op, Var):
            parents.append(op.index)
            vjps.append(lambda g, w=which: part(g, w))
    xs = tape._emit("solve_complex", out, tuple(parents), tuple(vjps))
    return take(xs, 0), take(xs, 1)


# Spec-level alias: complex matrices enter as re/im pairs of Vars.
solve_linear_differentiable = solve_complex


# ---------------------------------------------------------------------------
# Reverse sweep
# ---------------------------------------------------------------------------

class Gradient:
    """Result of a reverse sweep; maps Vars on the swept tape to arrays."""

    def __init__(self, tape, adjoints):
        self._tape = tape
        self._adjoints = adjoints

    def wrt(self, var: Var) -> np.ndarray:
        if var.tape is not self._tape:
            raise NumericError("gradient queried for a Var on another tape")
        g = self._adjoints[var.index]
        if g is None:
            return np.zeros_like(var.value)
        return g


def backward(loss: Var, check_finite: bool = True) -> Gradient:
    """Single reverse sweep from a scalar loss; O(tape length)."""
    if not isinstance(loss, Var):
        raise NumericError("backward: loss must be a Var")
    if loss.value.size != 1:
        raise NumericError("backward: loss must be scalar")
    if not np.isfinite(loss.value):
        raise NumericError("backward: loss is not finite")
    tape = loss.tape
    adjoints: list = [None] * len(tape._nodes)
    adjoints[loss.index] = np.ones_like(loss.value)
    for idx in range(loss.index, -1, -1):
        g = adjoints[idx]
        if g is None:
            continue
        node = tape._nodes[idx]
        if check_finite and not np.all(np.isfinite(g)):
            raise NumericError(
                f"non-finite adjoint at node #{idx} ({node.name})"
            )
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            if adjoints[parent] is None:
                adjoints[parent] = np.array(contrib, dtype=float, copy=True)
            else:
                adjoints[parent] = adjoints[parent] + contrib
    return Gradient(tape, adjoints)
