"""Truncated multivariate jets in derivative normalization.

A :class:`Jet` holds every partial derivative ``∂^a f`` with ``|a| <= order``
of a function of ``dim`` variables at a point. The coefficient table sits on
the last array axis; leading axes form a batch (sample points, tensor
components) so that whole tensor fields on a grid move through numpy at once.

Multi-indices are listed by total degree, so the first ``C(dim + k, k)``
entries of an order-``K`` table form the order-``k`` table. Truncating a jet
is therefore a slice.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement, product
from math import comb, factorial, prod

import numpy as np

from .quadrature import adaptive_gauss_legendre

MAX_ORDER = 5


class DomainError(ValueError):
    """A field was evaluated outside its chart."""


class OrderError(ValueError):
    """A field cannot supply the requested derivative order."""


# ---------------------------------------------------------------------------
# multi-index bookkeeping

@lru_cache(maxsize=None)
def multi_indices(dim, order):
    """Multi-indices of total degree ``<= order``, graded by degree."""
    out = []
    for deg in range(order + 1):
        for combo in combinations_with_replacement(range(dim), deg):
            alpha = [0] * dim
            for c in combo:
                alpha[c] += 1
            out.append(tuple(alpha))
    return tuple(out)


@lru_cache(maxsize=None)
def index_map(dim, order):
    return {a: i for i, a in enumerate(multi_indices(dim, order))}


def n_coeffs(dim, order):
    return comb(dim + order, order)


@lru_cache(maxsize=None)
def _product_plan(dim, order):
    """Pair tables for the Leibniz rule, sorted by target multi-index."""
    mi = multi_indices(dim, order)
    index = index_map(dim, order)
    rows = []
    for i, a in enumerate(mi):
        da = sum(a)
        for j, b in enumerate(mi):
            if da + sum(b) > order:
                break
            g = tuple(x + y for x, y in zip(a, b))
            w = prod(comb(gi, ai) for gi, ai in zip(g, a))
            rows.append((index[g], i, j, w))
    rows.sort()
    k, i, j, w = (np.array(c) for c in zip(*rows))
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    return i, j, w.astype(float), starts


@lru_cache(maxsize=None)
def _cross_plan(dim, order):
    """Leibniz pairs where both factors have positive degree, grouped by target."""
    mi = multi_indices(dim, order)
    index = index_map(dim, order)
    rows = []
    for i, a in enumerate(mi):
        for j, b in enumerate(mi):
            if sum(a) and sum(b) and sum(a) + sum(b) <= order:
                g = tuple(x + y for x, y in zip(a, b))
                rows.append((index[g], i, j, prod(comb(gi, ai) for gi, ai in zip(g, a))))
    if not rows:
        return None
    rows.sort()
    k, i, j, w = (np.array(c) for c in zip(*rows))
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    return i, j, w.astype(float), starts, k[starts]


@lru_cache(maxsize=None)
def _diff_plan(dim, order, var):
    index = index_map(dim, order)
    src = []
    for alpha in multi_indices(dim, order - 1):
        beta = list(alpha)
        beta[var] += 1
        src.append(index[tuple(beta)])
    return np.array(src)


@lru_cache(maxsize=None)
def _embed_plan(dim, new_dim, order, positions):
    index = index_map(new_dim, order)
    dst = []
    for alpha in multi_indices(dim, order):
        beta = [0] * new_dim
        for a, p in zip(alpha, positions):
            beta[p] = a
        dst.append(index[tuple(beta)])
    return np.array(dst)


# ---------------------------------------------------------------------------
# the jet type

class Jet:
    """Batch of truncated Taylor expansions stored as partial derivatives.

    Parameters
    ----------
    coeffs : array_like
        Shape ``(*batch, C(dim + order, order))``. Entry ``i`` of the last
        axis is ``∂^a f`` with ``a = multi_indices(dim, order)[i]``.
    dim : int
        Number of variables.
    order : int
        Largest total derivative order carried.
    """

    __array_ufunc__ = None
    __slots__ = ("coeffs", "dim", "order")

    def __init__(self, coeffs, dim, order):
        if not 0 <= order <= MAX_ORDER:
            raise OrderError(f"jet order {order} outside 0..{MAX_ORDER}")
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1:] != (n_coeffs(dim, order),):
            raise ValueError(
                f"coefficient table of length {coeffs.shape[-1:]} does not match "
                f"dim={dim}, order={order}")
        self.coeffs = coeffs
        self.dim = dim
        self.order = order

    # constructors --------------------------------------------------------

    @classmethod
    def constant(cls, value, dim, order):
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros(value.shape + (n_coeffs(dim, order),))
        coeffs[..., 0] = value
        return cls(coeffs, dim, order)

    @classmethod
    def zeros(cls, batch, dim, order):
        return cls(np.zeros(tuple(batch) + (n_coeffs(dim, order),)), dim, order)

    @classmethod
    def variables(cls, points, order):
        """Seed jets ``x_i`` at ``points`` (shape ``(..., dim)``).

        The result has batch shape ``points.shape``; component ``i`` along the
        last batch axis is the coordinate function ``x_i``.
        """
        points = np.asarray(points, dtype=float)
        dim = points.shape[-1]
        coeffs = np.zeros(points.shape + (n_coeffs(dim, order),))
        coeffs[..., 0] = points
        if order:
            coeffs[..., np.arange(dim), 1 + np.arange(dim)] = 1.0
        return cls(coeffs, dim, order)

    # basic accessors -------------------------------------------------------

    @property
    def batch_shape(self):
        return self.coeffs.shape[:-1]

    @property
    def value(self):
        return self.coeffs[..., 0]

    def partial(self, alpha):
        """Array of ``∂^alpha f`` over the batch."""
        return self.coeffs[..., index_map(self.dim, self.order)[tuple(alpha)]]

    def gradient_values(self):
        """First partials as an array of shape ``(*batch, dim)``."""
        return self.coeffs[..., 1:1 + self.dim]

    def __repr__(self):
        return f"Jet(dim={self.dim}, order={self.order}, batch={self.batch_shape})"

    # structural operations -----------------------------------------------

    def truncate(self, order):
        if order > self.order:
            raise OrderError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coeffs[..., :n_coeffs(self.dim, order)], self.dim, order)

    def diff(self, var):
        """Jet of ``∂f/∂x_var``, one order lower."""
        if self.order == 0:
            raise OrderError("cannot differentiate an order-0 jet")
        return Jet(self.coeffs[..., _diff_plan(self.dim, self.order, var)],
                   self.dim, self.order - 1)

    def grad(self):
        """Jets of all first partials, stacked on a new last batch axis."""
        if self.order == 0:
            raise OrderError("cannot differentiate an order-0 jet")
        src = np.stack([_diff_plan(self.dim, self.order, v) for v in range(self.dim)])
        return Jet(self.coeffs[..., src], self.dim, self.order - 1)

    def embed(self, new_dim, positions):
        """View as a jet in ``new_dim`` variables; variable ``i`` becomes ``positions[i]``."""
        dst = _embed_plan(self.dim, new_dim, self.order, tuple(positions))
        coeffs = np.zeros(self.batch_shape + (n_coeffs(new_dim, self.order),))
        coeffs[..., dst] = self.coeffs
        return Jet(coeffs, new_dim, self.order)

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            key = key + (slice(None),)
        return Jet(self.coeffs[key], self.dim, self.order)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coeffs.reshape(tuple(shape) + (self.coeffs.shape[-1],)),
                   self.dim, self.order)

    def transpose(self, *axes):
        nb = len(self.batch_shape)
        return Jet(self.coeffs.transpose(tuple(axes) + (nb,)), self.dim, self.order)

    def moveaxis(self, source, destination):
        nb = len(self.batch_shape)
        source = source % nb
        destination = destination % nb
        return Jet(np.moveaxis(self.coeffs, source, destination), self.dim, self.order)

    def broadcast_to(self, batch):
        return Jet(np.broadcast_to(self.coeffs, tuple(batch) + self.coeffs.shape[-1:]),
                   self.dim, self.order)

    def sum(self, axis):
        if isinstance(axis, int):
            axis = (axis,)
        nb = len(self.batch_shape)
        return Jet(self.coeffs.sum(axis=tuple(a % nb for a in axis)), self.dim, self.order)

    # arithmetic ----------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ValueError("jets over different numbers of variables")
            k = min(self.order, other.order)
            return self.truncate(k), other.truncate(k)
        return self, None

    def __neg__(self):
        return Jet(-self.coeffs, self.dim, self.order)

    def __pos__(self):
        return self

    def __add__(self, other):
        a, b = self._coerce(other)
        if b is not None:
            return Jet(a.coeffs + b.coeffs, a.dim, a.order)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.batch_shape, other.shape)
        coeffs = np.array(np.broadcast_to(self.coeffs, shape + self.coeffs.shape[-1:]))
        coeffs[..., 0] += other
        return Jet(coeffs, self.dim, self.order)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return Jet(a.coeffs - b.coeffs, a.dim, a.order)
        return self + (-np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._coerce(other)
        if b is not None:
            i, j, w, starts = _product_plan(a.dim, a.order)
            terms = a.coeffs[..., i] * (b.coeffs[..., j] * w)
            return Jet(np.add.reduceat(terms, starts, axis=-1), a.dim, a.order)
        other = np.asarray(other, dtype=float)
        return Jet(self.coeffs * other[..., None], self.dim, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, exponent):
        if isinstance(exponent, (int, np.integer)) and exponent >= 0:
            result = Jet.constant(np.ones(self.batch_shape), self.dim, self.order)
            base = self
            e = int(exponent)
            while e:
                if e & 1:
                    result = result * base
                e >>= 1
                if e:
                    base = base * base
            return result
        return power(self, exponent)

    def nilpotent(self):
        """The jet minus its value (all derivatives kept, value zeroed)."""
        coeffs = self.coeffs.copy()
        coeffs[..., 0] = 0.0
        return Jet(coeffs, self.dim, self.order)


def as_jet(x, dim, order, batch=()):
    if isinstance(x, Jet):
        return x.truncate(min(order, x.order)) if x.order > order else x
    return Jet.constant(np.broadcast_to(np.asarray(x, float), batch), dim, order)


def stack(jets, axis=0):
    """Stack jets (or numbers) along a new batch axis."""
    jets = list(jets)
    ref = next(j for j in jets if isinstance(j, Jet))
    order = min(j.order for j in jets if isinstance(j, Jet))
    batch = np.broadcast_shapes(*(j.batch_shape for j in jets if isinstance(j, Jet)))
    arrs = []
    for j in jets:
        j = as_jet(j, ref.dim, order, batch)
        arrs.append(np.broadcast_to(j.truncate(order).coeffs, batch + (n_coeffs(ref.dim, order),)))
    nb = len(batch)
    axis = axis if axis >= 0 else nb + 1 + axis
    return Jet(np.stack(arrs, axis=axis), ref.dim, order)


def _letter_not_in(spec):
    for c in "zyxwZYXW":
        if c not in spec:
            return c
    raise ValueError("no free einsum letter")


def _expand_ellipsis(subs, arrays, out):
    """Replace ``...`` by explicit letters; None when the batch shapes differ."""
    used = set("".join(subs) + out)
    free = [c for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ" if c not in used]
    shapes = []
    for s, a in zip(subs, arrays):
        if "..." in s:
            shapes.append(a.shape[:a.ndim - (len(s) - 3)])
    if not shapes:
        return subs, out
    if any(sh != shapes[0] for sh in shapes):
        return None
    ell = "".join(free[:len(shapes[0])])
    return [s.replace("...", ell) for s in subs], out.replace("...", ell)


def _pair_contract(sa, sb, out, a, b):
    """Two-operand einsum as one batched matmul, or None if unsupported."""
    if len(set(sa)) != len(sa) or len(set(sb)) != len(sb) or len(set(out)) != len(out):
        return None
    if any(c not in out and c not in sb for c in sa) or any(c not in out and c not in sa for c in sb):
        return None
    dims = {}
    for s, arr in ((sa, a), (sb, b)):
        for c, d in zip(s, arr.shape):
            if dims.setdefault(c, d) != d:
                return None
    batch = [c for c in out if c in sa and c in sb]
    contr = [c for c in sa if c in sb and c not in out]
    fa = [c for c in sa if c not in sb]
    fb = [c for c in sb if c not in sa]
    size = lambda cs: int(np.prod([dims[c] for c in cs])) if cs else 1
    at = a.transpose([sa.index(c) for c in batch + fa + contr]).reshape(size(batch), size(fa), size(contr))
    bt = b.transpose([sb.index(c) for c in batch + contr + fb]).reshape(size(batch), size(contr), size(fb))
    res = np.matmul(at, bt).reshape([dims[c] for c in batch + fa + fb])
    order = batch + fa + fb
    return res.transpose([order.index(c) for c in out])


def _einsum2(subs, out, arrays):
    if len(arrays) == 2:
        expanded = _expand_ellipsis(subs, arrays, out)
        if expanded is not None:
            (sa, sb), o = expanded
            res = _pair_contract(sa, sb, o, *arrays)
            if res is not None:
                return res
    return np.einsum(",".join(subs) + "->" + out, *arrays, optimize=len(arrays) > 2)


def einsum(spec, *operands):
    """Einstein summation over the batch axes of jets and plain arrays.

    At most two operands may be jets; products between two jets follow the
    Leibniz rule. Plain arrays act as constants.
    """
    ins, out = spec.replace(" ", "").split("->")
    ins = ins.split(",")
    if len(ins) != len(operands):
        raise ValueError("operand count does not match subscripts")
    jets = [k for k, o in enumerate(operands) if isinstance(o, Jet)]
    if not jets or len(jets) > 2:
        raise ValueError("einsum needs one or two jet operands")
    z = _letter_not_in(spec)
    ref = operands[jets[0]]
    if len(jets) == 1:
        arrays = [o.coeffs if isinstance(o, Jet) else np.asarray(o, float) for o in operands]
        subs = [s + z if k in jets else s for k, s in enumerate(ins)]
        res = np.einsum(",".join(subs) + "->" + out + z, *arrays)
        return Jet(res, ref.dim, ref.order)
    a, b = operands[jets[0]]._coerce(operands[jets[1]])
    if a.order == 0:
        arrays = [a.coeffs[..., 0] if k == jets[0] else b.coeffs[..., 0] if k == jets[1]
                  else np.asarray(o, float) for k, o in enumerate(operands)]
        return Jet(_einsum2(ins, out, arrays)[..., None], a.dim, 0)
    # c = a₀b + (a − a₀)b₀ + Σ a_i b_j over pairs of positive degree
    def operand_arrays(ca, cb):
        return [ca if k == jets[0] else cb if k == jets[1] else np.asarray(o, float)
                for k, o in enumerate(operands)]

    def subs_with(za, zb):
        return [s + za if k == jets[0] else s + zb if k == jets[1] else s for k, s in enumerate(ins)]

    res = _einsum2(subs_with("", z), out + z, operand_arrays(a.coeffs[..., 0], b.coeffs))
    res[..., 1:] += _einsum2(subs_with(z, ""), out + z, operand_arrays(a.coeffs[..., 1:], b.coeffs[..., 0]))
    plan = _cross_plan(a.dim, a.order)
    if plan is not None:
        i, j, w, starts, targets = plan
        cross = _einsum2(subs_with(z, z), out + z, operand_arrays(a.coeffs[..., i], b.coeffs[..., j] * w))
        res[..., targets] += np.add.reduceat(cross, starts, axis=-1)
    return Jet(res, a.dim, a.order)


def matmul(a, b):
    return einsum("...ij,...jk->...ik", a, b)


# ---------------------------------------------------------------------------
# elementary functions (Taylor composition through the nilpotent part)

def _series(x, derivs):
    """Compose the univariate function with derivatives ``derivs[k]`` at ``x.value``."""
    n = x.nilpotent()
    k_max = x.order
    acc = Jet.constant(derivs[k_max] / factorial(k_max), x.dim, x.order)
    for k in range(k_max - 1, -1, -1):
        acc = acc * n + derivs[k] / factorial(k)
    return acc


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.value)
    return _series(x, [e] * (x.order + 1))


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    v = x.value
    d = [np.log(v)] + [(-1) ** (k - 1) * factorial(k - 1) / v ** k for k in range(1, x.order + 1)]
    return _series(x, d)


def reciprocal(x):
    v = x.value
    d = [(-1) ** k * factorial(k) / v ** (k + 1) for k in range(x.order + 1)]
    return _series(x, d)


def power(x, s):
    """``x**s`` for real ``s``; requires ``x > 0`` unless ``s`` is a whole number."""
    if not isinstance(x, Jet):
        return np.power(x, s)
    v = x.value
    d = []
    falling = 1.0
    for k in range(x.order + 1):
        d.append(falling * v ** (s - k) if falling else np.zeros_like(v))
        falling *= s - k
    return _series(x, d)


def sqrt(x):
    return power(x, 0.5) if isinstance(x, Jet) else np.sqrt(x)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cycle = [s, c, -s, -c]
    return _series(x, [cycle[k % 4] for k in range(x.order + 1)])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cycle = [c, -s, -c, s]
    return _series(x, [cycle[k % 4] for k in range(x.order + 1)])


def sinh(x):
    if not isinstance(x, Jet):
        return np.sinh(x)
    s, c = np.sinh(x.value), np.cosh(x.value)
    return _series(x, [s if k % 2 == 0 else c for k in range(x.order + 1)])


def cosh(x):
    if not isinstance(x, Jet):
        return np.cosh(x)
    s, c = np.sinh(x.value), np.cosh(x.value)
    return _series(x, [c if k % 2 == 0 else s for k in range(x.order + 1)])


def arctan(x):
    if not isinstance(x, Jet):
        return np.arctan(x)
    th = np.arctan(x.value)
    d = [th]
    # d^k/dt^k arctan(t) = (k-1)! cos^k(θ) sin(k(θ + π/2)) with θ = arctan t
    for k in range(1, x.order + 1):
        d.append(factorial(k - 1) * np.cos(th) ** k * np.sin(k * (th + np.pi / 2)))
    return _series(x, d)


# ---------------------------------------------------------------------------
# linear algebra on jet-valued matrices

def inv(a):
    """Inverse of a jet-valued matrix over the last two batch axes.

    Uses the terminating Neumann series ``Σ (−A0⁻¹N)^k A0⁻¹`` where ``A0`` is
    the value matrix and ``N`` the nilpotent remainder.
    """
    a0inv = np.linalg.inv(a.value)
    result = Jet.constant(a0inv, a.dim, a.order)
    if a.order == 0:
        return result
    m = -einsum("...ij,...jk->...ik", a0inv, a.nilpotent())
    term = result
    for _ in range(a.order):
        term = matmul(m, term)
        result = result + term
    return result


def solve(a, b):
    """Solve ``A x = b`` with jet entries; ``b`` has one extra trailing axis or matches ``A``."""
    ainv = inv(a)
    if b.batch_shape[-2:] == a.batch_shape[-2:] and len(b.batch_shape) == len(a.batch_shape):
        return matmul(ainv, b)
    return einsum("...ij,...j->...i", ainv, b)


def compose(outer, inner):
    """Jet of ``F(x(t))`` from the jet of ``F`` at ``x(t0)`` and jets of ``x``.

    Parameters
    ----------
    outer : Jet
        Jets of ``F`` in ``d`` variables, batch ``(*B, *S)``.
    inner : sequence of Jet
        ``d`` scalar jets with batch ``B``, in the new variables ``t``.
    """
    inner = list(inner)
    order = min([outer.order] + [x.order for x in inner])
    nil = [x.truncate(order).nilpotent() for x in inner]
    new_dim = nil[0].dim
    b = nil[0].batch_shape
    extra = outer.batch_shape[len(b):]
    pad = (1,) * len(extra)
    outer = outer.truncate(order)
    monomials = {}
    result = None
    for idx, alpha in enumerate(multi_indices(outer.dim, order)):
        if not any(alpha):
            mono = Jet.constant(np.ones(b), new_dim, order)
        else:
            first = next(i for i, a in enumerate(alpha) if a)
            prev = list(alpha)
            prev[first] -= 1
            mono = monomials[tuple(prev)] * nil[first]
        monomials[alpha] = mono
        weight = outer.coeffs[..., idx] / prod(factorial(a) for a in alpha)
        term = mono.reshape(b + pad) * weight
        result = term if result is None else result + term
    return result


# ---------------------------------------------------------------------------
# charts and fields

@dataclass(frozen=True)
class Box:
    """Axis-aligned coordinate rectangle ``lo <= x <= hi``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))

    @property
    def dim(self):
        return len(self.lo)

    def contains(self, points, slack=1e-12):
        points = np.asarray(points, float)
        lo, hi = np.array(self.lo), np.array(self.hi)
        span = hi - lo
        return np.all((points >= lo - slack * span) & (points <= hi + slack * span), axis=-1)

    def grid(self, n=9, margin=0.05):
        """Uniform tensor grid with ``n`` samples per axis, inset by ``margin`` of each side."""
        counts = (n,) * self.dim if np.isscalar(n) else tuple(n)
        axes = []
        for lo, hi, k in zip(self.lo, self.hi, counts):
            pad = margin * (hi - lo)
            axes.append(np.linspace(lo + pad, hi - pad, k) if k > 1 else np.array([0.5 * (lo + hi)]))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    @property
    def center(self):
        return tuple(0.5 * (a + b) for a, b in zip(self.lo, self.hi))


def _assemble(obj, dim, order, batch):
    if isinstance(obj, Jet):
        return obj.broadcast_to(np.broadcast_shapes(batch, obj.batch_shape[:len(batch)])
                                + obj.batch_shape[len(batch):]) if obj.batch_shape[:len(batch)] != batch else obj
    if isinstance(obj, (list, tuple)):
        parts = [_assemble(o, dim, order, batch) for o in obj]
        return stack(parts, axis=len(batch))
    return Jet.constant(np.broadcast_to(np.asarray(obj, float), batch), dim, order)


class Field:
    """Tensor-valued function on a chart that can be evaluated as jets.

    A field is backed either by a closed-form expression, written as a Python
    function on jets, or by an evaluator that returns jets at given points
    (quadrature and ODE-backed fields). Expression fields compose exactly
    with arbitrary input jets; evaluator fields compose through
    :func:`compose`.

    Parameters
    ----------
    dim : int
        Chart dimension.
    shape : tuple
        Tensor shape of the value (``()`` for a scalar field).
    expr : callable, optional
        ``expr(x_0, ..., x_{dim-1})`` on scalar jets with a common batch;
        returns a jet with batch ``(*batch, *shape)`` or a nested list.
    evaluator : callable, optional
        ``evaluator(points, order)`` with ``points`` of shape ``(P, dim)``,
        returning a jet with batch ``(P, *shape)``.
    max_order : int
        Largest derivative order the field can supply.
    domain : Box, optional
        Points outside raise :class:`DomainError`.
    """

    def __init__(self, dim, shape=(), *, expr=None, evaluator=None,
                 max_order=MAX_ORDER, domain=None, name=""):
        if (expr is None) == (evaluator is None):
            raise ValueError("give exactly one of expr or evaluator")
        self.dim = dim
        self.shape = tuple(shape)
        self.expr = expr
        self.evaluator = evaluator
        self.max_order = max_order
        self.domain = domain
        self.name = name
        self._cache = OrderedDict()

    def __repr__(self):
        return f"Field({self.name or '?'}, dim={self.dim}, shape={self.shape})"

    def evaluate(self, points, order):
        """Jets of the field at ``points`` (shape ``(P, dim)`` or ``(dim,)``)."""
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        pts = np.atleast_2d(points)
        if order > self.max_order:
            raise OrderError(f"{self!r} supports derivative order <= {self.max_order}")
        if self.domain is not None and not np.all(self.domain.contains(pts)):
            raise DomainError(f"{self!r} evaluated outside its chart {self.domain}")
        key = (order, pts.shape, pts.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            if self.expr is not None:
                xs = Jet.variables(pts, order)
                out = self.expr(*(xs[:, i] for i in range(self.dim)))
                hit = _assemble(out, self.dim, order, (len(pts),))
            else:
                hit = self.evaluator(pts, order)
            if hit.batch_shape != (len(pts),) + self.shape:
                hit = hit.broadcast_to((len(pts),) + self.shape)
            self._cache[key] = hit
            if len(self._cache) > 24:
                self._cache.popitem(last=False)
        return hit[0] if single else hit

    def __call__(self, *xs):
        """Compose with input jets ``x_0, ..., x_{dim-1}`` sharing one batch."""
        if len(xs) != self.dim:
            raise ValueError(f"{self!r} takes {self.dim} arguments")
        if self.expr is not None:
            batch = np.broadcast_shapes(*(x.batch_shape for x in xs))
            return _assemble(self.expr(*xs), xs[0].dim, xs[0].order, batch)
        batch = xs[0].batch_shape
        pts = np.stack([np.broadcast_to(x.value, batch) for x in xs], axis=-1).reshape(-1, self.dim)
        order = min(x.order for x in xs)
        base = self.evaluate(pts, order)
        base = base.reshape(batch + self.shape)
        return compose(base, xs)

    def component(self, *index):
        """Scalar field of one tensor component."""
        sel = (Ellipsis,) + tuple(index)
        if self.expr is not None:
            expr = self.expr

            def comp(*xs):
                batch = np.broadcast_shapes(*(x.batch_shape for x in xs))
                return _assemble(expr(*xs), xs[0].dim, xs[0].order, batch)[sel]
            return Field(self.dim, (), expr=comp, max_order=self.max_order,
                         domain=self.domain, name=f"{self.name}{list(index)}")
        return Field(self.dim, (), evaluator=lambda p, k: self.evaluate(p, k)[sel],
                     max_order=self.max_order, domain=self.domain,
                     name=f"{self.name}{list(index)}")

    def diff(self, var):
        """Field of the partial derivative along ``var``."""
        return Field(self.dim, self.shape,
                     evaluator=lambda p, k: self.evaluate(p, k + 1).diff(var),
                     max_order=self.max_order - 1, domain=self.domain,
                     name=f"d{var}({self.name})")

    def values(self, points):
        return self.evaluate(points, 0).value


def scalar_field(dim, expr, **kwargs):
    """Scalar :class:`Field` from a closed-form expression on jets."""
    return Field(dim, (), expr=expr, **kwargs)


ScalarField = Field


def jet_eval(field, point, order):
    """All partials ``∂^a f(point)`` with ``|a| <= order``."""
    return field.evaluate(point, order)


def fd_crosscheck(field, point, order=2, step=1e-4):
    """Worst relative deviation between jet partials and central differences.

    First and second partials are compared against the standard central
    stencils. Deviations are scaled by ``max(1, |jet partial|)``.
    """
    point = np.asarray(point, float)
    dim = point.size
    jet = field.evaluate(point, order)
    eye = np.eye(dim) * step
    stencil = [point]
    for i in range(dim):
        stencil += [point + eye[i], point - eye[i]]
    if order >= 2:
        for i in range(dim):
            for j in range(i + 1, dim):
                for si, sj in product((1, -1), repeat=2):
                    stencil.append(point + si * eye[i] + sj * eye[j])
    vals = field.evaluate(np.array(stencil), 0).value
    f0, rest = vals[0], vals[1:]
    worst = 0.0

    def dev(exact, approx):
        return float(np.max(np.abs(exact - approx) / np.maximum(1.0, np.abs(exact))))

    for i in range(dim):
        fp, fm = rest[2 * i], rest[2 * i + 1]
        e = np.zeros(dim, int)
        e[i] = 1
        if order >= 1:
            worst = max(worst, dev(jet.partial(tuple(e)), (fp - fm) / (2 * step)))
        if order >= 2:
            worst = max(worst, dev(jet.partial(tuple(2 * e)), (fp - 2 * f0 + fm) / step ** 2))
    if order >= 2:
        k = 2 * dim
        for i in range(dim):
            for j in range(i + 1, dim):
                pp, pm, mp, mm = rest[k:k + 4]
                k += 4
                e = np.zeros(dim, int)
                e[i] += 1
                e[j] += 1
                worst = max(worst, dev(jet.partial(tuple(e)), (pp - pm - mp + mm) / (4 * step ** 2)))
    return worst


def axis_antiderivative(integrand, axis, base, times=1, atol=1e-10):
    """Quadrature-backed field ``∫_base^{x_axis} (x_axis − t)^{times−1} h dt``.

    For ``times=2`` this is the iterated antiderivative with both constants
    of integration zero on the base line ``x_axis = base``. Derivatives with
    enough ``x_axis`` factors come analytically from the integrand; the
    remaining ones are integrals of integrand jets (differentiation under the
    integral sign).
    """
    if times not in (1, 2):
        raise ValueError("times must be 1 or 2")
    dim, shape = integrand.dim, integrand.shape

    def evaluator(points, order):
        h_here = integrand.evaluate(points, order)
        mi = multi_indices(dim, order)
        idx = index_map(dim, order)
        # table entries whose multi-index has no axis component
        flat = [i for i, a in enumerate(mi) if a[axis] == 0]

        def fn(t):
            pts = np.broadcast_to(points[:, None, :], t.shape + (dim,)).copy()
            pts[..., axis] = t
            jets = integrand.evaluate(pts.reshape(-1, dim), order)
            c = jets.coeffs[..., flat].reshape(t.shape + shape + (len(flat),))
            if times == 1:
                return c
            lever = (points[:, axis][:, None] - t).reshape(t.shape + (1,) * (len(shape) + 1))
            return np.concatenate([c, c * lever], axis=-1)

        integrals = adaptive_gauss_legendre(fn, np.full(len(points), float(base)),
                                            points[:, axis], atol=atol)
        plain = dict(zip(flat, np.moveaxis(integrals[..., :len(flat)], -1, 0)))
        lever = dict(zip(flat, np.moveaxis(integrals[..., len(flat):], -1, 0))) if times == 2 else {}
        coeffs = np.zeros((len(points),) + shape + (len(mi),))
        for k, alpha in enumerate(mi):
            a = alpha[axis]
            if a >= times:
                beta = list(alpha)
                beta[axis] -= times
                coeffs[..., k] = h_here.coeffs[..., idx[tuple(beta)]]
                continue
            beta = list(alpha)
            beta[axis] = 0
            src = idx[tuple(beta)]
            if times == 1 or a == 1:
                coeffs[..., k] = plain[src]
            else:
                coeffs[..., k] = lever[src]
        return Jet(coeffs, dim, order)

    return Field(dim, shape, evaluator=evaluator, max_order=integrand.max_order,
                 domain=integrand.domain, name=f"antiderivative{times}({integrand.name})")
