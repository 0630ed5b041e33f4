"""Differentiable moment machinery.

Batch standardization to zero mean / unit variance, mixed moments of
distinct embedding dimensions, the redundancy-reduction loss summing
squared moments over unordered index combinations, the cross-correlation
invariance loss, and their weighted combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Node, UsageError
from .errors import ConfigError, VerificationError

STD_EPS = 1e-8


@dataclass(frozen=True)
class MomentSpec:
    """Objective configuration: moment orders, branch coverage, weights."""

    orders: tuple[int, ...] = (2, 3)
    branch_mode: str = "all"            # "all" | "single"
    lam: float = 0.5
    views: int = 2
    term_budget: int = 10_000_000

    def __post_init__(self):
        orders = tuple(sorted(set(int(k) for k in self.orders)))
        object.__setattr__(self, "orders", orders)
        if orders and orders[0] < 2:
            raise ConfigError("moment orders must be >= 2")
        if self.branch_mode not in ("all", "single"):
            raise ConfigError(f"unknown branch mode {self.branch_mode!r}")
        if self.lam < 0.0:
            raise ConfigError("lambda must be >= 0")
        if self.views != 2:
            raise ConfigError("only two-view training is supported")


def count_combinations(dim: int, orders: Sequence[int]) -> int:
    """Number of unordered distinct index combinations across all orders."""
    total = 0
    for k in orders:
        if k > dim:
            raise ConfigError(f"moment order {k} exceeds embedding dim {dim}")
        if k < 2:
            raise ConfigError("moment orders must be >= 2")
        total += math.comb(dim, k)
    return total


def _guarded_std(var: Node, eps: float = STD_EPS) -> Node:
    """Per-column std with a floor: columns with variance < eps use eps."""
    guarded = var.value >= eps
    out = np.where(guarded, np.sqrt(np.maximum(var.value, eps)), eps)

    def backward(g):
        var.accumulate_grad(g * np.where(guarded, 0.5 / out, 0.0))

    return ad.custom_op(out, (var,), backward)


def standardize(z: Node | np.ndarray, eps: float = STD_EPS) -> Node:
    """Column-wise (value - mean) / population std, as a graph node.

    Population statistics (divisor B). Constant columns map to zero via the
    eps floor on the std.
    """
    z = ad.as_node(z)
    if z.value.ndim != 2:
        raise UsageError("standardize expects a B x D batch")
    if z.value.shape[0] < 2:
        raise UsageError("standardize needs batch size >= 2")
    mu = ad.mean_over_axis(z, axis=0)
    centered = ad.sub(z, mu)
    var = ad.mean_over_axis(ad.square(centered), axis=0)
    return ad.div(centered, _guarded_std(var, eps))


def mixed_moment(zh: Node | np.ndarray, idx: Sequence[int]) -> Node:
    """Order-K mixed moment of distinct dimensions: mean over the batch of
    the product of the selected standardized columns."""
    zh = ad.as_node(zh)
    idx = tuple(int(i) for i in idx)
    dim = zh.value.shape[1]
    if len(set(idx)) != len(idx):
        raise UsageError(f"mixed moment indices must be distinct, got {idx}")
    if any(i < 0 or i >= dim for i in idx):
        raise UsageError(f"index out of range for D={dim}: {idx}")
    b = zh.value.shape[0]
    cols = zh.value[:, list(idx)]
    value = np.asarray(cols.prod(axis=1).mean())

    def backward(g):
        grad = np.zeros_like(zh.value)
        for j, d in enumerate(idx):
            others = np.prod(np.delete(cols, j, axis=1), axis=1)
            grad[:, d] += (float(g) / b) * others
        zh.accumulate_grad(grad)

    return ad.custom_op(value, (zh,), backward)


def _pair_sums(zh: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum of squared pair moments over d1 < d2, and the moment matrix."""
    b = zh.shape[0]
    e2 = (zh.T @ zh) / b
    total = float((e2 * e2).sum() - (np.diag(e2) ** 2).sum()) / 2.0
    return total, e2

def _pair_grad(zh: np.ndarray, e2: np.ndarray, coeff: float,
               out: np.ndarray) -> None:
    b = zh.shape[0]
    off = e2.copy()
    np.fill_diagonal(off, 0.0)
    out += (2.0 * coeff / b) * (zh @ off)


def _triple_sums(zh: np.ndarray) -> float:
    """Sum of squared triple moments over d1 < d2 < d3.

    Blocked over the first index: the batch products for all (d1, d2) pairs
    of one slab are formed at once, so the inner work is two dense matrix
    products per slab instead of a Python loop over pairs.
    """
    b, d = zh.shape
    total = 0.0
    for d1 in range(d - 2):
        rest = zh[:, d1 + 1:]
        pair = rest * zh[:, d1:d1 + 1]
        e_sub = (pair.T @ rest) / b
        total += float((np.triu(e_sub, k=1) ** 2).sum())
    return total

def _triple_grad(zh: np.ndarray, coeff: float, out: np.ndarray) -> None:
    b, d = zh.shape
    for d1 in range(d - 2):
        o = d1 + 1
        rest = zh[:, o:]
        pair = rest * zh[:, d1:d1 + 1]
        e_sub = (pair.T @ rest) / b
        w = 2.0 * np.triu(e_sub, k=1)
        out[:, o:] += (coeff / b) * (pair @ w)
        t = rest @ w.T
        out[:, o:] += (coeff / b) * (zh[:, d1:d1 + 1] * t)
        out[:, d1] += (coeff / b) * (t * rest).sum(axis=1)


def _higher_sums(zh: np.ndarray, k: int) -> float:
    """Order-k >= 4 fallback: enumerate k-1 prefixes, vectorize the last index."""
    b, d = zh.shape
    total = 0.0
    for prefix in combinations(range(d - 1), k - 1):
        tail_start = prefix[-1] + 1
        p = zh[:, list(prefix)].prod(axis=1)
        e = (p @ zh[:, tail_start:]) / b
        total += float((e * e).sum())
    return total

def _higher_grad(zh: np.ndarray, k: int, coeff: float, out: np.ndarray) -> None:
    b, d = zh.shape
    for prefix in combinations(range(d - 1), k - 1):
        tail_start = prefix[-1] + 1
        tail = zh[:, tail_start:]
        pref_cols = zh[:, list(prefix)]
        p = pref_cols.prod(axis=1)
        e = (p @ tail) / b
        w = (2.0 * coeff / b) * e
        out[:, tail_start:] += p[:, None] * w[None, :]
        s = tail @ w
        for j, dj in enumerate(prefix):
            p_wo = np.prod(np.delete(pref_cols, j, axis=1), axis=1)
            out[:, dj] += p_wo * s


def _order_sums(zh: np.ndarray, k: int) -> float:
    if k == 2:
        return _pair_sums(zh)[0]
    if k == 3:
        return _triple_sums(zh)
    return _higher_sums(zh, k)


def _order_grad(zh: np.ndarray, k: int, coeff: float, out: np.ndarray) -> None:
    if k == 2:
        _pair_grad(zh, _pair_sums(zh)[1], coeff, out)
    elif k == 3:
        _triple_grad(zh, coeff, out)
    else:
        _higher_grad(zh, k, coeff, out)


def rr_view_loss(zh: Node, orders: Sequence[int]) -> tuple[Node, dict[int, float]]:
    """Redundancy loss of one view: squared mixed moments over unordered
    distinct combinations for each order, normalized by the total
    combination count M."""
    dim = zh.value.shape[1]
    m = count_combinations(dim, orders)
    per_order = {k: _order_sums(zh.value, k) / m for k in orders}
    value = np.asarray(sum(per_order.values()))

    def backward(g):
        grad = np.zeros_like(zh.value)
        for k in orders:
            _order_grad(zh.value, k, float(g) / m, grad)
        zh.accumulate_grad(grad)

    return ad.custom_op(value, (zh,), backward), per_order


def rr_loss(view_batches: Sequence[Node],
            spec: MomentSpec) -> tuple[Node, dict[int, float]]:
    """Average of the per-view redundancy losses over the constrained views.

    The view list carries branch coverage: both views in all-branch mode,
    one in single-branch mode.
    """
    if not view_batches:
        raise UsageError("rr_loss needs at least one view")
    dim = view_batches[0].value.shape[1]
    total_terms = count_combinations(dim, spec.orders)
    if total_terms > spec.term_budget:
        raise ConfigError(
            f"{total_terms} moment terms exceed the budget of {spec.term_budget}")
    t = len(view_batches)
    nodes = []
    per_order = {k: 0.0 for k in spec.orders}
    for zh in view_batches:
        if zh.value.shape[0] < 2:
            raise UsageError("rr_loss needs batch size >= 2")
        if zh.value.shape[1] != dim:
            raise UsageError("views must share the embedding dimension")
        node, orders_t = rr_view_loss(zh, spec.orders)
        nodes.append(node)
        for k, val in orders_t.items():
            per_order[k] += val / t
    total = nodes[0]
    for node in nodes[1:]:
        total = ad.add(total, node)
    if t > 1:
        total = ad.mul(total, 1.0 / t)
    return total, per_order


def cross_correlation(zh1: Node, zh2: Node) -> Node:
    """D x D per-dimension correlation of two standardized views.

    Computed in the simplified form C = zh1^T zh2 / B, which for
    standardized inputs equals the fully normalized correlation; the two
    forms are asserted to agree on every call.
    """
    if zh1.value.shape != zh2.value.shape:
        raise UsageError(
            f"shape mismatch: {zh1.value.shape} vs {zh2.value.shape}")
    b = zh1.value.shape[0]
    raw = zh1.value.T @ zh2.value
    c = raw / b
    norm1 = np.sqrt((zh1.value ** 2).sum(axis=0))
    norm2 = np.sqrt((zh2.value ** 2).sum(axis=0))
    denom = np.outer(norm1, norm2)
    live = denom > 1e-12
    if live.any():
        full = np.where(live, raw / np.where(live, denom, 1.0), 0.0)
        gap = np.abs(np.where(live, full - c, 0.0)).max()
        if gap > 1e-9:
            raise VerificationError(
                f"normalized correlation diverges from simplified form by {gap:.3e}; "
                "inputs are not standardized")

    def backward(g):
        zh1.accumulate_grad((zh2.value @ g.T) / b)
        zh2.accumulate_grad((zh1.value @ g) / b)

    return ad.custom_op(c, (zh1, zh2), backward)


def ti_loss(c: Node) -> Node:
    """Invariance penalty: mean squared distance of the diagonal from 1."""
    if c.value.ndim != 2 or c.value.shape[0] != c.value.shape[1]:
        raise UsageError("ti_loss expects a square correlation matrix")
    d = c.value.shape[0]
    diag = np.diag(c.value)
    value = np.asarray(((1.0 - diag) ** 2).mean())

    def backward(g):
        grad = np.zeros_like(c.value)
        np.fill_diagonal(grad, (-2.0 * float(g) / d) * (1.0 - diag))
        c.accumulate_grad(grad)

    return ad.custom_op(value, (c,), backward)


@dataclass
class LossBreakdown:
    total: float
    ti: float
    rr: float
    rr_by_order: dict[int, float] = field(default_factory=dict)


def total_loss(z1: Node, z2: Node, spec: MomentSpec,
               rng: Optional[np.random.Generator] = None
               ) -> tuple[Node, LossBreakdown]:
    """Combined objective on two raw embedding views.

    Standardizes each view, adds the invariance penalty to lambda times the
    redundancy loss. All-branch mode constrains both views; single-branch
    draws one view per call from ``rng``.
    """
    if z1.value.shape != z2.value.shape:
        raise UsageError("view shapes must match")
    zh1 = standardize(z1)
    zh2 = standardize(z2)
    ti = ti_loss(cross_correlation(zh1, zh2))
    if spec.lam == 0.0 or not spec.orders:
        breakdown = LossBreakdown(total=ti.item(), ti=ti.item(), rr=0.0,
                                  rr_by_order={k: 0.0 for k in spec.orders})
        return ti, breakdown
    if spec.branch_mode == "all":
        views = [zh1, zh2]
    else:
        if rng is None:
            raise UsageError("single-branch mode needs an rng for the draw")
        views = [(zh1, zh2)[int(rng.integers(2))]]
    rr, per_order = rr_loss(views, spec)
    total = ad.add(ti, ad.mul(rr, spec.lam))
    breakdown = LossBreakdown(total=total.item(), ti=ti.item(), rr=rr.item(),
                              rr_by_order=per_order)
    return total, breakdown
