"""Minimal reverse-mode automatic differentiation over dense 2-D float64 matrices.

A :class:`Graph` is a tape: every operation appends one node holding the cached
forward value and a backward closure. Nodes are therefore stored in topological
order by construction, and :meth:`Graph.backward` visits them exactly once in
reverse. Gradients of shared subexpressions accumulate by summation.

Besides the primitive ops (matmul, elementwise arithmetic, reductions) the tape
offers a few fused composites (``dense``, ``couple``, ``uncouple``) used on the
training hot path; each is a single node with a hand-derived gradient rule and
is covered by the same finite-difference tests as the primitives.

Everything is float64 and deterministic: identical inputs produce bit-identical
outputs. relu's subgradient at exactly 0 is fixed to 0.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Graph", "Tensor", "ShapeError", "GraphError"]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class GraphError(ValueError):
    """Graph contract violated (non-scalar backward root, empty reduction, ...)."""


class Tensor:
    """One node of the computation graph: a 2-D float64 value plus its gradient slot."""

    __slots__ = ("value", "grad", "_backward", "_grad_owned")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad: np.ndarray | None = None
        self._backward = None
        self._grad_owned = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.value.shape})"


def _accumulate(node: Tensor, grad: np.ndarray) -> None:
    # The first contribution is adopted without copying (it may alias an array
    # another node also adopted, e.g. add passes its output gradient to both
    # operands). In-place summation is only safe once we own a private buffer.
    if node.grad is None:
        node.grad = grad
        node._grad_owned = False
    elif node._grad_owned:
        node.grad += grad
    else:
        node.grad = node.grad + grad
        node._grad_owned = True


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D matrices, got ndim={arr.ndim}")
    return arr


class Graph:
    """Append-only tape of operations supporting a single reverse sweep."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: list[Tensor] = []

    # ------------------------------------------------------------------ leaves

    def leaf(self, value) -> Tensor:
        """Register an input/parameter node. Its gradient is populated by backward()."""
        node = Tensor(_as_matrix(value))
        self.nodes.append(node)
        self.leaves.append(node)
        return node

    def _node(self, value: np.ndarray, backward) -> Tensor:
        node = Tensor(value)
        node._backward = backward
        self.nodes.append(node)
        return node

    # -------------------------------------------------------------- primitives

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.value.shape[1] != b.value.shape[0]:
            raise ShapeError(
                f"matmul: inner dimensions differ: {a.value.shape} x {b.value.shape}"
            )
        av, bv = a.value, b.value

        def backward(g):
            _accumulate(a, g @ bv.T)
            _accumulate(b, av.T @ g)

        return self._node(av @ bv, backward)

    def _binary(self, a: Tensor, b: Tensor, name: str):
        if a.value.shape != b.value.shape:
            raise ShapeError(f"{name}: shapes differ: {a.value.shape} vs {b.value.shape}")

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        self._binary(a, b, "add")

        def backward(g):
            _accumulate(a, g)
            _accumulate(b, g)

        return self._node(a.value + b.value, backward)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        self._binary(a, b, "sub")

        def backward(g):
            _accumulate(a, g)
            _accumulate(b, -g)

        return self._node(a.value - b.value, backward)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        self._binary(a, b, "mul")
        av, bv = a.value, b.value

        def backward(g):
            _accumulate(a, g * bv)
            _accumulate(b, g * av)

        return self._node(av * bv, backward)

    def add_bias(self, x: Tensor, b: Tensor) -> Tensor:
        """Row-broadcast addition: (n, k) + (1, k)."""
        if b.value.shape != (1, x.value.shape[1]):
            raise ShapeError(
                f"add_bias: bias must be (1, {x.value.shape[1]}), got {b.value.shape}"
            )

        def backward(g):
            _accumulate(x, g)
            _accumulate(b, g.sum(axis=0, keepdims=True))

        return self._node(x.value + b.value, backward)

    def scale(self, x: Tensor, c: float) -> Tensor:
        c = float(c)

        def backward(g):
            _accumulate(x, g * c)

        return self._node(x.value * c, backward)

    def add_scalar(self, x: Tensor, c: float) -> Tensor:
        def backward(g):
            _accumulate(x, g)

        return self._node(x.value + float(c), backward)

    def exp(self, x: Tensor) -> Tensor:
        out_value = np.exp(x.value)

        def backward(g):
            _accumulate(x, g * out_value)

        return self._node(out_value, backward)

    def tanh(self, x: Tensor) -> Tensor:
        out_value = np.tanh(x.value)

        def backward(g):
            _accumulate(x, g * (1.0 - out_value * out_value))

        return self._node(out_value, backward)

    def relu(self, x: Tensor) -> Tensor:
        out_value = np.maximum(x.value, 0.0)

        def backward(g):
            _accumulate(x, g * (out_value > 0.0))

        return self._node(out_value, backward)

    def sqrt(self, x: Tensor) -> Tensor:
        """Elementwise square root; inputs must be non-negative."""
        out_value = np.sqrt(x.value)

        def backward(g):
            _accumulate(x, g * (0.5 / out_value))

        return self._node(out_value, backward)

    def reciprocal(self, x: Tensor) -> Tensor:
        out_value = 1.0 / x.value

        def backward(g):
            _accumulate(x, -g * out_value * out_value)

        return self._node(out_value, backward)

    # -------------------------------------------------------------- reductions

    def sum(self, x: Tensor) -> Tensor:
        if x.value.size == 0:
            raise GraphError("sum: empty tensor")
        xv = x.value

        def backward(g):
            _accumulate(x, np.full_like(xv, g[0, 0]))

        return self._node(np.array([[xv.sum()]]), backward)

    def mean(self, x: Tensor) -> Tensor:
        if x.value.size == 0:
            raise GraphError("mean: empty tensor")
        xv = x.value
        n = xv.size

        def backward(g):
            _accumulate(x, np.full_like(xv, g[0, 0] / n))

        return self._node(np.array([[xv.mean()]]), backward)

    def sum_rows(self, x: Tensor) -> Tensor:
        """Per-row sum, (n, k) -> (n, 1). Gradient broadcasts across columns."""
        if x.value.size == 0:
            raise GraphError("sum_rows: empty tensor")
        k = x.value.shape[1]

        def backward(g):
            _accumulate(x, np.repeat(g, k, axis=1))

        return self._node(x.value.sum(axis=1, keepdims=True), backward)

    # -------------------------------------------------------------- structural

    def cols(self, x: Tensor, j0: int, j1: int) -> Tensor:
        """Column slice [j0, j1)."""

        def backward(g):
            full = np.zeros_like(x.value)
            full[:, j0:j1] = g
            _accumulate(x, full)

        return self._node(x.value[:, j0:j1], backward)

    def concat_cols(self, a: Tensor, b: Tensor) -> Tensor:
        if a.value.shape[0] != b.value.shape[0]:
            raise ShapeError(
                f"concat_cols: row counts differ: {a.value.shape} vs {b.value.shape}"
            )
        k = a.value.shape[1]

        def backward(g):
            _accumulate(a, g[:, :k])
            _accumulate(b, g[:, k:])

        return self._node(np.concatenate([a.value, b.value], axis=1), backward)

    def permute_cols(self, x: Tensor, perm: np.ndarray) -> Tensor:
        inverse = np.argsort(perm)

        def backward(g):
            _accumulate(x, g[:, inverse])

        return self._node(x.value[:, perm], backward)

    def transpose(self, x: Tensor) -> Tensor:
        def backward(g):
            _accumulate(x, g.T)

        return self._node(x.value.T, backward)

    # ----------------------------------------------------------- fused hot path

    def dense(self, x: Tensor, w: Tensor, b: Tensor, activation: str | None = None) -> Tensor:
        """Fused affine layer x @ w + b with optional relu, one tape node."""
        if x.value.shape[1] != w.value.shape[0]:
            raise ShapeError(
                f"dense: inner dimensions differ: {x.value.shape} x {w.value.shape}"
            )
        if b.value.shape != (1, w.value.shape[1]):
            raise ShapeError(
                f"dense: bias must be (1, {w.value.shape[1]}), got {b.value.shape}"
            )
        if activation not in (None, "relu"):
            raise GraphError(f"dense: unknown activation {activation!r}")
        xv, wv = x.value, w.value
        out_value = xv @ wv
        out_value += b.value
        if activation == "relu":
            np.maximum(out_value, 0.0, out=out_value)

            def backward(g):
                g = g * (out_value > 0.0)
                _accumulate(x, g @ wv.T)
                _accumulate(w, xv.T @ g)
                _accumulate(b, g.sum(axis=0, keepdims=True))

        else:

            def backward(g):
                _accumulate(x, g @ wv.T)
                _accumulate(w, xv.T @ g)
                _accumulate(b, g.sum(axis=0, keepdims=True))

        return self._node(out_value, backward)

    def couple(self, u: Tensor, s: Tensor, t: Tensor, alpha: float) -> Tensor:
        """Fused affine-coupling half: u * exp(clamp(s)) + t.

        clamp(s) = alpha * tanh(s / alpha) keeps the effective exponent in
        (-alpha, alpha) so the transform stays numerically invertible.
        """
        self._binary(u, s, "couple")
        self._binary(u, t, "couple")
        cs = alpha * np.tanh(s.value / alpha)
        es = np.exp(cs)
        uv = u.value

        def backward(g):
            ge = g * es
            _accumulate(u, ge)
            _accumulate(s, ge * uv * (1.0 - (cs / alpha) ** 2))
            _accumulate(t, g)

        return self._node(uv * es + t.value, backward)

    def uncouple(self, v: Tensor, s: Tensor, t: Tensor, alpha: float) -> Tensor:
        """Fused inverse coupling half: (v - t) * exp(-clamp(s))."""
        self._binary(v, s, "uncouple")
        self._binary(v, t, "uncouple")
        cs = alpha * np.tanh(s.value / alpha)
        ens = np.exp(-cs)
        diff = v.value - t.value
        out_value = diff * ens

        def backward(g):
            ge = g * ens
            _accumulate(v, ge)
            _accumulate(t, -ge)
            _accumulate(s, -g * out_value * (1.0 - (cs / alpha) ** 2))

        return self._node(out_value, backward)

    def pairwise_distance(self, a: Tensor, b: Tensor, mask_diagonal: bool = False) -> Tensor:
        """Fused Euclidean distance matrix D_ij = ||a_i - b_j|| between row sets.

        With ``mask_diagonal`` the diagonal gets a synthetic distance of 1 and
        receives no gradient (used by estimators that exclude self-pairs). A
        1e-30 floor inside the square root keeps coincident points finite.
        """
        if a.value.shape[1] != b.value.shape[1]:
            raise ShapeError(
                f"pairwise_distance: dims differ: {a.value.shape} vs {b.value.shape}"
            )
        av, bv = a.value, b.value
        sq = (av * av).sum(axis=1)[:, None] + (bv * bv).sum(axis=1)[None, :]
        sq -= 2.0 * (av @ bv.T)
        np.maximum(sq, 0.0, out=sq)
        if mask_diagonal:
            sq[np.diag_indices(min(sq.shape))] = 1.0
        dist = np.sqrt(sq + 1e-30)

        def backward(g):
            w = g / dist
            if mask_diagonal:
                w = w.copy()
                w[np.diag_indices(min(w.shape))] = 0.0
            _accumulate(a, w.sum(axis=1)[:, None] * av - w @ bv)
            _accumulate(b, w.sum(axis=0)[:, None] * bv - w.T @ av)

        return self._node(dist, backward)

    def imq_mean_sum(self, dist: Tensor, bandwidths, exclude_diagonal: bool) -> Tensor:
        """Fused inverse-multiquadratic kernel mean, summed over bandwidths.

        value = sum_h mean_ij 1 / (1 + D_ij / h); with ``exclude_diagonal`` the
        mean runs over off-diagonal entries only (requires n > 1).
        """
        n, m = dist.value.shape
        if exclude_diagonal and n < 2:
            raise GraphError("imq_mean_sum: diagonal exclusion needs at least 2 samples")
        denom = n * (n - 1) if exclude_diagonal else n * m
        mask = None
        if exclude_diagonal:
            mask = 1.0 - np.eye(n)
        kernels = [1.0 / (1.0 + dist.value / h) for h in bandwidths]
        total = 0.0
        for kernel in kernels:
            total += float((kernel * mask).sum() if mask is not None else kernel.sum())
        total /= denom

        def backward(g):
            grad = np.zeros_like(dist.value)
            for h, kernel in zip(bandwidths, kernels):
                grad -= kernel * kernel / h
            grad *= g[0, 0] / denom
            if mask is not None:
                grad *= mask
            _accumulate(dist, grad)

        return self._node(np.array([[total]]), backward)

    # ---------------------------------------------------------------- backward

    def backward(self, root: Tensor) -> None:
        """Populate gradients of every node reachable from ``root``.

        Leaves not reachable from the root receive an exact zero gradient.
        """
        if root.value.shape != (1, 1):
            raise GraphError(f"backward root must be scalar (1, 1), got {root.value.shape}")
        root.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
        for leaf in self.leaves:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.value)
