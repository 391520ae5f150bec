"""Reverse-mode autodiff over a static graph of numpy arrays.

The graph is built once and then re-evaluated with different parameter
vectors and input feeds. Each evaluation owns its value buffers, so a graph
can be shared read-only between callers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "sigmoid",
    "GraphError",
    "ShapeError",
    "Evaluation",
    "GradCheckReport",
    "evaluate_graph",
    "gradient",
    "check_gradients",
]


class GraphError(Exception):
    """Raised for malformed graphs or misuse of an evaluation."""


class ShapeError(GraphError):
    def __init__(self, node: int, op: str, message: str):
        super().__init__(f"node {node} ({op}): {message}")
        self.node = node
        self.op = op


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    shape: tuple[int, ...]
    attrs: dict = field(default_factory=dict)
    needs_grad: bool = False


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _exclusive_prod(a, axis):
    """Product of all other entries along ``axis``, computed without division."""
    a = np.moveaxis(a, axis, -1)
    ones = np.ones(a.shape[:-1] + (1,))
    left = np.cumprod(np.concatenate([ones, a[..., :-1]], axis=-1), axis=-1)
    right = np.cumprod(np.concatenate([ones, a[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return np.moveaxis(left * right, -1, axis)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Evaluation:
    """Value buffers (and saved intermediates) for one pass over a graph."""

    def __init__(self, graph: "Graph", values: list, saved: dict):
        self.graph = graph
        self.values = values
        self.saved = saved

    def __getitem__(self, node: int) -> np.ndarray:
        return self.values[node]


class Graph:
    """A topologically ordered list of array-valued nodes.

    Parameters are slices of a single flat float64 vector. Inputs are
    placeholders whose values are supplied per evaluation.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.n_params = 0
        self._param_nodes: list[int] = []

    # -- construction -------------------------------------------------
    def _add(self, op, inputs=(), shape=(), needs_grad=None, **attrs) -> int:
        inputs = tuple(int(i) for i in inputs)
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise GraphError(f"{op}: input {i} does not refer to an earlier node")
        if needs_grad is None:
            needs_grad = any(self.nodes[i].needs_grad for i in inputs)
        self.nodes.append(Node(op, inputs, tuple(shape), attrs, needs_grad))
        return len(self.nodes) - 1

    def _shape(self, i):
        return self.nodes[i].shape

    def _broadcast(self, op, a, b):
        try:
            return np.broadcast_shapes(self._shape(a), self._shape(b))
        except ValueError:
            raise ShapeError(len(self.nodes), op,
                             f"cannot broadcast {self._shape(a)} with {self._shape(b)}") from None

    def _axis(self, op, a, axis):
        nd = len(self._shape(a))
        if not -nd <= axis < nd:
            raise ShapeError(len(self.nodes), op, f"axis {axis} out of range for {self._shape(a)}")
        return axis % nd

    def constant(self, value) -> int:
        value = np.asarray(value, dtype=np.float64)
        return self._add("constant", (), value.shape, needs_grad=False, value=value)

    def input(self, shape, name: str = "", dtype=np.float64) -> int:
        return self._add("input", (), tuple(shape), needs_grad=False, name=name, dtype=dtype)

    def parameter(self, shape) -> int:
        shape = tuple(shape)
        size = int(np.prod(shape)) if shape else 1
        node = self._add("parameter", (), shape, needs_grad=True, offset=self.n_params, size=size)
        self.n_params += size
        self._param_nodes.append(node)
        return node

    def sigmoid(self, a):
        return self._add("sigmoid", (a,), self._shape(a))

    def one_minus(self, a):
        return self._add("one_minus", (a,), self._shape(a))

    def log(self, a, eps: float = 0.0):
        return self._add("log", (a,), self._shape(a), eps=float(eps))

    def mul(self, a, b):
        return self._add("mul", (a, b), self._broadcast("mul", a, b))

    def add(self, a, b):
        return self._add("add", (a, b), self._broadcast("add", a, b))

    def scale(self, a, c: float):
        return self._add("scale", (a,), self._shape(a), c=float(c))

    def prod_reduce(self, a, axis: int = -1):
        ax = self._axis("prod_reduce", a, axis)
        shape = self._shape(a)[:ax] + self._shape(a)[ax + 1:]
        return self._add("prod_reduce", (a,), shape, axis=ax)

    def max_reduce(self, a, axis: int = -1):
        ax = self._axis("max_reduce", a, axis)
        if self._shape(a)[ax] == 0:
            raise ShapeError(len(self.nodes), "max_reduce", "empty reduction axis")
        shape = self._shape(a)[:ax] + self._shape(a)[ax + 1:]
        return self._add("max_reduce", (a,), shape, axis=ax)

    def sum_reduce(self, a, axis: int | None = None):
        if axis is None:
            return self._add("sum_reduce", (a,), (), axis=None)
        ax = self._axis("sum_reduce", a, axis)
        shape = self._shape(a)[:ax] + self._shape(a)[ax + 1:]
        return self._add("sum_reduce", (a,), shape, axis=ax)

    def gather(self, a, index):
        """Flat take: ``out = a.ravel()[index]``."""
        index = np.asarray(index, dtype=np.intp)
        size = int(np.prod(self._shape(a)))
        if index.size and (index.min() < 0 or index.max() >= size):
            raise ShapeError(len(self.nodes), "gather", f"index out of bounds for size {size}")
        return self._add("gather", (a,), index.shape, index=index)

    def concat(self, parts):
        parts = list(parts)
        for p in parts:
            if len(self._shape(p)) != 1:
                raise ShapeError(len(self.nodes), "concat", f"expects 1-D inputs, got {self._shape(p)}")
        sizes = [self._shape(p)[0] for p in parts]
        return self._add("concat", parts, (sum(sizes),), sizes=sizes)

    def reshape(self, a, shape):
        shape = tuple(shape)
        if int(np.prod(shape)) != int(np.prod(self._shape(a))):
            raise ShapeError(len(self.nodes), "reshape", f"cannot reshape {self._shape(a)} to {shape}")
        return self._add("reshape", (a,), shape)

    def conj(self, x, m):
        """Membership-gated conjunction: ``prod_l (1 - m[r,l] (1 - x[..., l]))``.

        ``x`` has shape (..., L) and ``m`` has shape (R, L); output is (..., R).
        """
        xs, ms = self._shape(x), self._shape(m)
        if len(ms) != 2 or not xs or xs[-1] != ms[1]:
            raise ShapeError(len(self.nodes), "conj", f"incompatible shapes {xs} and {ms}")
        return self._add("conj", (x, m), xs[:-1] + (ms[0],))

    def softmax_xent(self, logits, target):
        """``-log softmax(logits)[target]`` for a 1-D logits node and an integer input node."""
        if len(self._shape(logits)) != 1:
            raise ShapeError(len(self.nodes), "softmax_xent", "logits must be 1-D")
        return self._add("softmax_xent", (logits, target), (), needs_grad=self.nodes[logits].needs_grad)

    def param_nodes(self) -> list[int]:
        return list(self._param_nodes)

    # -- evaluation ---------------------------------------------------
    def evaluate(self, params=None, feeds=None, upto: int | None = None) -> Evaluation:
        params = np.zeros(0) if params is None else np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise GraphError(f"expected {self.n_params} parameters, got shape {params.shape}")
        feeds = feeds or {}
        last = len(self.nodes) if upto is None else upto + 1
        values: list = [None] * len(self.nodes)
        saved: dict = {}
        for i in range(last):
            node = self.nodes[i]
            ins = [values[j] for j in node.inputs]
            values[i] = self._forward(i, node, ins, params, feeds, saved)
        return Evaluation(self, values, saved)

    def _forward(self, i, node, ins, params, feeds, saved):
        op = node.op
        if op == "constant":
            return node.attrs["value"]
        if op == "input":
            if i not in feeds:
                raise GraphError(f"node {i} (input {node.attrs['name']!r}) was not fed")
            v = np.asarray(feeds[i], dtype=node.attrs["dtype"])
            if v.shape != node.shape:
                raise ShapeError(i, "input", f"fed shape {v.shape}, declared {node.shape}")
            return v
        if op == "parameter":
            o, n = node.attrs["offset"], node.attrs["size"]
            return params[o:o + n].reshape(node.shape)
        if op == "sigmoid":
            return sigmoid(np.asarray(ins[0], dtype=np.float64))
        if op == "one_minus":
            return 1.0 - ins[0]
        if op == "log":
            return np.log(ins[0] + node.attrs["eps"])
        if op == "mul":
            return ins[0] * ins[1]
        if op == "add":
            return ins[0] + ins[1]
        if op == "scale":
            return node.attrs["c"] * ins[0]
        if op == "prod_reduce":
            return np.prod(ins[0], axis=node.attrs["axis"])
        if op == "max_reduce":
            return np.max(ins[0], axis=node.attrs["axis"])
        if op == "sum_reduce":
            return np.sum(ins[0], axis=node.attrs["axis"])
        if op == "gather":
            return ins[0].reshape(-1)[node.attrs["index"]]
        if op == "concat":
            return np.concatenate(ins)
        if op == "reshape":
            return ins[0].reshape(node.shape)
        if op == "conj":
            return self._conj_forward(i, node, ins[0], ins[1], saved)
        if op == "softmax_xent":
            z = ins[0]
            t = int(ins[1])
            zmax = z.max()
            lse = zmax + np.log(np.exp(z - zmax).sum())
            return np.float64(lse - z[t])
        raise GraphError(f"node {i}: unknown op {op!r}")

    def _conj_forward(self, i, node, x, m, saved):
        lead = x.shape[:-1]
        x2 = x.reshape(-1, x.shape[-1])
        crisp = not self.nodes[node.inputs[0]].needs_grad and bool(np.all((x2 == 0.0) | (x2 == 1.0)))
        if crisp:
            # 0/1 inputs: the product becomes a matrix product in log space.
            nx = 1.0 - x2
            pinned = m >= 1.0
            mp = np.where(pinned, 0.0, m)
            s = nx @ np.log1p(-mp).T
            zeros = nx @ pinned.T.astype(np.float64)
            es = np.exp(s)
            out = es * (zeros == 0)
            saved[i] = ("crisp", nx, pinned, mp, es, zeros, out)
        else:
            f = 1.0 - m[None, :, :] * (1.0 - x2[:, None, :])
            out = np.prod(f, axis=-1)
            saved[i] = ("dense", x2, f)
        return out.reshape(lead + (m.shape[0],))

    # -- differentiation ----------------------------------------------
    def backward(self, ev: Evaluation, output: int) -> list:
        """Adjoints of ``output`` w.r.t. every node (``None`` where unused)."""
        if ev.values[output] is None:
            raise GraphError(f"node {output} was not evaluated")
        if np.ndim(ev.values[output]) != 0:
            raise GraphError(f"output node {output} is not scalar (shape {np.shape(ev.values[output])})")
        adj: list = [None] * len(self.nodes)
        adj[output] = np.float64(1.0)
        for i in range(output, -1, -1):
            g = adj[i]
            node = self.nodes[i]
            if g is None or not node.needs_grad or not node.inputs:
                continue
            ins = [ev.values[j] for j in node.inputs]
            for j, gj in zip(node.inputs, self._backward(i, node, ins, ev, g)):
                if gj is None or not self.nodes[j].needs_grad:
                    continue
                adj[j] = gj if adj[j] is None else adj[j] + gj
        return adj

    def _backward(self, i, node, ins, ev, g):
        op = node.op
        out = ev.values[i]
        if op == "sigmoid":
            return [g * out * (1.0 - out)]
        if op == "one_minus":
            return [-g]
        if op == "log":
            return [g / (ins[0] + node.attrs["eps"])]
        if op == "mul":
            a, b = ins
            return [_unbroadcast(g * b, np.shape(a)), _unbroadcast(g * a, np.shape(b))]
        if op == "add":
            return [_unbroadcast(g, np.shape(ins[0])), _unbroadcast(np.broadcast_to(g, np.shape(out)), np.shape(ins[1]))]
        if op == "scale":
            return [node.attrs["c"] * g]
        if op == "prod_reduce":
            ax = node.attrs["axis"]
            return [np.expand_dims(g, ax) * _exclusive_prod(ins[0], ax)]
        if op == "max_reduce":
            ax = node.attrs["axis"]
            a = ins[0]
            idx = np.expand_dims(np.argmax(a, axis=ax), ax)
            grad = np.zeros_like(a)
            np.put_along_axis(grad, idx, np.expand_dims(g, ax), axis=ax)
            return [grad]
        if op == "sum_reduce":
            ax = node.attrs["axis"]
            shape = np.shape(ins[0])
            if ax is None:
                return [np.full(shape, float(g))]
            return [np.broadcast_to(np.expand_dims(g, ax), shape).copy()]
        if op == "gather":
            grad = np.zeros(np.size(ins[0]))
            np.add.at(grad, node.attrs["index"].ravel(), np.ravel(g))
            return [grad.reshape(np.shape(ins[0]))]
        if op == "concat":
            bounds = np.cumsum([0] + node.attrs["sizes"])
            return [g[bounds[k]:bounds[k + 1]] for k in range(len(ins))]
        if op == "reshape":
            return [np.reshape(g, np.shape(ins[0]))]
        if op == "conj":
            return self._conj_backward(i, ins, ev, g)
        if op == "softmax_xent":
            z = ins[0]
            p = np.exp(z - z.max())
            p /= p.sum()
            p[int(ins[1])] -= 1.0
            return [g * p, None]
        raise GraphError(f"node {i}: no gradient for op {op!r}")

    def _conj_backward(self, i, ins, ev, g):
        x, m = ins
        r = m.shape[0]
        g2 = np.reshape(g, (-1, r))
        kind = ev.saved[i][0]
        if kind == "crisp":
            _, nx, pinned, mp, es, zeros, out = ev.saved[i]
            gm = -((g2 * out).T @ nx) / (1.0 - mp)
            if pinned.any():
                gp = -((g2 * es * (zeros == 1)).T @ nx)
                gm = np.where(pinned, gp, gm)
            return [None, gm]
        _, x2, f = ev.saved[i]
        gf = g2[:, :, None] * _exclusive_prod(f, -1)
        gx = (gf * m[None, :, :]).sum(axis=1).reshape(x.shape)
        gm = -(gf * (1.0 - x2[:, None, :])).sum(axis=0)
        return [gx, gm]

    def gradient(self, ev: Evaluation, output: int) -> np.ndarray:
        """d(output)/d(parameters) as a flat vector."""
        adj = self.backward(ev, output)
        grad = np.zeros(self.n_params)
        for p in self._param_nodes:
            if adj[p] is not None:
                o, n = self.nodes[p].attrs["offset"], self.nodes[p].attrs["size"]
                grad[o:o + n] = np.ravel(adj[p])
        return grad


def evaluate_graph(graph: Graph, parameter_values, feeds=None) -> list:
    """Evaluate every node; returns the list of node values."""
    return graph.evaluate(parameter_values, feeds).values


def gradient(graph: Graph, ev: Evaluation, output: int) -> np.ndarray:
    return graph.gradient(ev, output)


@dataclass
class GradCheckReport:
    rel_errors: dict[int, float]
    skipped: list[int]
    flagged: list[int]

    @property
    def max_rel_error(self) -> float:
        return max(self.rel_errors.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return not self.flagged

    def __len__(self):
        return len(self.rel_errors) + len(self.skipped)


def check_gradients(graph: Graph, params, output: int, feeds=None,
                    epsilon: float = 1e-5, tolerance: float = 1e-4,
                    floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    Parameters that move a near-tied max-reduce (gap within ``10 * epsilon``
    on a slice that reaches the output) are reported as skipped.
    """
    params = np.array(params, dtype=np.float64)
    base = graph.evaluate(params, feeds)
    analytic = graph.gradient(base, output) if graph.n_params else np.zeros(0)
    adj = graph.backward(base, output) if graph.n_params else []
    band = 10 * epsilon

    tied = {}
    for i, node in enumerate(graph.nodes):
        if node.op != "max_reduce" or adj[i] is None:
            continue
        a = np.moveaxis(base.values[node.inputs[0]], node.attrs["axis"], -1)
        if a.shape[-1] < 2:
            continue
        top = np.sort(a, axis=-1)
        near = (top[..., -1] - top[..., -2] <= band) & (np.asarray(adj[i]) != 0)
        if near.any():
            tied[i] = (near, a)

    rel, skipped, flagged = {}, [], []
    for k in range(graph.n_params):
        hi, lo = params.copy(), params.copy()
        hi[k] += epsilon
        lo[k] -= epsilon
        ev_hi, ev_lo = graph.evaluate(hi, feeds), graph.evaluate(lo, feeds)
        nonsmooth = False
        for i, (near, a) in tied.items():
            ax = graph.nodes[i].attrs["axis"]
            b = np.moveaxis(ev_hi.values[graph.nodes[i].inputs[0]], ax, -1)
            c = np.moveaxis(ev_lo.values[graph.nodes[i].inputs[0]], ax, -1)
            if np.any((b != a)[near]) or np.any((c != a)[near]):
                nonsmooth = True
                break
        if nonsmooth:
            skipped.append(k)
            continue
        numeric = (float(ev_hi.values[output]) - float(ev_lo.values[output])) / (2 * epsilon)
        err = abs(analytic[k] - numeric) / max(abs(analytic[k]), abs(numeric), floor)
        rel[k] = err
        if err > tolerance:
            flagged.append(k)
    return GradCheckReport(rel, skipped, flagged)
