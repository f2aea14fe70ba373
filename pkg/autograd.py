"""
Energy-Inspired Models - Differentiable Computation Engine

Define-by-run reverse-mode automatic differentiation over float64 numpy arrays.
Every vector-Jacobian product is written with the same tracked operations as the
forward pass, so gradients can themselves be differentiated (nested taping).
"""

import itertools
import logging
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config import config


logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int]
Vjp = Callable[["Tensor", "Tensor"], Sequence[Optional["Tensor"]]]

_creation_order = itertools.count()
_mode = threading.local()
_debug_checks = config.engine.debug_checks


class NonFiniteError(FloatingPointError):
    """A forward value or gradient became NaN or infinite."""

    def __init__(self, message: str, node: Optional["Tensor"] = None):
        super().__init__(message)
        self.node = node


def _grad_enabled() -> bool:
    return getattr(_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording parents (thread-local)."""
    previous = _grad_enabled()
    _mode.enabled = False
    try:
        yield
    finally:
        _mode.enabled = previous


@contextmanager
def enable_grad() -> Iterator[None]:
    """Re-enable recording inside a no_grad block."""
    previous = _grad_enabled()
    _mode.enabled = True
    try:
        yield
    finally:
        _mode.enabled = previous


def set_debug(enabled: bool) -> bool:
    """
    Toggle eager non-finite checks at node creation.

    Returns:
        The previous setting
    """
    global _debug_checks
    previous = _debug_checks
    _debug_checks = bool(enabled)
    return previous


class Tensor:
    """
    Dense float64 array with an optional link into the computation graph.

    Leaves created with requires_grad=True are differentiable inputs; every
    operation on them produces a node that remembers its parents and how to
    push an adjoint back to them.
    """

    __slots__ = ("value", "parents", "vjp", "op", "name", "requires_grad", "index")
    __array_ufunc__ = None

    def __init__(
        self,
        value: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        op: str = "leaf",
    ):
        if isinstance(value, Tensor):
            value = value.value
        self.value = np.asarray(value, dtype=np.float64)
        self.parents: Tuple["Tensor", ...] = ()
        self.vjp: Optional[Vjp] = None
        self.op = op
        self.name = name
        self.requires_grad = requires_grad
        self.index = next(_creation_order)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.value)

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def __len__(self) -> int:
        return len(self.value)

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"Tensor({label}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(other, self)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(op: str, value: np.ndarray, parents: Sequence[Tensor], vjp: Vjp) -> Tensor:
    out = Tensor(value, op=op)
    if _debug_checks and not np.all(np.isfinite(out.value)):
        raise NonFiniteError(f"Non-finite value produced by '{op}' (node {out.index})", node=out)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.parents = tuple(parents)
        out.vjp = vjp
        out.requires_grad = True
    return out


def _keep_shape(shape: Tuple[int, ...], axis: Optional[int]) -> Tuple[int, ...]:
    if axis is None:
        return (1,) * len(shape)
    axis = axis % len(shape)
    return tuple(1 if i == axis else n for i, n in enumerate(shape))


# Broadcasting

def sum_to(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    """Sum a broadcast array back down to `shape`."""
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    lead = a.ndim - len(shape)
    value = a.value.sum(axis=tuple(range(lead))) if lead > 0 else a.value
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and value.shape[i] != 1)
    if axes:
        value = value.sum(axis=axes, keepdims=True)
    source = a.shape
    return _make("sum_to", value.reshape(shape), (a,), lambda g, out: (broadcast_to(g, source),))


def broadcast_to(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    source = a.shape
    value = np.broadcast_to(a.value, shape).copy()
    return _make("broadcast_to", value, (a,), lambda g, out: (sum_to(g, source),))


# Elementwise arithmetic

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g: Tensor, out: Tensor):
        return (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(g, b.shape) if b.requires_grad else None,
        )

    return _make("add", a.value + b.value, (a, b), vjp)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g: Tensor, out: Tensor):
        return (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(neg(g), b.shape) if b.requires_grad else None,
        )

    return _make("sub", a.value - b.value, (a, b), vjp)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g: Tensor, out: Tensor):
        return (
            sum_to(mul(g, b), a.shape) if a.requires_grad else None,
            sum_to(mul(g, a), b.shape) if b.requires_grad else None,
        )

    return _make("mul", a.value * b.value, (a, b), vjp)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g: Tensor, out: Tensor):
        return (
            sum_to(div(g, b), a.shape) if a.requires_grad else None,
            sum_to(neg(div(mul(g, out), b)), b.shape) if b.requires_grad else None,
        )

    return _make("div", a.value / b.value, (a, b), vjp)


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make("neg", -a.value, (a,), lambda g, out: (neg(g),))


def power(a: ArrayLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    exponent = float(exponent)

    def vjp(g: Tensor, out: Tensor):
        return (mul(g, mul(exponent, power(a, exponent - 1.0))),)

    return _make("power", a.value ** exponent, (a,), vjp)


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make("exp", np.exp(a.value), (a,), lambda g, out: (mul(g, out),))


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore"):
        value = np.log(a.value)
    return _make("log", value, (a,), lambda g, out: (div(g, a),))


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)

    def vjp(g: Tensor, out: Tensor):
        return (mul(g, sub(1.0, mul(out, out))),)

    return _make("tanh", np.tanh(a.value), (a,), vjp)


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    value = 0.5 * (1.0 + np.tanh(0.5 * a.value))

    def vjp(g: Tensor, out: Tensor):
        return (mul(g, mul(out, sub(1.0, out))),)

    return _make("sigmoid", value, (a,), vjp)


def softplus(a: ArrayLike) -> Tensor:
    """log(1 + exp(a)), stable for large |a|."""
    a = as_tensor(a)
    return _make("softplus", np.logaddexp(0.0, a.value), (a,), lambda g, out: (mul(g, sigmoid(a)),))


def log_sigmoid(a: ArrayLike) -> Tensor:
    """log σ(a) = −softplus(−a)."""
    a = as_tensor(a)
    value = -np.logaddexp(0.0, -a.value)
    return _make("log_sigmoid", value, (a,), lambda g, out: (mul(g, sigmoid(neg(a))),))


# Linear algebra and shape

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got shapes {a.shape} and {b.shape}")

    def vjp(g: Tensor, out: Tensor):
        return (
            matmul(g, transpose(b)) if a.requires_grad else None,
            matmul(transpose(a), g) if b.requires_grad else None,
        )

    return _make("matmul", a.value @ b.value, (a, b), vjp)


def transpose(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make("transpose", a.value.T.copy(), (a,), lambda g, out: (transpose(g),))


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    source = a.shape
    return _make("reshape", a.value.reshape(shape), (a,), lambda g, out: (reshape(g, source),))


def sum_(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    source = a.shape
    kept = _keep_shape(source, axis)

    def vjp(g: Tensor, out: Tensor):
        return (broadcast_to(reshape(g, kept), source),)

    return _make("sum", a.value.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return div(sum_(a, axis=axis, keepdims=keepdims), float(count))


def getitem(a: ArrayLike, index) -> Tensor:
    a = as_tensor(a)
    source = a.shape
    return _make(
        "getitem",
        np.array(a.value[index], dtype=np.float64),
        (a,),
        lambda g, out: (scatter(g, index, source),),
    )


def scatter(g: ArrayLike, index, shape: Tuple[int, ...]) -> Tensor:
    """Zeros of `shape` with g added at `index` (adjoint of getitem)."""
    g = as_tensor(g)
    value = np.zeros(shape)
    np.add.at(value, index, g.value)
    return _make("scatter", value, (g,), lambda gg, out: (getitem(gg, index),))


def concatenate(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    axis = axis % parts[0].ndim
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def vjp(g: Tensor, out: Tensor):
        grads = []
        for part, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if not part.requires_grad:
                grads.append(None)
                continue
            index = (slice(None),) * axis + (slice(int(lo), int(hi)),)
            grads.append(getitem(g, index))
        return grads

    value = np.concatenate([p.value for p in parts], axis=axis)
    return _make("concatenate", value, parts, vjp)


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    expanded = [reshape(p, p.shape[:axis] + (1,) + p.shape[axis:]) for p in parts]
    return concatenate(expanded, axis=axis)


def logsumexp(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    """
    Stable log Σ exp(a) along an axis.

    Raises:
        ValueError: If the reduced input is empty
    """
    a = as_tensor(a)
    if a.size == 0 or (axis is not None and a.shape[axis] == 0):
        raise ValueError("logsumexp of an empty input is undefined")
    peak = np.max(a.value, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore"):
        value = np.log(np.sum(np.exp(a.value - peak), axis=axis, keepdims=True)) + peak
    if not keepdims:
        value = value.reshape(np.sum(a.value, axis=axis).shape)
    kept = _keep_shape(a.shape, axis)

    def vjp(g: Tensor, out: Tensor):
        return (mul(reshape(g, kept), exp(sub(a, reshape(out, kept)))),)

    return _make("logsumexp", value, (a,), vjp)


# Graph traversal

class Graph:
    """
    Nodes on a path from `inputs` to `output`, in creation order.

    Creation order is a valid topological order because a node's parents
    always exist before it does. Without `inputs`, every recorded ancestor
    of the output is included.
    """

    def __init__(self, output: Tensor, inputs: Optional[Sequence[Tensor]] = None):
        self.output = output
        self.inputs = list(inputs) if inputs is not None else None
        stops = {id(t) for t in self.inputs} if self.inputs is not None else set()

        reachable: Dict[int, Tensor] = {}
        pending = [output]
        while pending:
            node = pending.pop()
            if id(node) in reachable or not node.requires_grad:
                continue
            reachable[id(node)] = node
            if id(node) not in stops:
                pending.extend(node.parents)

        ordered = sorted(reachable.values(), key=lambda n: n.index)
        if self.inputs is not None:
            depends = set(stops)
            for node in ordered:
                if id(node) not in depends and any(id(p) in depends for p in node.parents):
                    depends.add(id(node))
            ordered = [n for n in ordered if id(n) in depends]

        self.nodes: List[Tensor] = ordered
        self._members = {id(n) for n in ordered}
        self._stops = stops
        self.adjoint_updates = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def check_finite(self) -> None:
        """Raise NonFiniteError naming the first node with a NaN/Inf value."""
        for node in self.nodes:
            if not np.all(np.isfinite(node.value)):
                label = f" '{node.name}'" if node.name else ""
                raise NonFiniteError(
                    f"Non-finite value in node {node.index}{label} (op '{node.op}')", node=node
                )

    def backward(self, seed: Tensor, create_graph: bool = False) -> Dict[int, Tensor]:
        """
        Propagate `seed` from the output back through the graph.

        Each node's adjoint is finalized and pushed to its parents exactly once.

        Returns:
            Mapping from id(node) to its adjoint
        """
        adjoints: Dict[int, Tensor] = {id(self.output): seed}
        mode = enable_grad() if create_graph else no_grad()
        with mode:
            for node in reversed(self.nodes):
                g = adjoints.get(id(node))
                if g is None:
                    continue
                self.adjoint_updates += 1
                if id(node) in self._stops or node.vjp is None:
                    continue
                for parent, contribution in zip(node.parents, node.vjp(g, node)):
                    if contribution is None or id(parent) not in self._members:
                        continue
                    previous = adjoints.get(id(parent))
                    adjoints[id(parent)] = contribution if previous is None else add(previous, contribution)
        return adjoints


def grad(
    output: Tensor,
    inputs: Sequence[Tensor],
    grad_output: Optional[ArrayLike] = None,
    create_graph: bool = False,
) -> List[Tensor]:
    """
    Vector-Jacobian product of `output` with respect to each input.

    Args:
        output: Node to differentiate
        inputs: Tensors to differentiate with respect to
        grad_output: Seed adjoint (defaults to ones)
        create_graph: Record the backward pass so the result is differentiable

    Returns:
        One adjoint per input, zeros where the output does not depend on it
    """
    seed = as_tensor(np.ones_like(output.value) if grad_output is None else grad_output)
    if seed.shape != output.shape:
        raise ValueError(f"grad_output shape {seed.shape} does not match output {output.shape}")
    if not output.requires_grad:
        return [Tensor(np.zeros_like(x.value)) for x in inputs]
    graph = Graph(output, inputs)
    adjoints = graph.backward(seed, create_graph=create_graph)
    results = []
    for x in inputs:
        g = adjoints.get(id(x))
        results.append(g if g is not None else Tensor(np.zeros_like(x.value)))
    return results


def gradient(loss: Tensor, params: "ParamStore") -> Dict[str, np.ndarray]:
    """
    Accumulate ∂loss/∂θ into the store for every parameter θ.

    Raises:
        ValueError: If the loss is not a scalar
        NonFiniteError: If any node feeding the parameters' gradient is NaN/Inf
    """
    if loss.size != 1:
        raise ValueError(f"gradient() needs a scalar loss, got shape {loss.shape}")
    names = params.names()
    tensors = params.tensors()
    grads: Dict[str, np.ndarray] = {name: np.zeros_like(t.value) for name, t in zip(names, tensors)}
    if not np.isfinite(loss.value).all():
        raise NonFiniteError(f"Non-finite loss in node {loss.index} (op '{loss.op}')", node=loss)
    if loss.requires_grad:
        graph = Graph(loss, tensors)
        graph.check_finite()
        adjoints = graph.backward(Tensor(np.ones_like(loss.value)))
        for name, t in zip(names, tensors):
            g = adjoints.get(id(t))
            if g is not None:
                grads[name] = g.value
        logger.debug(f"Backward pass over {len(graph)} nodes ({graph.adjoint_updates} adjoint updates)")
    params.accumulate(grads)
    return grads


def input_gradient(fn: Callable[[Tensor], Tensor], x: ArrayLike) -> Tensor:
    """
    ∇ₓ of a per-row scalar network, as a differentiable graph node.

    Args:
        fn: Maps a (B, d) batch to B energies
        x: Batch of inputs

    Returns:
        (B, d) gradient, differentiable w.r.t. x and the network's parameters

    Raises:
        ValueError: If fn does not return one scalar per row
    """
    x = as_tensor(x)
    if not x.requires_grad:
        x = Tensor(x.value, requires_grad=True)
    with enable_grad():
        energies = fn(x)
        if energies.shape != x.shape[:1]:
            raise ValueError(
                f"Energy must return one scalar per row: got shape {energies.shape} for input {x.shape}"
            )
        (g,) = grad(sum_(energies), [x], create_graph=True)
    return g


class ParamStore:
    """
    Named trainable tensors with gradient accumulators.

    Accumulation is serialized with a lock so data-parallel workers can add
    their contributions to a shared store.
    """

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._grads: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def add(self, name: str, value: ArrayLike) -> Tensor:
        if name in self._params:
            raise ValueError(f"Parameter '{name}' already registered")
        tensor = Tensor(np.array(as_tensor(value).value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = tensor
        self._grads[name] = np.zeros_like(tensor.value)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def tensors(self) -> List[Tensor]:
        return list(self._params.values())

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def set_value(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._params[name].shape:
            raise ValueError(f"Shape mismatch for '{name}': {value.shape} vs {self._params[name].shape}")
        self._params[name].value = value.copy()

    def accumulate(self, grads: Mapping[str, np.ndarray]) -> None:
        with self._lock:
            for name, g in grads.items():
                g = np.asarray(g, dtype=np.float64)
                if g.shape != self._grads[name].shape:
                    raise ValueError(f"Gradient shape {g.shape} does not match parameter '{name}'")
                self._grads[name] = self._grads[name] + g

    def zero_grad(self) -> None:
        with self._lock:
            for name in self._grads:
                self._grads[name] = np.zeros_like(self._params[name].value)

    def scale_grads(self, factor: float) -> None:
        with self._lock:
            for name in self._grads:
                self._grads[name] = self._grads[name] * factor

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self._grads.values())))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise ValueError(f"State mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, value in state.items():
            self.set_value(name, value)
