"""
Neural Core Services for adaptlab.

A small differentiable-computation substrate on numpy float64:

- Tensor: value plus a recorded backward rule; ``backward`` walks the graph
  in reverse topological order and accumulates into leaf gradients
- The handful of ops the estimator and policy networks need, including a
  fused LSTM cell with a hand-written backward pass
- ParameterStore: named parameters, gradient buffers, freezing, fingerprints
- SGD and Adam updates behind ``optimizer_step``
- SequenceEncoder (LSTM), Feedforward (MLP) and softmax attention
- Batched numpy passes over padded minibatches for replay training
- Central finite-difference gradient verification
- Text checkpoint format that round-trips bit-exactly

Graphs are only recorded when at least one input requires a gradient, so
frozen networks run as plain numpy forward passes.
"""

import hashlib
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ShapeError, TrainingError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = 'adaptlab-checkpoint'
CHECKPOINT_VERSION = 1

ArrayLike = Union[np.ndarray, Sequence[float], float]


# =============================================================================
# TENSOR AND BACKWARD PASS
# =============================================================================

class Tensor:
    """A float64 array with an optional recorded backward rule."""

    __slots__ = ('value', 'grad', 'parents', 'backward_fn', 'requires_grad')

    def __init__(self, value: ArrayLike, parents: Tuple['Tensor', ...] = (),
                 backward_fn: Optional[Callable] = None, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __len__(self):
        return self.value.shape[0]

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, as_tensor(other))

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x: ArrayLike) -> Tensor:
    return Tensor(np.array(x, dtype=np.float64))


def detach(t: Tensor) -> Tensor:
    return Tensor(t.value.copy())


def _result(value, parents: Tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(value, parents, backward_fn, requires_grad=True)
    return Tensor(value)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Tensor, grad: Optional[ArrayLike] = None):
    """Accumulate d(root)/d(leaf) into every leaf that requires a gradient."""
    if not root.requires_grad:
        return
    if grad is None:
        if root.value.size != 1:
            raise ShapeError(f"backward() without a seed gradient needs a scalar, got shape {root.shape}")
        grad = np.ones_like(root.value)
    grads = {id(root): np.asarray(grad, dtype=np.float64)}

    for node in reversed(_topological_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.grad is None:
                node.grad = np.array(g, dtype=np.float64)
            else:
                node.grad += g
            continue
        for parent, parent_grad in zip(node.parents, node.backward_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


# =============================================================================
# OPS
# =============================================================================

def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, 'add')
    return _result(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, 'sub')
    return _result(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, 'mul')
    av, bv = a.value, b.value
    return _result(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.value * c, (a,), lambda g: (g * c,))


def square(a: Tensor) -> Tensor:
    av = a.value
    return _result(av * av, (a,), lambda g: (2.0 * av * g,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.value)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.value)
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a: Tensor) -> Tensor:
    mask = (a.value > 0).astype(np.float64)
    return _result(a.value * mask, (a,), lambda g: (g * mask,))


def total(a: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    shape = a.shape
    return _result(np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def matvec(w: Tensor, x: Tensor) -> Tensor:
    if w.value.ndim != 2 or x.value.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: cannot apply {w.shape} to {x.shape}")
    wv, xv = w.value, x.value
    return _result(wv @ xv, (w, x), lambda g: (np.outer(g, xv), wv.T @ g))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.value.ndim != 1 or w.shape != (b.shape[0], x.shape[0]):
        raise ShapeError(f"linear: weight {w.shape} / bias {b.shape} do not fit input {x.shape}")
    wv, xv = w.value, x.value
    return _result(wv @ xv + b.value, (x, w, b), lambda g: (wv.T @ g, np.outer(g, xv), g))


def dot(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, 'dot')
    av, bv = a.value, b.value
    return _result(np.asarray(av @ bv), (a, b), lambda g: (g * bv, g * av))


def concat(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat: nothing to concatenate")
    sizes = [p.shape[0] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.value for p in parts]), tuple(parts), back)


def slice_(a: Tensor, start: int, stop: int) -> Tensor:
    size = a.shape[0]

    def back(g):
        full = np.zeros(size)
        full[start:stop] = g
        return (full,)

    return _result(a.value[start:stop], (a,), back)


def stack(rows: Sequence[Tensor]) -> Tensor:
    if not rows:
        raise ShapeError("stack: nothing to stack")
    shape = rows[0].shape
    for row in rows:
        if row.shape != shape:
            raise ShapeError(f"stack: row shapes {shape} and {row.shape} differ")
    return _result(np.stack([r.value for r in rows]), tuple(rows), lambda g: tuple(g[i] for i in range(len(rows))))


def mean(rows: Sequence[Tensor]) -> Tensor:
    count = len(rows)
    if count == 0:
        raise ShapeError("mean: nothing to average")
    stacked = stack(rows)
    return _result(stacked.value.mean(axis=0), (stacked,), lambda g: (np.tile(g / count, (count, 1)),))


def softmax(a: Tensor) -> Tensor:
    z = a.value - a.value.max()
    e = np.exp(z)
    y = e / e.sum()
    return _result(y, (a,), lambda g: (y * (g - g @ y),))


def weighted_sum(weights: Tensor, rows: Tensor) -> Tensor:
    """``weights @ rows`` for weights (K,) and rows (K, d)."""
    if weights.value.ndim != 1 or rows.value.ndim != 2 or rows.shape[0] != weights.shape[0]:
        raise ShapeError(f"weighted_sum: weights {weights.shape} do not fit rows {rows.shape}")
    wv, rv = weights.value, rows.value
    return _result(wv @ rv, (weights, rows), lambda g: (rv @ g, np.outer(wv, g)))


def pick(a: Tensor, index: int) -> Tensor:
    size = a.shape[0]

    def back(g):
        full = np.zeros(size)
        full[index] = g
        return (full,)

    return _result(np.asarray(a.value[index]), (a,), back)


def log_softmax_pick(logits: Tensor, index: int) -> Tensor:
    """log softmax(logits)[index] as a scalar."""
    z = logits.value
    shift = z.max()
    e = np.exp(z - shift)
    p = e / e.sum()
    value = z[index] - shift - np.log(e.sum())

    def back(g):
        onehot = np.zeros_like(z)
        onehot[index] = 1.0
        return (g * (onehot - p),)

    return _result(np.asarray(value), (logits,), back)


def l1_loss(x: Tensor, y: Tensor) -> Tensor:
    """Sum of absolute differences; the subgradient at a tie is 0."""
    _same_shape(x, y, 'l1_loss')
    diff = x.value - y.value
    sign = np.sign(diff)
    return _result(np.asarray(np.abs(diff).sum()), (x, y), lambda g: (g * sign, -g * sign))


def lstm_cell(x: Tensor, state: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """
    One LSTM step. ``state`` and the result are ``concat(h, c)`` of size 2d;
    gate order in ``w`` rows is input, forget, output, candidate.
    """
    d = b.shape[0] // 4
    nx = x.shape[0]
    if w.shape != (4 * d, nx + d) or state.shape != (2 * d,):
        raise ShapeError(f"lstm_cell: input {x.shape}, state {state.shape} do not fit weight {w.shape}")

    h_prev, c_prev = state.value[:d], state.value[d:]
    xh = np.concatenate([x.value, h_prev])
    z = w.value @ xh + b.value
    i = _sigmoid(z[:d])
    f = _sigmoid(z[d:2 * d])
    o = _sigmoid(z[2 * d:3 * d])
    g_ = np.tanh(z[3 * d:])
    c = f * c_prev + i * g_
    tc = np.tanh(c)
    h = o * tc
    wv = w.value

    def back(grad):
        dh = grad[:d]
        dc = grad[d:] + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g_ * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g_ * g_),
        ])
        dxh = wv.T @ dz
        return (dxh[:nx], np.concatenate([dxh[nx:], dc * f]), np.outer(dz, xh), dz)

    return _result(np.concatenate([h, c]), (x, state, w, b), back)


# =============================================================================
# PARAMETERS AND OPTIMIZERS
# =============================================================================

class Parameter(Tensor):
    """A named trainable leaf with a persistent gradient buffer."""

    __slots__ = ('name',)

    def __init__(self, name: str, value: np.ndarray):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape})"


class SGD:
    name = 'sgd'

    def apply(self, param: Parameter, lr: float):
        param.value -= lr * param.grad


class Adam:
    """Adam with per-parameter step counts; untouched parameters keep no state."""

    name = 'adam'

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: Dict[str, list] = {}

    def apply(self, param: Parameter, lr: float):
        entry = self.state.get(param.name)
        if entry is None:
            entry = [np.zeros_like(param.value), np.zeros_like(param.value), 0]
            self.state[param.name] = entry
        m, v, t = entry
        t += 1
        g = param.grad
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        m_hat = m / (1.0 - self.beta1 ** t)
        v_hat = v / (1.0 - self.beta2 ** t)
        param.value -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        entry[2] = t


def build_optimizer(name: str = 'adam', beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    if name == 'adam':
        return Adam(beta1=beta1, beta2=beta2, eps=eps)
    if name == 'sgd':
        return SGD()
    raise ValueError(f"Unknown optimizer '{name}'")


class ParameterStore:
    """
    Named parameters with matching gradient buffers and a global step counter.

    A frozen store no longer records gradients and refuses optimizer steps.
    """

    def __init__(self, rng: Optional[np.random.Generator] = None, init_scale: float = 0.08,
                 optimizer=None):
        self.params: 'OrderedDict[str, Parameter]' = OrderedDict()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.init_scale = init_scale
        self.optimizer = optimizer if optimizer is not None else Adam()
        self.step = 0
        self.frozen = False

    def add(self, name: str, shape: Tuple[int, ...], init: Union[str, np.ndarray] = 'uniform') -> Parameter:
        if name in self.params:
            raise ShapeError(f"Parameter '{name}' already exists")
        if isinstance(init, np.ndarray):
            if init.shape != tuple(shape):
                raise ShapeError(f"Initial value for '{name}' has shape {init.shape}, expected {shape}")
            value = init.astype(np.float64).copy()
        elif init == 'uniform':
            value = self.rng.uniform(-self.init_scale, self.init_scale, size=shape)
        elif init == 'zeros':
            value = np.zeros(shape)
        elif init == 'identity':
            if len(shape) == 2:
                value = np.eye(shape[0], shape[1])
            else:
                value = np.zeros(shape)
        else:
            raise ValueError(f"Unknown initializer '{init}'")
        param = Parameter(name, value)
        param.requires_grad = not self.frozen
        self.params[name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self.params.values())

    def __len__(self):
        return len(self.params)

    def names(self) -> List[str]:
        return list(self.params)

    def zero_grad(self):
        for param in self:
            param.grad[...] = 0.0

    def freeze(self) -> 'ParameterStore':
        self.frozen = True
        for param in self:
            param.requires_grad = False
            param.grad[...] = 0.0
        return self

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.params.items()}

    def copy_from(self, other: 'ParameterStore'):
        """Overwrite values in place from a store with identical layout."""
        if other.names() != self.names():
            raise ShapeError("copy_from: parameter layouts differ")
        for param in self:
            src = other[param.name].value
            if src.shape != param.shape:
                raise ShapeError(f"copy_from: '{param.name}' has shape {src.shape}, expected {param.shape}")
            param.value[...] = src

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps_checkpoint(self).encode('utf-8')).hexdigest()


def optimizer_step(store: ParameterStore, lr: float):
    """
    Apply one update with the store's optimizer, zero gradients and bump the
    step counter. Parameters whose gradient is identically zero are skipped;
    when every gradient is zero the store is left exactly as it was.

    Raises:
        TrainingError: the store is frozen or a gradient is not finite.
    """
    if store.frozen:
        raise TrainingError("Cannot update a frozen parameter store")
    for param in store:
        if not np.all(np.isfinite(param.grad)):
            bad = int(np.count_nonzero(~np.isfinite(param.grad)))
            store.zero_grad()
            raise TrainingError(
                f"Non-finite gradient in '{param.name}' ({bad} entries) at step {store.step}"
            )
    updated = 0
    for param in store:
        if np.any(param.grad):
            store.optimizer.apply(param, lr)
            updated += 1
    store.zero_grad()
    if updated:
        store.step += 1


# =============================================================================
# LAYERS
# =============================================================================

class SequenceEncoder:
    """Single-layer LSTM; the encoding of a sequence is its final hidden state."""

    def __init__(self, store: ParameterStore, prefix: str, input_dim: int, hidden_dim: int,
                 init: str = 'uniform'):
        self.prefix = prefix
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w = store.add(f'{prefix}.W', (4 * hidden_dim, input_dim + hidden_dim), init)
        self.b = store.add(f'{prefix}.b', (4 * hidden_dim,), init if init != 'identity' else 'zeros')

    def initial_state(self) -> Tensor:
        return Tensor(np.zeros(2 * self.hidden_dim))

    def step(self, state: Tensor, x: Union[Tensor, np.ndarray]) -> Tensor:
        x = as_tensor(x)
        if x.shape != (self.input_dim,):
            raise ShapeError(f"{self.prefix}: step input {x.shape}, expected ({self.input_dim},)")
        return lstm_cell(x, state, self.w, self.b)

    def hidden(self, state: Tensor) -> Tensor:
        return slice_(state, 0, self.hidden_dim)

    def run(self, steps: Sequence[Union[Tensor, np.ndarray]], state: Optional[Tensor] = None) -> List[Tensor]:
        """States after each step."""
        state = state if state is not None else self.initial_state()
        states = []
        for x in steps:
            state = self.step(state, x)
            states.append(state)
        return states

    def encode(self, steps: Sequence[Union[Tensor, np.ndarray]]) -> Tensor:
        if len(steps) == 0:
            raise ShapeError(f"{self.prefix}: cannot encode an empty sequence")
        return self.hidden(self.run(steps)[-1])

    def encode_all(self, steps: Sequence[Union[Tensor, np.ndarray]]) -> List[Tensor]:
        """Encodings of every non-empty prefix of ``steps``."""
        return [self.hidden(state) for state in self.run(steps)]


class Feedforward:
    """Affine layers with ``activation`` between them; the output layer is linear."""

    def __init__(self, store: ParameterStore, prefix: str, dims: Sequence[int],
                 activation: str = 'tanh', init: str = 'uniform'):
        if len(dims) < 2:
            raise ShapeError(f"{prefix}: a feedforward stack needs input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{activation}'")
        self.prefix = prefix
        self.dims = tuple(dims)
        self.activation = activation
        bias_init = 'zeros' if init in ('zeros', 'identity') else init
        self.layers = [
            (store.add(f'{prefix}.{i}.W', (out_dim, in_dim), init),
             store.add(f'{prefix}.{i}.b', (out_dim,), bias_init))
            for i, (in_dim, out_dim) in enumerate(zip(dims[:-1], dims[1:]))
        ]

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def __call__(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        x = as_tensor(x)
        if x.shape != (self.in_dim,):
            raise ShapeError(f"{self.prefix}: input {x.shape}, expected ({self.in_dim},)")
        act = ACTIVATIONS[self.activation]
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            x = linear(x, w, b)
            if i < last:
                x = act(x)
        return x


ACTIVATIONS = {'tanh': tanh, 'relu': relu, 'sigmoid': sigmoid}


def encode_sequence(enc: SequenceEncoder, steps: Sequence[Union[Tensor, np.ndarray]]) -> Tensor:
    return enc.encode(steps)


def feedforward_apply(f: Feedforward, x: Union[Tensor, np.ndarray]) -> Tensor:
    return f(x)


def attention_weights(query: Tensor, keys: Sequence[Tensor]) -> Tensor:
    """softmax over query·key inner products."""
    if not keys:
        raise ShapeError("attention_weights: no keys")
    return softmax(matvec(stack(keys), query))


def select_action(logits: Tensor, mode: str = 'greedy',
                  rng: Optional[np.random.Generator] = None) -> Tuple[int, Optional[Tensor]]:
    """
    Categorical choice over ``logits``.

    greedy: argmax, lowest index on ties, no log-probability.
    sample: draw from softmax(logits); returns the log-probability tensor
    of the drawn index for policy-gradient updates.
    """
    if mode == 'greedy':
        return int(np.argmax(logits.value)), None
    if mode == 'sample':
        if rng is None:
            raise ValueError("Sampling an action needs a random generator")
        z = logits.value - logits.value.max()
        p = np.exp(z)
        p /= p.sum()
        index = int(np.searchsorted(np.cumsum(p), rng.random(), side='right'))
        index = min(index, p.shape[0] - 1)
        return index, log_softmax_pick(logits, index)
    raise ValueError(f"Unknown action selection mode '{mode}'")


# =============================================================================
# ACTION ENCODINGS
# =============================================================================

def encode_joint(a_self: int, a_other: int, s: int) -> np.ndarray:
    """Two one-hot blocks plus a zero start flag: 2s + 1 dims."""
    x = np.zeros(2 * s + 1)
    x[a_self] = 1.0
    x[s + a_other] = 1.0
    return x


def joint_start_token(s: int) -> np.ndarray:
    x = np.zeros(2 * s + 1)
    x[-1] = 1.0
    return x


def encode_single(a: int, s: int) -> np.ndarray:
    """One-hot block plus a zero start flag: s + 1 dims."""
    x = np.zeros(s + 1)
    x[a] = 1.0
    return x


def single_start_token(s: int) -> np.ndarray:
    x = np.zeros(s + 1)
    x[-1] = 1.0
    return x


def encode_action(a: int, s: int) -> np.ndarray:
    x = np.zeros(s)
    x[a] = 1.0
    return x


# =============================================================================
# BATCHED PASSES
# =============================================================================
# Plain numpy forward/backward over padded minibatches, used where building a
# per-sample graph would dominate the cost (replay minibatches). Gradients are
# accumulated into the same Parameter buffers the graph path uses.

def lstm_forward_batch(w: np.ndarray, b: np.ndarray, xs: np.ndarray,
                       lengths: np.ndarray) -> Tuple[np.ndarray, list]:
    """
    LSTM over a padded batch ``xs`` of shape (B, T, nx); row i stops after
    ``lengths[i]`` steps. Returns the (B, d) hidden state of every row at its
    own length and the cache for ``lstm_backward_batch``.
    """
    batch, steps, nx = xs.shape
    d = b.shape[0] // 4
    if w.shape != (4 * d, nx + d):
        raise ShapeError(f"lstm_forward_batch: inputs of width {nx} do not fit weight {w.shape}")
    if np.any(lengths < 1) or np.any(lengths > steps):
        raise ShapeError(f"lstm_forward_batch: lengths must lie in 1..{steps}")

    h = np.zeros((batch, d))
    c = np.zeros((batch, d))
    cache = []
    for t in range(int(lengths.max())):
        active = (t < lengths)[:, None]
        xh = np.concatenate([xs[:, t], h], axis=1)
        z = xh @ w.T + b
        i = _sigmoid(z[:, :d])
        f = _sigmoid(z[:, d:2 * d])
        o = _sigmoid(z[:, 2 * d:3 * d])
        g_ = np.tanh(z[:, 3 * d:])
        c_new = f * c + i * g_
        tc = np.tanh(c_new)
        cache.append((xh, i, f, o, g_, c, tc, active))
        h = np.where(active, o * tc, h)
        c = np.where(active, c_new, c)
    return h, cache


def lstm_backward_batch(w: np.ndarray, dh_final: np.ndarray, cache: list) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of the weight and bias given d(loss)/d(final hidden states)."""
    d = w.shape[0] // 4
    nx = w.shape[1] - d
    dw = np.zeros_like(w)
    db = np.zeros(4 * d)
    dh = dh_final.copy()
    dc = np.zeros_like(dh)
    for xh, i, f, o, g_, c_prev, tc, active in reversed(cache):
        dh_t = np.where(active, dh, 0.0)
        dc_t = np.where(active, dc, 0.0) + dh_t * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc_t * g_ * i * (1.0 - i),
            dc_t * c_prev * f * (1.0 - f),
            dh_t * tc * o * (1.0 - o),
            dc_t * i * (1.0 - g_ * g_),
        ], axis=1)
        dw += dz.T @ xh
        db += dz.sum(axis=0)
        dxh = dz @ w
        # padded steps pass the state through unchanged
        dh = np.where(active, dxh[:, nx:], dh)
        dc = np.where(active, dc_t * f, dc)
    return dw, db


_BATCH_ACTIVATIONS = {
    'tanh': (np.tanh, lambda y: 1.0 - y * y),
    'sigmoid': (_sigmoid, lambda y: y * (1.0 - y)),
    'relu': (lambda z: np.maximum(z, 0.0), lambda y: (y > 0).astype(np.float64)),
}


def feedforward_forward_batch(f: 'Feedforward', x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Rows of ``x`` through ``f``; also returns every layer's output for the backward pass."""
    if x.ndim != 2 or x.shape[1] != f.in_dim:
        raise ShapeError(f"{f.prefix}: batch input {x.shape}, expected (B, {f.in_dim})")
    act, _ = _BATCH_ACTIVATIONS[f.activation]
    outputs = [x]
    last = len(f.layers) - 1
    for i, (w, b) in enumerate(f.layers):
        z = outputs[-1] @ w.value.T + b.value
        outputs.append(act(z) if i < last else z)
    return outputs[-1], outputs


def feedforward_backward_batch(f: 'Feedforward', grad_out: np.ndarray, outputs: List[np.ndarray]) -> np.ndarray:
    """Accumulate parameter gradients of ``f``; returns the gradient for its input rows."""
    _, derivative = _BATCH_ACTIVATIONS[f.activation]
    last = len(f.layers) - 1
    g = grad_out
    for i in range(last, -1, -1):
        w, b = f.layers[i]
        if i < last:
            g = g * derivative(outputs[i + 1])
        if w.requires_grad:
            w.grad += g.T @ outputs[i]
            b.grad += g.sum(axis=0)
        g = g @ w.value
    return g


# =============================================================================
# GRADIENT VERIFICATION
# =============================================================================

@dataclass
class GradientReport:
    max_rel_error: float
    max_abs_error: float
    checked: int
    passed: bool


def check_gradients(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-4,
                    rtol: float = 1e-3, atol: float = 1e-6) -> GradientReport:
    """
    Compare backward() against central finite differences for every entry
    of ``tensors``. Entries whose absolute error is within ``atol`` count as
    exact, which covers gradients that are zero or nearly so.
    """
    for t in tensors:
        if isinstance(t, Parameter):
            t.grad[...] = 0.0
        else:
            t.grad = None
    backward(loss_fn())
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.value) for t in tensors]

    max_rel = 0.0
    max_abs = 0.0
    checked = 0
    for t, grad in zip(tensors, analytic):
        for idx in np.ndindex(t.value.shape):
            original = t.value[idx]
            t.value[idx] = original + eps
            plus = float(loss_fn().value)
            t.value[idx] = original - eps
            minus = float(loss_fn().value)
            t.value[idx] = original
            numeric = (plus - minus) / (2.0 * eps)
            abs_err = abs(grad[idx] - numeric)
            max_abs = max(max_abs, abs_err)
            if abs_err > atol:
                max_rel = max(max_rel, abs_err / max(abs(grad[idx]), abs(numeric)))
            checked += 1

    for t in tensors:
        if isinstance(t, Parameter):
            t.grad[...] = 0.0
        else:
            t.grad = None
    return GradientReport(max_rel_error=max_rel, max_abs_error=max_abs, checked=checked, passed=max_rel < rtol)


# =============================================================================
# CHECKPOINTS
# =============================================================================

def dumps_checkpoint(store: ParameterStore, metadata: Optional[Dict] = None) -> str:
    """
    Versioned text checkpoint.

    Layout: a ``adaptlab-checkpoint <version>`` header line, one JSON
    metadata line, then per parameter a ``<name> <d1,d2,...>`` line followed
    by its row-major values.
    """
    meta = dict(metadata or {})
    meta.setdefault('step', store.step)
    lines = [f'{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}', json.dumps(meta, sort_keys=True)]
    for name, param in store.params.items():
        shape = ','.join(str(dim) for dim in param.shape) or '-'
        lines.append(f'{name} {shape}')
        lines.append(' '.join(repr(float(v)) for v in param.value.reshape(-1)))
    return '\n'.join(lines) + '\n'


def loads_checkpoint(text: str) -> Tuple[Dict, 'OrderedDict[str, np.ndarray]']:
    lines = text.split('\n')
    header = lines[0].split()
    if len(header) != 2 or header[0] != CHECKPOINT_MAGIC:
        raise ShapeError("Not an adaptlab checkpoint")
    if int(header[1]) != CHECKPOINT_VERSION:
        raise ShapeError(f"Unsupported checkpoint version {header[1]}")
    metadata = json.loads(lines[1])
    arrays: 'OrderedDict[str, np.ndarray]' = OrderedDict()
    body = lines[2:]
    for i in range(0, len(body) - 1, 2):
        if not body[i]:
            break
        name, shape_text = body[i].rsplit(' ', 1)
        shape = () if shape_text == '-' else tuple(int(dim) for dim in shape_text.split(','))
        values = [float(token) for token in body[i + 1].split()] if body[i + 1] else []
        arrays[name] = np.asarray(values, dtype=np.float64).reshape(shape)
    return metadata, arrays


def load_into(store: ParameterStore, text: str) -> Dict:
    """Load checkpoint values into an identically laid-out store; returns metadata."""
    metadata, arrays = loads_checkpoint(text)
    if list(arrays) != store.names():
        missing = set(store.names()) ^ set(arrays)
        raise ShapeError(f"Checkpoint layout does not match store: {', '.join(sorted(missing)) or 'order differs'}")
    for name, value in arrays.items():
        if value.shape != store[name].shape:
            raise ShapeError(f"Checkpoint '{name}' has shape {value.shape}, expected {store[name].shape}")
        store[name].value[...] = value
    store.step = int(metadata.get('step', 0))
    return metadata


def save_checkpoint(store: ParameterStore, path: Union[str, Path], metadata: Optional[Dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_checkpoint(store, metadata), encoding='utf-8')
    logger.info(f"Wrote checkpoint with {len(store)} parameters to {path}")
    return path


def read_checkpoint(path: Union[str, Path]) -> str:
    return Path(path).read_text(encoding='utf-8')


__all__ = [
    'Tensor',
    'Parameter',
    'ParameterStore',
    'SGD',
    'Adam',
    'SequenceEncoder',
    'Feedforward',
    'GradientReport',
    'as_tensor',
    'constant',
    'detach',
    'backward',
    'add',
    'sub',
    'mul',
    'scale',
    'square',
    'tanh',
    'sigmoid',
    'relu',
    'total',
    'matvec',
    'linear',
    'dot',
    'concat',
    'slice_',
    'stack',
    'mean',
    'softmax',
    'weighted_sum',
    'pick',
    'log_softmax_pick',
    'l1_loss',
    'lstm_cell',
    'build_optimizer',
    'optimizer_step',
    'encode_sequence',
    'feedforward_apply',
    'attention_weights',
    'select_action',
    'encode_joint',
    'joint_start_token',
    'encode_single',
    'single_start_token',
    'encode_action',
    'lstm_forward_batch',
    'lstm_backward_batch',
    'feedforward_forward_batch',
    'feedforward_backward_batch',
    'check_gradients',
    'dumps_checkpoint',
    'loads_checkpoint',
    'load_into',
    'save_checkpoint',
    'read_checkpoint',
]
