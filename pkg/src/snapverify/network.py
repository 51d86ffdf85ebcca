"""Feed-forward and vanilla recurrent ReLU networks.

Neuron naming is shared by every module and by the text formats:

* ``in:k``      input coordinate ``k``
* ``h:L:j``     neuron ``j`` of hidden layer ``L`` (first hidden layer is 1)
* ``out:j``     output neuron ``j``
* ``mem:L:j``   memory unit of neuron ``j`` in layer ``L`` (the output layer
                is numbered ``len(layers)``)
* ``t``         the time input of a snapshot network

Unrolled networks suffix every name with ``@t`` for the copy at step ``t``.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

RELU = "relu"
IDENTITY = "identity"
ACTIVATIONS = (RELU, IDENTITY)
TIME = "t"


class StructureError(ValueError):
    """Dimensions or wiring of a network are inconsistent."""


def _matrix(a, rows=None, cols=None, what="matrix"):
    m = np.array(a, dtype=float, ndmin=2)
    if m.ndim != 2:
        raise StructureError(f"{what} must be two-dimensional")
    if (rows is not None and m.shape[0] != rows) or (cols is not None and m.shape[1] != cols):
        raise StructureError(f"{what} has shape {m.shape}, expected ({rows}, {cols})")
    m.setflags(write=False)
    return m


def _vector(a, size, what="vector"):
    v = np.array(a, dtype=float).reshape(-1)
    if v.size != size:
        raise StructureError(f"{what} has length {v.size}, expected {size}")
    v.setflags(write=False)
    return v


def input_name(k):
    return f"in:{k}"


def hidden_name(layer, j):
    return f"h:{layer}:{j}"


def output_name(j):
    return f"out:{j}"


def memory_name(layer, j):
    return f"mem:{layer}:{j}"


def at_step(name, t):
    return f"{name}@{t}"


@dataclass(frozen=True, eq=False)
class Layer:
    """One RNN layer: ``f(W x + H memory + b)``. ``H=None`` means no memory."""

    W: np.ndarray
    b: np.ndarray = None
    H: np.ndarray = None
    activation: str = RELU

    def __post_init__(self):
        W = _matrix(self.W, what="W")
        object.__setattr__(self, "W", W)
        size = W.shape[0]
        b = np.zeros(size) if self.b is None else self.b
        object.__setattr__(self, "b", _vector(b, size, "bias"))
        if self.H is not None:
            H = _matrix(self.H, size, size, "H")
            object.__setattr__(self, "H", H if np.any(H) else None)
        if self.activation not in ACTIVATIONS:
            raise StructureError(f"unknown activation {self.activation!r}")

    @property
    def size(self):
        return self.W.shape[0]

    @property
    def in_dim(self):
        return self.W.shape[1]

    @property
    def memory_units(self):
        """Indices whose memory feeds some neuron (nonzero H column)."""
        if self.H is None:
            return ()
        return tuple(int(j) for j in np.flatnonzero(np.any(self.H != 0.0, axis=0)))

    def apply(self, x, memory=None):
        z = self.W @ x + self.b
        if self.H is not None and memory is not None:
            z = z + self.H @ memory
        return np.maximum(z, 0.0) if self.activation == RELU else z


@dataclass(frozen=True, eq=False)
class RnnNetwork:
    input_dim: int
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if self.input_dim < 1:
            raise StructureError("input_dim must be positive")
        if len(layers) < 2:
            raise StructureError("an RNN needs at least one hidden layer and an output layer")
        prev = self.input_dim
        for i, layer in enumerate(layers):
            if layer.in_dim != prev:
                raise StructureError(
                    f"layer {i + 1} expects {layer.in_dim} inputs, predecessor has {prev}")
            if i < len(layers) - 1 and layer.activation != RELU:
                raise StructureError("hidden layers must use ReLU")
            prev = layer.size

    @property
    def output_dim(self):
        return self.layers[-1].size

    @property
    def n_layers(self):
        return len(self.layers)

    def neuron_names(self, layer):
        """Names of the neurons of layer ``layer`` (1-based)."""
        size = self.layers[layer - 1].size
        if layer == self.n_layers:
            return [output_name(j) for j in range(size)]
        return [hidden_name(layer, j) for j in range(size)]

    def input_names(self):
        return [input_name(k) for k in range(self.input_dim)]

    def memory_units(self):
        """``[(layer, j), ...]`` for every memory unit, layers 1-based."""
        return [(L + 1, j) for L, layer in enumerate(self.layers) for j in layer.memory_units]

    def memory_layers(self):
        return sorted({L for L, _ in self.memory_units()})

    def n_neurons(self, include_memory=True):
        n = self.input_dim + sum(layer.size for layer in self.layers)
        return n + (len(self.memory_units()) if include_memory else 0)


class Source(NamedTuple):
    """Incoming edges from layer ``layer``; ``columns`` selects its neurons."""

    layer: int
    weights: np.ndarray
    columns: tuple = None


@dataclass(frozen=True, eq=False)
class FfnnLayer:
    sources: tuple
    b: np.ndarray
    activation: str = RELU
    names: tuple = ()

    @property
    def size(self):
        return self.b.size


@dataclass(frozen=True, eq=False)
class FfnnNetwork:
    """Layered feed-forward network whose layers may read any earlier layer.

    Layer 0 is the input layer. ``outputs`` lists output neuron names.
    """

    input_names: tuple
    layers: tuple
    outputs: tuple
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        sizes = [len(self.input_names)]
        fixed = []
        for i, layer in enumerate(self.layers, start=1):
            b = _vector(layer.b, len(layer.b), "bias")
            srcs = []
            for src in layer.sources:
                s, W, cols = src
                if not 0 <= s < i:
                    raise StructureError(f"layer {i} reads from layer {s}, which is not earlier")
                width = sizes[s] if cols is None else len(cols)
                if cols is not None:
                    cols = tuple(int(c) for c in cols)
                    if cols and (min(cols) < 0 or max(cols) >= sizes[s]):
                        raise StructureError(f"layer {i} selects a missing neuron of layer {s}")
                srcs.append(Source(s, _matrix(W, b.size, width, f"layer {i} weights"), cols))
            if layer.activation not in ACTIVATIONS:
                raise StructureError(f"unknown activation {layer.activation!r}")
            names = tuple(layer.names)
            if len(names) != b.size:
                raise StructureError(f"layer {i} names do not match its size")
            fixed.append(FfnnLayer(tuple(srcs), b, layer.activation, names))
            sizes.append(b.size)
        object.__setattr__(self, "layers", tuple(fixed))
        index = {}
        for j, n in enumerate(self.input_names):
            index[n] = (0, j)
        for i, layer in enumerate(self.layers, start=1):
            for j, n in enumerate(layer.names):
                index[n] = (i, j)
        if len(index) != sum(sizes):
            raise StructureError("neuron names are not unique")
        missing = [o for o in self.outputs if o not in index]
        if missing:
            raise StructureError(f"unknown output neuron {missing[0]!r}")
        object.__setattr__(self, "index", index)

    @property
    def input_dim(self):
        return len(self.input_names)

    @property
    def n_neurons(self):
        return self.input_dim + sum(layer.size for layer in self.layers)

    def names(self):
        out = list(self.input_names)
        for layer in self.layers:
            out.extend(layer.names)
        return out

    def layer_sizes(self):
        return [self.input_dim] + [layer.size for layer in self.layers]


def _forward(net, X):
    """Layer values for a batch ``X`` of shape (batch, input_dim)."""
    values = [X]
    for layer in net.layers:
        z = np.broadcast_to(layer.b, (X.shape[0], layer.size)).copy()
        for s, W, cols in layer.sources:
            src = values[s] if cols is None else values[s][:, cols]
            z += src @ W.T
        values.append(np.maximum(z, 0.0) if layer.activation == RELU else z)
    return values


def evaluate_ffnn(net, x, full=False):
    """Output values of ``net`` at input ``x``.

    With ``full=True`` returns ``(outputs, assignment)`` where the assignment
    maps every neuron name to its value.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != net.input_dim:
        raise StructureError(f"input has length {x.size}, expected {net.input_dim}")
    values = [v[0] for v in _forward(net, x[None, :])]
    outputs = np.array([values[net.index[o][0]][net.index[o][1]] for o in net.outputs])
    if not full:
        return outputs
    names = net.names()
    flat = np.concatenate(values)
    return outputs, dict(zip(names, flat.tolist()))


def evaluate_ffnn_batch(net, X):
    """``(batch, n_outputs)`` outputs and the per-layer value arrays."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise StructureError(f"batch must have shape (n, {net.input_dim})")
    values = _forward(net, X)
    outputs = np.stack([values[net.index[o][0]][:, net.index[o][1]] for o in net.outputs],
                       axis=1) if net.outputs else np.zeros((X.shape[0], 0))
    return outputs, values


@dataclass(frozen=True, eq=False)
class RnnTrace:
    """Values of a run: ``values[L-1][t-1]`` is layer ``L`` at step ``t``.

    ``memory[L-1][t-1]`` holds layer ``L``'s memory before step ``t``; it is
    recorded for every layer even where ``H`` is absent and it has no effect.
    """

    net: RnnNetwork
    inputs: np.ndarray
    values: tuple
    memory: tuple

    @property
    def length(self):
        return self.inputs.shape[0]

    @property
    def outputs(self):
        return self.values[-1]

    def assignment(self, t):
        """Name → value map at step ``t`` (1-based), including ``t`` itself."""
        if not 1 <= t <= self.length:
            raise IndexError(f"step {t} outside 1..{self.length}")
        a = {TIME: float(t)}
        for k, v in enumerate(self.inputs[t - 1]):
            a[input_name(k)] = float(v)
        for L in range(1, self.net.n_layers + 1):
            for j, name in enumerate(self.net.neuron_names(L)):
                a[name] = float(self.values[L - 1][t - 1, j])
                a[memory_name(L, j)] = float(self.memory[L - 1][t - 1, j])
        return a


def evaluate_rnn(net, inputs):
    """Run ``net`` over the sequence ``inputs`` of shape (T, input_dim)."""
    X = np.array(inputs, dtype=float, ndmin=2)
    if X.size == 0 or X.shape[0] == 0:
        raise StructureError("input sequence is empty")
    if X.shape[1] != net.input_dim:
        raise StructureError(f"inputs have width {X.shape[1]}, expected {net.input_dim}")
    T = X.shape[0]
    values = [np.zeros((T, layer.size)) for layer in net.layers]
    memory = [np.zeros((T, layer.size)) for layer in net.layers]
    state = [np.zeros(layer.size) for layer in net.layers]
    for t in range(T):
        x = X[t]
        for L, layer in enumerate(net.layers):
            memory[L][t] = state[L]
            x = layer.apply(x, state[L])
            values[L][t] = x
            state[L] = x
    for arr in values + memory:
        arr.setflags(write=False)
    X.setflags(write=False)
    return RnnTrace(net, X, tuple(values), tuple(memory))


def evaluate_rnn_batch(net, X):
    """Run ``net`` over a batch of sequences ``X`` of shape (n, T, input_dim).

    Returns ``{name: (n, T) array}`` for inputs, ``t``, every neuron and every
    memory unit, i.e. a vectorised :meth:`RnnTrace.assignment`.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[2] != net.input_dim or X.shape[1] == 0:
        raise StructureError(f"batch must have shape (n, T, {net.input_dim}) with T >= 1")
    n, T, _ = X.shape
    out = {TIME: np.broadcast_to(np.arange(1.0, T + 1), (n, T))}
    for k in range(net.input_dim):
        out[input_name(k)] = X[:, :, k]
    values = [np.zeros((n, T, layer.size)) for layer in net.layers]
    memory = [np.zeros((n, T, layer.size)) for layer in net.layers]
    for t in range(T):
        x = X[:, t, :]
        for L, layer in enumerate(net.layers):
            if t > 0:
                memory[L][:, t] = values[L][:, t - 1]
            z = x @ layer.W.T + layer.b
            if layer.H is not None:
                z = z + memory[L][:, t] @ layer.H.T
            x =np.maximum(z, 0.0) if layer.activation == RELU else z
            values[L][:, t] = x
    for L in range(1, net.n_layers + 1):
        for j, name in enumerate(net.neuron_names(L)):
            out[name] = values[L - 1][:, :, j]
            out[memory_name(L, j)] = memory[L - 1][:, :, j]
    return out


def _layer_name(net, L, j):
    return output_name(j) if L == net.n_layers else hidden_name(L, j)


def unroll(net, t_max):
    """Equivalent feed-forward network over ``t_max`` steps.

    The input layer holds ``in:k@t`` for every step; memory edges become
    edges from copy ``t-1`` to copy ``t`` weighted by ``H``. Copy 1 receives
    no such edges since memory starts at zero.
    """
    if t_max < 1:
        raise StructureError("t_max must be at least 1")
    d = net.input_dim
    input_names = [at_step(input_name(k), t) for t in range(1, t_max + 1) for k in range(d)]
    layers = []
    n_L = net.n_layers
    outputs = []
    for t in range(1, t_max + 1):
        base = 1 + (t - 1) * n_L
        for L, layer in enumerate(net.layers, start=1):
            if L == 1:
                sources = [Source(0, layer.W, tuple(range((t - 1) * d, t * d)))]
            else:
                sources = [Source(base + L - 2, layer.W)]
            if layer.H is not None and t > 1:
                cols = layer.memory_units
                sources.append(Source(base - n_L + L - 1, layer.H[:, cols], cols))
            names = tuple(at_step(_layer_name(net, L, j), t) for j in range(layer.size))
            layers.append(FfnnLayer(tuple(sources), layer.b, layer.activation, names))
        outputs.extend(at_step(output_name(j), t) for j in range(net.output_dim))
    return FfnnNetwork(tuple(input_names), tuple(layers), tuple(outputs))


@dataclass(frozen=True, eq=False)
class SnapshotNetwork:
    ffnn: FfnnNetwork
    time_var: str
    memory_vars: dict
    rnn: RnnNetwork

    @property
    def n_neurons(self):
        return self.ffnn.n_neurons


def snapshot(net):
    """Single-step over-approximation of ``net``.

    Every memory unit becomes a free input ``mem:L:j`` wired with the
    original ``H`` weights, and an isolated input ``t`` is added for
    properties that mention time.
    """
    units = net.memory_units()
    mem_names = [memory_name(L, j) for L, j in units]
    input_names = net.input_names() + [TIME] + mem_names
    pos = {u: net.input_dim + 1 + i for i, u in enumerate(units)}
    layers = []
    for L, layer in enumerate(net.layers, start=1):
        if L == 1:
            sources = [Source(0, layer.W, tuple(range(net.input_dim)))]
        else:
            sources = [Source(L - 1, layer.W)]
        cols = layer.memory_units
        if cols:
            sources.append(Source(0, layer.H[:, cols], tuple(pos[(L, j)] for j in cols)))
        names = tuple(_layer_name(net, L, j) for j in range(layer.size))
        layers.append(FfnnLayer(tuple(sources), layer.b, layer.activation, names))
    outputs = tuple(output_name(j) for j in range(net.output_dim))
    ffnn = FfnnNetwork(tuple(input_names), tuple(layers), outputs)
    return SnapshotNetwork(ffnn, TIME, {u: memory_name(*u) for u in units}, net)


def memory_free(net):
    """The RNN viewed as a feed-forward network with all memory at zero."""
    layers = [Layer(layer.W, layer.b, None, layer.activation) for layer in net.layers]
    return RnnNetwork(net.input_dim, tuple(layers))


def as_ffnn(net):
    """Plain feed-forward view of ``net`` with memory ignored."""
    layers = []
    for L, layer in enumerate(net.layers, start=1):
        names = tuple(_layer_name(net, L, j) for j in range(layer.size))
        layers.append(FfnnLayer((Source(L - 1, layer.W),), layer.b, layer.activation, names))
    outputs = tuple(output_name(j) for j in range(net.output_dim))
    return FfnnNetwork(tuple(net.input_names()), tuple(layers), outputs)


def feedforward(input_dim, layers):
    """FFNN from ``[(W, b), ...]``; every layer but the last uses ReLU."""
    n = len(layers)
    rnn_layers = [Layer(W, b, None, RELU if i < n - 1 else IDENTITY)
                  for i, (W, b) in enumerate(layers)]
    return as_ffnn(RnnNetwork(input_dim, tuple(rnn_layers)))
