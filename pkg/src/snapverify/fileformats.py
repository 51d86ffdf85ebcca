"""Versioned text formats for networks, properties and run reports.

Network files are line based; ``#`` starts a comment and blank lines are
ignored. Numbers are written with Python's shortest round-trip ``repr``, so
``emit(parse(text)) == text`` for every file in canonical form.

Recurrent network::

    snapverify-network 1
    rnn inputs 1
    layer relu 1
    weights 1.0
    memory 1.0
    bias 0.0
    layer identity 1
    weights 1.0
    bias 0.0

One ``weights`` line per neuron; ``memory`` lines are optional (omitted
means no memory) and come one per neuron. Feed-forward networks name
every neuron and list the earlier layers each layer reads::

    snapverify-network 1
    ffnn inputs in:0@1 in:0@2
    layer relu h:1:0@1
    source 0 columns 0
    weights 1.0
    bias 0.0
    outputs h:1:0@1

``source L`` reads all of layer ``L`` (0 is the input layer);
``columns`` restricts it to the listed neurons.

Property file::

    snapverify-property 1
    t_max 5
    fixed_step 5
    input in:0 1.0 >= -3.0
    disjunct
    output out:0 1.0 >= 16.0

A constraint line lists ``variable coefficient`` pairs, a relation
(``<=``, ``>=``, ``==``) and a constant: ``sum(coef * var) REL constant``.
``fixed_step`` is optional. Each ``disjunct`` line opens a conjunction of
the ``output`` lines that follow it.
"""
from dataclasses import dataclass
import math

import numpy as np

from .network import (ACTIVATIONS, FfnnLayer, FfnnNetwork, Layer, RnnNetwork, Source,
                      StructureError)
from .props import (RELATIONS, InputProperty, LinConstraint, LinExpr, OutputProperty,
                    PropertyError, RnnQuery)

NETWORK_MAGIC = "snapverify-network"
PROPERTY_MAGIC = "snapverify-property"
FORMAT_VERSION = 1
REPORT_SCHEMA = "snapverify-report/1"


class ParseError(ValueError):
    """Malformed input; carries a 1-based line and column."""

    def __init__(self, message, line, column=1, source="<input>"):
        super().__init__(f"{source}:{line}:{column}: {message}")
        self.line = line
        self.column = column


@dataclass
class _Line:
    number: int
    words: list
    columns: list

    @property
    def key(self):
        return self.words[0]


def _lines(text):
    out = []
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        words, cols, pos = [], [], 0
        for w in body.split():
            pos = body.index(w, pos)
            words.append(w)
            cols.append(pos + 1)
            pos += len(w)
        if words:
            out.append(_Line(n, words, cols))
    return out


class _Reader:
    def __init__(self, text, source):
        self.lines = _lines(text)
        self.i = 0
        self.source = source

    def error(self, message, line=None, k=0):
        if line is None:
            last = self.lines[-1].number + 1 if self.lines else 1
            raise ParseError(message, last, 1, self.source)
        col = line.columns[k] if k < len(line.columns) else line.columns[-1] + len(line.words[-1])
        raise ParseError(message, line.number, col, self.source)

    def peek(self):
        return self.lines[self.i] if self.i < len(self.lines) else None

    def next(self, key=None):
        line = self.peek()
        if line is None:
            self.error(f"unexpected end of file, expected {key!r}" if key else
                       "unexpected end of file")
        if key is not None and line.key != key:
            self.error(f"expected {key!r}, found {line.key!r}", line)
        self.i += 1
        return line

    def number(self, line, k):
        if k >= len(line.words):
            self.error("missing number", line, k)
        try:
            x = float(line.words[k])
        except ValueError:
            self.error(f"not a number: {line.words[k]!r}", line, k)
        if not math.isfinite(x):
            self.error(f"non-finite number {line.words[k]!r}", line, k)
        return x

    def integer(self, line, k, minimum=0):
        if k >= len(line.words):
            self.error("missing integer", line, k)
        try:
            n = int(line.words[k])
        except ValueError:
            self.error(f"not an integer: {line.words[k]!r}", line, k)
        if n < minimum:
            self.error(f"expected an integer >= {minimum}", line, k)
        return n

    def row(self, key, width):
        line = self.next(key)
        if len(line.words) - 1 != width:
            self.error(f"{key} row has {len(line.words) - 1} entries, expected {width}", line,
                       min(len(line.words) - 1, width + 1))
        return [self.number(line, k) for k in range(1, width + 1)]

    def header(self, magic):
        line = self.next()
        if line.key != magic:
            self.error(f"expected {magic!r} header", line)
        if len(line.words) != 2 or line.words[1] != str(FORMAT_VERSION):
            self.error(f"unsupported format version, expected {FORMAT_VERSION}", line, 1)

    def done(self):
        line = self.peek()
        if line is not None:
            self.error(f"unexpected {line.key!r}", line)


def _fmt(x):
    return repr(float(x))


def _row(key, values):
    return " ".join([key] + [_fmt(v) for v in values])


def _activation(r, line, k):
    if k >= len(line.words) or line.words[k] not in ACTIVATIONS:
        r.error(f"activation must be one of {', '.join(ACTIVATIONS)}", line, k)
    return line.words[k]


def parse_network(text, source="<network>"):
    """:class:`RnnNetwork` or :class:`FfnnNetwork` from network-file text."""
    r = _Reader(text, source)
    r.header(NETWORK_MAGIC)
    kind = r.next()
    if kind.key == "rnn":
        return _parse_rnn(r, kind)
    if kind.key == "ffnn":
        return _parse_ffnn(r, kind)
    r.error("expected 'rnn' or 'ffnn'", kind)


def _parse_rnn(r, line):
    if len(line.words) != 3 or line.words[1] != "inputs":
        r.error("expected 'rnn inputs <count>'", line, 1)
    prev = d = r.integer(line, 2, minimum=1)
    layers = []
    while r.peek() is not None:
        head = r.next("layer")
        if len(head.words) != 3:
            r.error("expected 'layer <activation> <size>'", head)
        act = _activation(r, head, 1)
        size = r.integer(head, 2, minimum=1)
        W = [r.row("weights", prev) for _ in range(size)]
        H = None
        if r.peek() is not None and r.peek().key == "memory":
            H = [r.row("memory", size) for _ in range(size)]
        b = r.row("bias", size)
        try:
            layers.append(Layer(np.array(W), np.array(b), None if H is None else np.array(H),
                                act))
        except StructureError as exc:
            r.error(str(exc), head)
        prev = size
    try:
        return RnnNetwork(d, tuple(layers))
    except StructureError as exc:
        r.error(str(exc))


def _parse_ffnn(r, line):
    if len(line.words) < 3 or line.words[1] != "inputs":
        r.error("expected 'ffnn inputs <name>...'", line, 1)
    inputs = line.words[2:]
    sizes = [len(inputs)]
    layers = []
    while r.peek() is not None and r.peek().key == "layer":
        head = r.next("layer")
        if len(head.words) < 3:
            r.error("expected 'layer <activation> <name>...'", head)
        act = _activation(r, head, 1)
        names = head.words[2:]
        sources = []
        while r.peek() is not None and r.peek().key == "source":
            src = r.next("source")
            s = r.integer(src, 1)
            if s > len(layers):
                r.error(f"layer {len(layers) + 1} cannot read layer {s}", src, 1)
            cols = None
            if len(src.words) > 2:
                if src.words[2] != "columns" or len(src.words) == 3:
                    r.error("expected 'source <layer> [columns <index>...]'", src, 2)
                cols = tuple(r.integer(src, k) for k in range(3, len(src.words)))
                bad = [k for k, c in enumerate(cols) if c >= sizes[s]]
                if bad:
                    r.error(f"layer {s} has no neuron {cols[bad[0]]}", src, 3 + bad[0])
            width = sizes[s] if cols is None else len(cols)
            W = [r.row("weights", width) for _ in names]
            sources.append(Source(s, np.array(W).reshape(len(names), width), cols))
        b = r.row("bias", len(names))
        layers.append(FfnnLayer(tuple(sources), np.array(b), act, tuple(names)))
        sizes.append(len(names))
    out = r.next("outputs")
    r.done()
    try:
        return FfnnNetwork(tuple(inputs), tuple(layers), tuple(out.words[1:]))
    except StructureError as exc:
        r.error(str(exc), out)


def emit_network(net):
    """Canonical network-file text."""
    out = [f"{NETWORK_MAGIC} {FORMAT_VERSION}"]
    if isinstance(net, RnnNetwork):
        out.append(f"rnn inputs {net.input_dim}")
        for layer in net.layers:
            out.append(f"layer {layer.activation} {layer.size}")
            out.extend(_row("weights", w) for w in layer.W)
            if layer.H is not None:
                out.extend(_row("memory", h) for h in layer.H)
            out.append(_row("bias", layer.b))
    elif isinstance(net, FfnnNetwork):
        out.append(" ".join(["ffnn inputs", *net.input_names]))
        for layer in net.layers:
            out.append(" ".join(["layer", layer.activation, *layer.names]))
            for s, W, cols in layer.sources:
                head = f"source {s}"
                if cols is not None:
                    head += " columns " + " ".join(str(c) for c in cols)
                out.append(head)
                out.extend(_row("weights", w) for w in W)
            out.append(_row("bias", layer.b))
        out.append(" ".join(["outputs", *net.outputs]))
    else:
        raise TypeError(f"cannot emit {type(net).__name__}")
    return "\n".join(out) + "\n"


def _constraint(r, line):
    words = line.words
    rel_at = next((k for k, w in enumerate(words) if w in RELATIONS), None)
    if rel_at is None:
        r.error(f"constraint needs a relation ({', '.join(RELATIONS)})", line)
    if rel_at == 1 or (rel_at - 1) % 2:
        r.error("expected 'variable coefficient' pairs before the relation", line, rel_at)
    if rel_at + 2 != len(words):
        r.error("expected a single constant after the relation", line, min(rel_at + 2, len(words) - 1))
    terms = [(words[k], r.number(line, k + 1)) for k in range(1, rel_at, 2)]
    return LinConstraint(LinExpr(tuple(terms), -r.number(line, rel_at + 1)), words[rel_at])


def parse_property(text, net, source="<property>"):
    """:class:`RnnQuery` over ``net`` from property-file text."""
    r = _Reader(text, source)
    r.header(PROPERTY_MAGIC)
    t_line = r.next("t_max")
    if len(t_line.words) != 2:
        r.error("expected 't_max <steps>'", t_line)
    t_max = r.integer(t_line, 1, minimum=1)
    fixed = None
    if r.peek() is not None and r.peek().key == "fixed_step":
        f_line = r.next()
        if len(f_line.words) != 2:
            r.error("expected 'fixed_step <step>'", f_line)
        fixed = r.integer(f_line, 1, minimum=1)
    P = []
    while r.peek() is not None and r.peek().key == "input":
        P.append(_constraint(r, r.next()))
    disjuncts = []
    while r.peek() is not None:
        d_line = r.next("disjunct")
        if len(d_line.words) != 1:
            r.error("'disjunct' takes no arguments", d_line, 1)
        conj = []
        while r.peek() is not None and r.peek().key == "output":
            conj.append(_constraint(r, r.next()))
        disjuncts.append(tuple(conj))
    if not disjuncts:
        r.error("expected at least one 'disjunct'")
    try:
        return RnnQuery(InputProperty(tuple(P)), net,
                        OutputProperty(tuple(disjuncts), fixed_step=fixed), t_max)
    except PropertyError as exc:
        r.error(str(exc))


def _constraint_line(key, c):
    words = [key]
    for v, k in c.expr.terms:
        words += [v, _fmt(k)]
    return " ".join(words + [c.relation, _fmt(-c.expr.constant + 0.0)])


def emit_property(q):
    """Canonical property-file text for ``q`` (the network is not included)."""
    out = [f"{PROPERTY_MAGIC} {FORMAT_VERSION}", f"t_max {q.t_max}"]
    if q.Q.fixed_step is not None:
        out.append(f"fixed_step {q.Q.fixed_step}")
    out.extend(_constraint_line("input", c) for c in q.P.constraints)
    for d in q.Q.disjuncts:
        out.append("disjunct")
        out.extend(_constraint_line("output", c) for c in d)
    return "\n".join(out) + "\n"


def read_network(path):
    with open(path) as fh:
        return parse_network(fh.read(), str(path))


def read_property(path, net):
    with open(path) as fh:
        return parse_property(fh.read(), net, str(path))


def report_document(report, query=None):
    """Machine-readable run report."""
    doc = {"schema": REPORT_SCHEMA}
    doc.update(report.to_dict())
    if query is not None:
        doc["t_max"] = query.t_max
    return doc
