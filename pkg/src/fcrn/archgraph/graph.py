"""Layer graphs with shape propagation and the arithmetic analyses run over them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from ..tensor import _pair, _quad, conv_output_size

KINDS = ("input", "conv", "pool", "unpool", "upconv", "upproject", "fc",
         "batchnorm", "relu", "dropout", "add")
_PASSTHROUGH = ("batchnorm", "relu", "dropout")


@dataclass
class LayerNode:
    name: str
    kind: str
    inputs: list[int] = field(default_factory=list)
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int, int, int] = (0, 0, 0, 0)
    in_channels: int = 0
    out_channels: int = 0
    bias: bool = True
    groups: int = 1
    mode: str = ""           # pool: "max" or "avg"
    keep_prob: float = 1.0   # dropout
    out_shape: tuple[int, int, int] = (0, 0, 0)  # (C, H, W), filled by propagation


class ArchGraph:
    """Ordered DAG of layer nodes; node 0 is the network input.

    Nodes are appended in topological order, and every append propagates
    shapes immediately, so a constructed graph is always shape-valid.
    """

    def __init__(self, input_shape, name: str = ""):
        c, h, w = (int(v) for v in input_shape)
        self.name = name
        self.input_shape = (c, h, w)
        self.nodes: list[LayerNode] = [LayerNode("data", "input", out_shape=(c, h, w), out_channels=c)]
        self.tags: dict[str, int] = {}

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, i) -> LayerNode:
        if isinstance(i, str):
            return self.nodes[self.index(i)]
        return self.nodes[i]

    def index(self, name: str) -> int:
        for i, n in enumerate(self.nodes):
            if n.name == name:
                return i
        raise KeyError(f"no node named {name!r}")

    @property
    def output(self) -> int:
        return len(self.nodes) - 1

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return self.nodes[-1].out_shape

    def shape(self, node) -> tuple[int, int, int]:
        return self[node].out_shape

    def add(self, kind: str, name: str | None = None, inputs=None, **attrs) -> int:
        if kind not in KINDS or kind == "input":
            raise ValueError(f"unknown or non-addable layer kind {kind!r}")
        if inputs is None:
            inputs = [len(self.nodes) - 1]
        inputs = [self.index(i) if isinstance(i, str) else int(i) for i in inputs]
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise ValueError(f"input id {i} does not refer to an earlier node")
        if not inputs:
            raise ValueError(f"{kind} node needs at least one input")
        if "kernel" in attrs:
            attrs["kernel"] = _pair(attrs["kernel"])
        if "stride" in attrs:
            attrs["stride"] = _pair(attrs["stride"])
        if "padding" in attrs:
            attrs["padding"] = _quad(attrs["padding"])
        node = LayerNode(name or f"{kind}{len(self.nodes)}", kind, inputs, **attrs)
        if kind == "upconv" and "kernel" not in attrs:
            node.kernel = (5, 5)
        if kind == "upproject" and "kernel" not in attrs:
            node.kernel = (5, 5)
        if any(n.name == node.name for n in self.nodes):
            raise ValueError(f"duplicate node name {node.name!r}")
        self._propagate(node)
        self.nodes.append(node)
        return len(self.nodes) - 1

    def _propagate(self, node: LayerNode) -> None:
        shapes = [self.nodes[i].out_shape for i in node.inputs]
        if node.kind == "add":
            if len(shapes) != 2 or shapes[0] != shapes[1]:
                raise ValueError(f"add node {node.name!r} needs two inputs of equal shape, got {shapes}")
        elif len(shapes) != 1:
            raise ValueError(f"{node.kind} node {node.name!r} takes one input, got {len(shapes)}")
        c, h, w = shapes[0]
        kind = node.kind
        if kind in ("conv", "pool"):
            kh, kw = node.kernel
            sh, sw = node.stride
            t, b, l, r = node.padding
            ho, wo = conv_output_size(h, kh, sh, t, b), conv_output_size(w, kw, sw, l, r)
            if ho < 1 or wo < 1:
                raise ValueError(f"{kind} node {node.name!r} maps {shapes[0]} to non-positive size {(ho, wo)}")
            node.in_channels = c
            if kind == "conv":
                if node.out_channels < 1:
                    raise ValueError(f"conv node {node.name!r} needs out_channels")
                if c % node.groups or node.out_channels % node.groups:
                    raise ValueError(f"conv node {node.name!r}: channels {c}->{node.out_channels} "
                                     f"not divisible by groups={node.groups}")
            else:
                if node.mode not in ("max", "avg"):
                    raise ValueError(f"pool node {node.name!r} needs mode 'max' or 'avg'")
                node.out_channels = c
            node.out_shape = (node.out_channels, ho, wo)
        elif kind == "unpool":
            node.in_channels = node.out_channels = c
            node.out_shape = (c, 2 * h, 2 * w)
        elif kind in ("upconv", "upproject"):
            node.in_channels = c
            node.padding = (2, 2, 2, 2)
            node.out_shape = (node.out_channels, 2 * h, 2 * w)
        elif kind == "fc":
            oc, oh, ow = node.out_shape
            if oc * oh * ow < 1:
                raise ValueError(f"fc node {node.name!r} needs out_shape=(C, H, W)")
            node.in_channels = c * h * w
            node.out_channels = oc * oh * ow
        elif kind in _PASSTHROUGH or kind == "add":
            node.in_channels = node.out_channels = c
            node.out_shape = (c, h, w)
            if kind == "dropout" and not 0.0 < node.keep_prob <= 1.0:
                raise ValueError(f"dropout node {node.name!r} keep_prob must be in (0, 1]")


# ---------------------------------------------------------------------------
# analyses

def node_parameters(node: LayerNode) -> int:
    k = node.kind
    ci, co = node.in_channels, node.out_channels
    if k == "conv":
        kh, kw = node.kernel
        return co * (ci // node.groups) * kh * kw + (co if node.bias else 0)
    if k == "fc":
        return ci * co + (co if node.bias else 0)
    if k == "batchnorm":
        return 2 * ci
    if k == "upconv":
        return co * ci * 25 + (co if node.bias else 0)
    if k == "upproject":
        b = co if node.bias else 0
        return 2 * (co * ci * 25 + b) + co * co * 9 + b
    return 0


def count_parameters(graph: ArchGraph) -> int:
    """Learnable scalars: conv/fc weights and biases, batchnorm scale and shift."""
    return sum(node_parameters(n) for n in graph.nodes)


def memory_estimate(graph: ArchGraph, bytes_per_param: int = 4) -> int:
    return count_parameters(graph) * bytes_per_param


def _as_number(v: Fraction):
    return int(v) if v.denominator == 1 else float(v)


def receptive_fields(graph: ArchGraph):
    """(rf, jump) per node via rf' = rf + (k - 1) * jump, jump' = jump * stride.

    Branches meeting at an add take the elementwise max. Unpooling halves the
    jump, so values past an up-sampling layer may be fractional.
    """
    C, H, W = graph.input_shape
    out = []
    for node in graph.nodes:
        if node.kind == "input":
            out.append(((Fraction(1), Fraction(1)), (Fraction(1), Fraction(1))))
            continue
        ins = [out[i] for i in node.inputs]
        rf = tuple(max(r[0][a] for r in ins) for a in range(2))
        jump = tuple(max(r[1][a] for r in ins) for a in range(2))
        k = node.kind
        if k in ("conv", "pool"):
            rf = tuple(rf[a] + (node.kernel[a] - 1) * jump[a] for a in range(2))
            jump = tuple(jump[a] * node.stride[a] for a in range(2))
        elif k == "unpool":
            jump = tuple(j / 2 for j in jump)
        elif k in ("upconv", "upproject"):
            jump = tuple(j / 2 for j in jump)
            taps = 4 if k == "upconv" else 4 + 2   # 5x5, then 3x3 on the main branch
            rf = tuple(rf[a] + taps * jump[a] for a in range(2))
        elif k == "fc":
            rf = (Fraction(H), Fraction(W))
        out.append((rf, jump))
    return out


def receptive_field(graph: ArchGraph, node=None):
    """Receptive field and jump ``((rf_h, rf_w), (jump_h, jump_w))`` at ``node``."""
    idx = graph.output if node is None else (graph.index(node) if isinstance(node, str) else node)
    rf, jump = receptive_fields(graph)[idx]
    return tuple(_as_number(v) for v in rf), tuple(_as_number(v) for v in jump)


# ---------------------------------------------------------------------------
# plain-text layer table

def _fmt_node(i: int, n: LayerNode) -> str:
    parts = [str(i), n.name, n.kind,
             f"k={n.kernel[0]}x{n.kernel[1]}",
             f"s={n.stride[0]}x{n.stride[1]}",
             "p=" + ",".join(str(v) for v in n.padding),
             f"c={n.in_channels}->{n.out_channels}",
             "in=" + (",".join(str(v) for v in n.inputs) or "-"),
             "out=" + "x".join(str(v) for v in n.out_shape)]
    if not n.bias:
        parts.append("bias=0")
    if n.groups != 1:
        parts.append(f"groups={n.groups}")
    if n.mode:
        parts.append(f"mode={n.mode}")
    if n.kind == "dropout":
        parts.append(f"keep={n.keep_prob!r}")
    return " ".join(parts)


def to_text(graph: ArchGraph) -> str:
    lines = [f"# arch {graph.name or '-'}"]
    lines += [_fmt_node(i, n) for i, n in enumerate(graph.nodes)]
    lines += [f"# tag {k} {v}" for k, v in sorted(graph.tags.items())]
    return "\n".join(lines) + "\n"


def from_text(text: str) -> ArchGraph:
    graph = None
    name = ""
    tags = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            words = line[1:].split()
            if words[:1] == ["arch"]:
                name = "" if words[1] == "-" else words[1]
            elif words[:1] == ["tag"]:
                tags[words[1]] = int(words[2])
            continue
        idx, node_name, kind, *fields = line.split()
        kv = dict(f.split("=", 1) for f in fields)
        out_shape = tuple(int(v) for v in kv["out"].split("x"))
        if kind == "input":
            graph = ArchGraph(out_shape, name)
            graph.nodes[0].name = node_name
            continue
        if graph is None:
            raise ValueError("layer table must start with the input node")
        attrs = dict(
            kernel=tuple(int(v) for v in kv["k"].split("x")),
            stride=tuple(int(v) for v in kv["s"].split("x")),
            padding=tuple(int(v) for v in kv["p"].split(",")),
            out_channels=int(kv["c"].split("->")[1]),
            bias=kv.get("bias", "1") != "0",
            groups=int(kv.get("groups", 1)),
            mode=kv.get("mode", ""),
            keep_prob=float(kv.get("keep", 1.0)),
        )
        if kind == "fc":
            attrs["out_shape"] = out_shape
        got = graph.add(kind, node_name, inputs=[int(v) for v in kv["in"].split(",")], **attrs)
        if got != int(idx):
            raise ValueError(f"node ids must be consecutive, got {idx} at position {got}")
        if graph.nodes[got].out_shape != out_shape:
            raise ValueError(f"node {node_name!r}: declared shape {out_shape} but propagation gives "
                             f"{graph.nodes[got].out_shape}")
    if graph is None:
        raise ValueError("empty layer table")
    graph.tags = tags
    return graph


def fc_replacement_parameters(bottleneck_shape, output_hw, bias: bool = False) -> int:
    """Weights of one dense layer mapping the bottleneck map to every output pixel."""
    n_in = math.prod(bottleneck_shape)
    n_out = math.prod(output_hw)
    return n_in * n_out + (n_out if bias else 0)
