"""Executable networks instantiated from an :class:`ArchGraph`."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..upsample import (UpProjParams, decompose_filter, recompose_filter, unpool, unpool_backward,
                        upconv_fast, upconv_fast_backward, upconv_naive, upconv_naive_backward,
                        upproject_backward, upproject_forward)
from .graph import ArchGraph, count_parameters, from_text, to_text

INIT_STD = 0.1          # N(0, 0.01) variance for every weight
MAX_FC_WEIGHTS = 1 << 24


class Layer:
    def __init__(self, node):
        self.node = node
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, xs, train, rng):
        raise NotImplementedError

    def backward(self, grad):
        """Return one input gradient per input and fill ``self.grads``."""
        raise NotImplementedError


class Identity(Layer):
    def forward(self, xs, train, rng):
        return xs[0]

    def backward(self, grad):
        return [grad]


class Conv(Layer):
    input_grad = True

    def __init__(self, node, rng):
        super().__init__(node)
        n = node
        self.params["weight"] = rng.normal(0.0, INIT_STD, (n.out_channels, n.in_channels // n.groups, *n.kernel))
        if n.bias:
            self.params["bias"] = np.zeros(n.out_channels)

    def _group_params(self):
        g = self.node.groups
        w, b = self.params["weight"], self.params.get("bias")
        step = w.shape[0] // g
        for i in range(g):
            sl = slice(i * step, (i + 1) * step)
            yield i, T.ConvParams(w[sl], None if b is None else b[sl], self.node.stride, self.node.padding)

    def forward(self, xs, train, rng):
        x = self.x = xs[0]
        if self.node.groups == 1:
            return T.conv2d_forward(x, next(self._group_params())[1])
        cin = x.shape[1] // self.node.groups
        outs = [T.conv2d_forward(x[:, i * cin:(i + 1) * cin], p) for i, p in self._group_params()]
        return np.concatenate(outs, axis=1)

    def backward(self, grad):
        g = self.node.groups
        x = self.x
        cin = x.shape[1] // g
        cout = self.node.out_channels // g
        gxs, gws, gbs = [], [], []
        for i, p in self._group_params():
            gx, gw, gb = T.conv2d_backward(x[:, i * cin:(i + 1) * cin], p,
                                           np.ascontiguousarray(grad[:, i * cout:(i + 1) * cout]),
                                           input_grad=self.input_grad)
            gxs.append(gx)
            gws.append(gw)
            gbs.append(gb)
        self.grads["weight"] = np.concatenate(gws, axis=0)
        if "bias" in self.params:
            self.grads["bias"] = np.concatenate(gbs)
        if not self.input_grad:
            return [None]
        return [np.concatenate(gxs, axis=1) if g > 1 else gxs[0]]


class FC(Layer):
    def __init__(self, node, rng):
        super().__init__(node)
        if node.in_channels * node.out_channels > MAX_FC_WEIGHTS:
            raise NotImplementedError(
                f"fc node {node.name!r} has {node.in_channels * node.out_channels} weights; "
                "dense layers are executable at toy scale only")
        self.params["weight"] = rng.normal(0.0, INIT_STD, (node.out_channels, node.in_channels))
        if node.bias:
            self.params["bias"] = np.zeros(node.out_channels)

    def forward(self, xs, train, rng):
        self.x = xs[0]
        out = T.fc_forward(self.x, self.params["weight"], self.params.get("bias"))
        return out.reshape(out.shape[0], *self.node.out_shape)

    def backward(self, grad):
        gx, gw, gb = T.fc_backward(self.x, self.params["weight"], grad, "bias" in self.params)
        self.grads["weight"] = gw
        if gb is not None:
            self.grads["bias"] = gb
        return [gx]


class BatchNorm(Layer):
    def __init__(self, node, rng):
        super().__init__(node)
        c = node.in_channels
        self.params["gamma"] = np.ones(c)
        self.params["beta"] = np.zeros(c)
        self.buffers["running_mean"] = np.zeros(c)
        self.buffers["running_var"] = np.ones(c)

    def forward(self, xs, train, rng):
        self.x, self.train = xs[0], train
        y, m, v = T.batchnorm_forward(self.x, self.params["gamma"], self.params["beta"],
                                      self.buffers["running_mean"], self.buffers["running_var"], train)
        self.buffers["running_mean"], self.buffers["running_var"] = m, v
        return y

    def backward(self, grad):
        kw = {}
        if not self.train:
            kw = dict(running_mean=self.buffers["running_mean"], running_var=self.buffers["running_var"])
        gx, gg, gb = T.batchnorm_backward(self.x, self.params["gamma"], grad, self.train, **kw)
        self.grads["gamma"], self.grads["beta"] = gg, gb
        return [gx]


class ReLU(Layer):
    def forward(self, xs, train, rng):
        self.x = xs[0]
        return T.relu(self.x)

    def backward(self, grad):
        return [T.relu_backward(self.x, grad)]


class Pool(Layer):
    def forward(self, xs, train, rng):
        self.x = xs[0]
        n = self.node
        f = T.maxpool_forward if n.mode == "max" else T.avgpool_forward
        return f(self.x, n.kernel, n.stride, n.padding)

    def backward(self, grad):
        n = self.node
        f = T.maxpool_backward if n.mode == "max" else T.avgpool_backward
        return [f(self.x, grad, n.kernel, n.stride, n.padding)]


class Dropout(Layer):
    def forward(self, xs, train, rng):
        y, self.mask = T.dropout_forward(xs[0], self.node.keep_prob, rng, train)
        return y

    def backward(self, grad):
        return [T.dropout_backward(grad, self.mask)]


class Add(Layer):
    def forward(self, xs, train, rng):
        return xs[0] + xs[1]

    def backward(self, grad):
        return [grad, grad]


class Unpool(Layer):
    def forward(self, xs, train, rng):
        return unpool(xs[0])

    def backward(self, grad):
        return [unpool_backward(grad)]


class UpConv(Layer):
    def __init__(self, node, rng, fast):
        super().__init__(node)
        self.fast = fast
        self.params["weight"] = rng.normal(0.0, INIT_STD, (node.out_channels, node.in_channels, 5, 5))
        if node.bias:
            self.params["bias"] = np.zeros(node.out_channels)

    def _conv(self):
        return T.ConvParams(self.params["weight"], self.params.get("bias"))

    def forward(self, xs, train, rng):
        self.x = xs[0]
        if self.fast:
            return upconv_fast(self.x, decompose_filter(self._conv()))
        return upconv_naive(self.x, self._conv())

    def backward(self, grad):
        if self.fast:
            gx, dec = upconv_fast_backward(self.x, decompose_filter(self._conv()), grad)
            rec = recompose_filter(dec)
            gw, gb = rec.weight, rec.bias
        else:
            gx, gw, gb = upconv_naive_backward(self.x, self._conv(), grad)
        self.grads["weight"] = gw
        if gb is not None:
            self.grads["bias"] = gb
        return [gx]


class UpProject(Layer):
    _BRANCHES = ("conv1", "conv2", "proj")

    def __init__(self, node, rng, fast):
        super().__init__(node)
        self.fast = fast
        ci, co = node.in_channels, node.out_channels
        shapes = {"conv1": (co, ci, 5, 5), "conv2": (co, co, 3, 3), "proj": (co, ci, 5, 5)}
        for b in self._BRANCHES:
            self.params[f"{b}.weight"] = rng.normal(0.0, INIT_STD, shapes[b])
            if node.bias:
                self.params[f"{b}.bias"] = np.zeros(co)

    def _block(self):
        return UpProjParams(*(T.ConvParams(self.params[f"{b}.weight"], self.params.get(f"{b}.bias"))
                              for b in self._BRANCHES))

    def forward(self, xs, train, rng):
        self.x = xs[0]
        self.p = self._block()
        out, self.cache = upproject_forward(self.x, self.p, fast=self.fast)
        return out

    def backward(self, grad):
        gx, g = upproject_backward(self.x, self.p, grad, cache=self.cache)
        for b in self._BRANCHES:
            cp = getattr(g, b)
            self.grads[f"{b}.weight"] = cp.weight
            if cp.bias is not None:
                self.grads[f"{b}.bias"] = cp.bias
        return [gx]


def _make_layer(node, rng, fast):
    k = node.kind
    if k == "input":
        return Identity(node)
    if k == "conv":
        return Conv(node, rng)
    if k == "fc":
        return FC(node, rng)
    if k == "batchnorm":
        return BatchNorm(node, rng)
    if k == "relu":
        return ReLU(node)
    if k == "pool":
        return Pool(node)
    if k == "dropout":
        return Dropout(node)
    if k == "add":
        return Add(node)
    if k == "unpool":
        return Unpool(node)
    if k == "upconv":
        return UpConv(node, rng, fast)
    if k == "upproject":
        return UpProject(node, rng, fast)
    raise ValueError(f"node {node.name!r} of kind {k!r} is not executable")


class Network:
    """Runs the nodes of a graph in order and backpropagates through them in reverse.

    ``fast`` selects the decomposed up-convolution kernels; parameters are
    stored as full 5x5 filters either way, so switching is free.
    """

    def __init__(self, graph: ArchGraph, seed: int = 0, fast: bool = True):
        self.graph = graph
        self.seed = seed
        init_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        self.layers = [_make_layer(n, init_rng, fast) for n in graph.nodes]
        self.dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))

    @property
    def fast(self) -> bool:
        return any(getattr(l, "fast", False) for l in self.layers)

    def set_fast(self, fast: bool) -> None:
        for l in self.layers:
            if hasattr(l, "fast"):
                l.fast = fast

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{l.node.name}.{k}": v for l in self.layers for k, v in l.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{l.node.name}.{k}": v for l in self.layers for k, v in l.grads.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{l.node.name}.{k}": v for l in self.layers for k, v in l.buffers.items()}

    def num_parameters(self) -> int:
        return sum(v.size for v in self.parameters().values())

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        expected = self.graph.input_shape
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ValueError(f"network expects input (N, {', '.join(map(str, expected))}), got {x.shape}")
        acts = [None] * len(self.layers)
        for i, (layer, node) in enumerate(zip(self.layers, self.graph.nodes)):
            xs = [x] if node.kind == "input" else [acts[j] for j in node.inputs]
            acts[i] = layer.forward(xs, train, self.dropout_rng)
        self._n_batch = x.shape[0]
        return acts[-1]

    def backward(self, grad_out: np.ndarray, input_grad: bool = False):
        """Backpropagate ``grad_out``; parameter grads land in each layer.

        Returns the gradient w.r.t. the network input when ``input_grad`` is set,
        otherwise None (first-layer convs then skip that work).
        """
        for i, node in enumerate(self.graph.nodes):
            if isinstance(self.layers[i], Conv):
                self.layers[i].input_grad = input_grad or 0 not in node.inputs
        grads = [None] * len(self.layers)
        grads[-1] = grad_out
        for i in range(len(self.layers) - 1, -1, -1):
            g = grads[i]
            node = self.graph.nodes[i]
            if g is None:
                # dead branch: nothing downstream consumed this node
                g = np.zeros((self._n_batch, *node.out_shape))
            if node.kind == "input":
                return g if input_grad else None
            in_grads = self.layers[i].backward(g)
            for j, gj in zip(node.inputs, in_grads):
                if gj is not None:
                    grads[j] = gj if grads[j] is None else grads[j] + gj

    def load_state(self, params: dict, buffers: dict | None = None) -> None:
        for l in self.layers:
            for k in l.params:
                l.params[k] = np.array(params[f"{l.node.name}.{k}"], dtype=np.float64)
            for k in l.buffers:
                if buffers is not None:
                    l.buffers[k] = np.array(buffers[f"{l.node.name}.{k}"], dtype=np.float64)

    def save(self, path) -> None:
        arrays = {f"param/{k}": v for k, v in self.parameters().items()}
        arrays.update({f"buffer/{k}": v for k, v in self.buffers().items()})
        meta = json.dumps({"graph": to_text(self.graph), "seed": self.seed, "fast": self.fast})
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(meta), **arrays)


def instantiate(graph: ArchGraph, seed: int = 0, fast: bool = True) -> Network:
    return Network(graph, seed, fast)


def load_network(path) -> Network:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        params = {k[6:]: z[k] for k in z.files if k.startswith("param/")}
        buffers = {k[7:]: z[k] for k in z.files if k.startswith("buffer/")}
    net = Network(from_text(meta["graph"]), meta["seed"], meta["fast"])
    net.load_state(params, buffers)
    if net.num_parameters() != count_parameters(net.graph):
        raise ValueError("loaded parameter count disagrees with the graph")
    return net
