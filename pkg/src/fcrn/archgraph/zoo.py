"""Named architecture variants: contractive backbones plus up-sampling heads."""

from __future__ import annotations

from .graph import ArchGraph

DEFAULT_INPUT = (3, 228, 304)

ARCHITECTURES = (
    "alexnet-fc", "alexnet-upconv", "vgg16-upconv",
    "resnet50-fc-64x48", "resnet50-fc-160x128", "resnet50-deconv",
    "resnet50-upconv", "resnet50-upproj", "toy-upproj",
)

_OUT_OF_SCOPE = {
    "resnet50-deconv": "the transposed-convolution ('deconvolution') baseline is not implemented",
}


class UnsupportedArchitecture(ValueError):
    pass


def _conv_bn(g, name, out, k, stride=1, pad=0, relu=True, inputs=None):
    g.add("conv", name, inputs, kernel=k, stride=stride, padding=pad, out_channels=out, bias=False)
    g.add("batchnorm", f"bn_{name}")
    if relu:
        g.add("relu", f"{name}_relu")
    return g.output


def _bottleneck(g, name, mid, out, stride, project):
    # stride sits on the first 1x1 conv, as in the original ResNet release
    x = g.output
    _conv_bn(g, f"{name}_branch2a", mid, 1, stride)
    _conv_bn(g, f"{name}_branch2b", mid, 3, 1, 1)
    main = _conv_bn(g, f"{name}_branch2c", out, 1, relu=False)
    skip = _conv_bn(g, f"{name}_branch1", out, 1, stride, relu=False, inputs=[x]) if project else x
    g.add("add", name, inputs=[main, skip])
    return g.add("relu", f"{name}_relu")


def resnet50_backbone(g: ArchGraph) -> None:
    """ResNet-50 up to res5c, without the final pooling and classifier."""
    _conv_bn(g, "conv1", 64, 7, 2, 3)
    g.add("pool", "pool1", kernel=3, stride=2, padding=1, mode="max")
    for stage, (mid, out, blocks, stride) in enumerate(
            [(64, 256, 3, 1), (128, 512, 4, 2), (256, 1024, 6, 2), (512, 2048, 3, 2)], start=2):
        for b in range(blocks):
            _bottleneck(g, f"res{stage}{'abcdef'[b]}", mid, out, stride if b == 0 else 1, b == 0)
    g.tags["last_conv"] = g.index("res5c_branch2c")
    g.tags["backbone"] = g.output


def alexnet_backbone(g: ArchGraph) -> None:
    # grouped convs as in the two-GPU ILSVRC model; LRN carries no parameters and is left out
    g.add("conv", "conv1", kernel=11, stride=4, out_channels=96)
    g.add("relu", "relu1")
    g.add("pool", "pool1", kernel=3, stride=2, mode="max")
    g.add("conv", "conv2", kernel=5, padding=2, out_channels=256, groups=2)
    g.add("relu", "relu2")
    g.add("pool", "pool2", kernel=3, stride=2, mode="max")
    g.add("conv", "conv3", kernel=3, padding=1, out_channels=384)
    g.add("relu", "relu3")
    g.add("conv", "conv4", kernel=3, padding=1, out_channels=384, groups=2)
    g.add("relu", "relu4")
    g.add("conv", "conv5", kernel=3, padding=1, out_channels=256, groups=2)
    g.tags["last_conv"] = g.output
    g.add("relu", "relu5")
    g.add("pool", "pool5", kernel=3, stride=2, mode="max")
    g.tags["backbone"] = g.output


def vgg16_backbone(g: ArchGraph) -> None:
    for stage, (width, reps) in enumerate([(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)], start=1):
        for r in range(1, reps + 1):
            g.add("conv", f"conv{stage}_{r}", kernel=3, padding=1, out_channels=width)
            g.tags["last_conv"] = g.output
            g.add("relu", f"relu{stage}_{r}")
        g.add("pool", f"pool{stage}", kernel=2, stride=2, mode="max")
    g.tags["backbone"] = g.output


def toy_backbone(g: ArchGraph, widths=(8, 16, 32)) -> None:
    """8x reduction: a stride-2 conv, two conv-bn-relu-pool stages, one residual block."""
    _conv_bn(g, "conv1", widths[0], 3, 2, 1)
    for i, w in enumerate(widths[1:], start=2):
        _conv_bn(g, f"conv{i}", w, 3, 1, 1)
        g.add("pool", f"pool{i}", kernel=2, stride=2, mode="max")
    x = g.output
    _conv_bn(g, "res_a", widths[-1], 3, 1, 1)
    main = _conv_bn(g, "res_b", widths[-1], 3, 1, 1, relu=False)
    g.add("add", "res", inputs=[main, x])
    g.add("relu", "res_relu")
    g.tags["last_conv"] = g.index("res_b")
    g.tags["backbone"] = g.output


def _up_head(g: ArchGraph, kind: str, channels: int, stages: int, reduce_to: int | None, relu_after_reduce=False):
    g.tags["bottleneck"] = g.output
    if reduce_to is not None:
        _conv_bn(g, "up_reduce", reduce_to, 1, relu=relu_after_reduce)
        channels = reduce_to
    for s in range(1, stages + 1):
        channels //= 2
        g.add(kind, f"up{s}", out_channels=channels)
    g.add("dropout", "drop", keep_prob=0.5)
    g.add("conv", "pred", kernel=3, padding=1, out_channels=1)


def _fc_head(g: ArchGraph, out_hw, hidden: int | None = None):
    g.tags["bottleneck"] = g.output
    if hidden:
        g.add("fc", "fc6", out_shape=(hidden, 1, 1))
        g.add("relu", "fc6_relu")
        g.add("dropout", "fc6_drop", keep_prob=0.5)
    g.add("fc", "pred", out_shape=(1, *out_hw))


def build_architecture(name: str, input_shape=None) -> ArchGraph:
    """Build a named variant; ``input_shape`` is (3, H, W), default 3x228x304 (3x64x64 for toy)."""
    if name in _OUT_OF_SCOPE:
        raise UnsupportedArchitecture(f"{name}: {_OUT_OF_SCOPE[name]}")
    if name not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {name!r}; supported: {', '.join(a for a in ARCHITECTURES if a not in _OUT_OF_SCOPE)}")
    if input_shape is None:
        input_shape = (3, 64, 64) if name.startswith("toy") else DEFAULT_INPUT
    g = ArchGraph(input_shape, name)

    if name.startswith("resnet50"):
        resnet50_backbone(g)
        if name == "resnet50-upproj":
            _up_head(g, "upproject", 2048, 4, reduce_to=1024)
        elif name == "resnet50-upconv":
            _up_head(g, "upconv", 2048, 4, reduce_to=1024)
        else:
            # the fully connected variants keep a 7x7 average pool before the dense layer
            g.add("pool", "pool5", kernel=7, stride=1, mode="avg")
            w, h = (int(v) for v in name.rsplit("-", 1)[1].split("x"))
            _fc_head(g, (h, w))
    elif name.startswith("alexnet"):
        alexnet_backbone(g)
        if name == "alexnet-upconv":
            _up_head(g, "upconv", 256, 4, reduce_to=None)
        else:
            c, h, w = g.shape(g.tags["backbone"])
            _fc_head(g, (16 * h, 16 * w), hidden=4096)
    elif name == "vgg16-upconv":
        vgg16_backbone(g)
        _up_head(g, "upconv", 512, 4, reduce_to=None)
    elif name == "toy-upproj":
        toy_backbone(g)
        _up_head(g, "upproject", 32, 2, reduce_to=16, relu_after_reduce=True)
    return g
