#!/usr/bin/env python3
"""Writes fixtures/refnet.json, a MobileNet-SSD-like graph at 300x300."""
import json
import sys

layers = []


def add(name, kind, inputs, k=None, stride=1, pad=0, out=None):
    layer = {"name": name, "kind": kind}
    if k is not None:
        layer["kernel"] = k
        layer["stride"] = stride
        layer["pad"] = pad
    if out is not None:
        layer["out_channels"] = out
    layer["inputs"] = inputs
    layers.append(layer)
    return name


def conv(name, src, k, out, stride=1):
    c = add(name, "conv", [src], k, stride, k // 2, out)
    return add(name + "_relu", "relu", [c])


def dw(name, src, stride=1):
    c = add(name, "dwconv", [src], 3, stride, 1)
    return add(name + "_relu", "relu", [c])


x = conv("conv0", "input", 3, 32, 2)
# (pointwise width, depthwise stride) for the 13 separable blocks
blocks = [(64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2),
          (512, 1), (512, 1), (512, 1), (512, 1), (512, 1), (1024, 2), (1024, 1)]
feats = {}
for i, (width, stride) in enumerate(blocks, start=1):
    x = dw(f"conv{i}_dw", x, stride)
    x = conv(f"conv{i}", x, 1, width)
    feats[i] = x

extras = [(256, 512), (128, 256), (128, 256), (64, 128)]
sources = [feats[11], feats[13]]
for i, (mid, out) in enumerate(extras, start=14):
    x = conv(f"conv{i}_1", x, 1, mid)
    x = conv(f"conv{i}_2", x, 3, out, 2)
    sources.append(x)

# Heads: 3x3 depth-wise then a 1x1 predictor emitting A*(4+C) channels, C=3.
# The first two feature maps carry two extra branches (the split halves).
per_prior = 4 + 3
anchors = [3, 6, 6, 6, 4, 4]
heads = []
for i, (src, a) in enumerate(zip(sources, anchors)):
    heads.append((f"head{i}", src, a))
for i in range(2):
    heads.append((f"head{i}_extra", sources[i], anchors[i]))
for name, src, a in heads:
    d = add(name + "_dw", "dwconv", [src], 3, 1, 1)
    add(name, "detect_head", [d], 1, 1, 0, a * per_prior)

graph = {"input": [3, 300, 300], "layers": layers}
out = sys.argv[1] if len(sys.argv) > 1 else "fixtures/refnet.json"
with open(out, "w") as f:
    json.dump(graph, f, indent=2)
    f.write("\n")
