"""Versioned plain-text model files; write -> read -> write is byte-stable."""

from .aggregate import WindowSpec
from .boosting import BoostedModel, TreeNode
from .features import FeatureConfig, channel_names, channel_groups
from .pyramid import LambdaTable, CHANNEL_GROUPS

__all__ = ["save_model", "load_model", "MODEL_HEADER", "ModelFormatError"]

MODEL_HEADER = "orsim-model v1"


class ModelFormatError(ValueError):
    pass


def _fmt(x):
    return repr(float(x))


def _write_node(lines, node):
    if node.is_leaf:
        lines.append(f"l {node.value} {_fmt(node.confidence)}")
    else:
        lines.append(f"s {node.feature} {_fmt(node.threshold)}")
        _write_node(lines, node.left)
        _write_node(lines, node.right)


def save_model(path, model, header_lines=()):
    cfg = model.config
    lines = [MODEL_HEADER]
    for extra in header_lines:
        lines.append(f"# {extra}")
    lines.append(f"window {model.window.width} {model.window.height} "
                 f"{model.window.shrink} {model.window.object_width} "
                 f"{model.window.object_height}")
    lines.append(f"colorspace {cfg.color_space}")
    lines.append(f"m {cfg.m}")
    lines.append(f"sigma {cfg.sigma}")
    lines.append(f"families {','.join(cfg.families)}")
    lines.append(f"smooth_radius {cfg.smooth_radius}")
    lines.append(f"k1_radius_cells {cfg.k1_radius_cells}")
    names = channel_names(cfg)
    groups = channel_groups(cfg)
    lines.append(f"channels {len(names)}")
    for i, (name, group) in enumerate(zip(names, groups)):
        lines.append(f"channel {i} {name} {group}")
    for g in CHANNEL_GROUPS:
        lam = model.lambda_table.lambdas.get(g, 0.0)
        r2 = model.lambda_table.r2.get(g, 1.0)
        lines.append(f"lambda {g} {_fmt(lam)} {_fmt(r2)}")
    lines.append(f"trees {len(model.trees)}")
    for i, (tree, alpha, theta) in enumerate(zip(model.trees, model.alphas,
                                                 model.cascade_thresholds)):
        lines.append(f"tree {i} {_fmt(alpha)} {_fmt(theta)}")
        _write_node(lines, tree)
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, path):
        with open(path, encoding="utf-8") as fh:
            self.lines = [ln.rstrip("\n") for ln in fh]
        self.pos = 0

    def next(self):
        while self.pos < len(self.lines):
            line = self.lines[self.pos]
            self.pos += 1
            if line.startswith("#") or not line.strip():
                continue
            return line
        raise ModelFormatError("unexpected end of model file")


def _read_node(reader):
    parts = reader.next().split()
    if parts[0] == "l":
        return TreeNode(value=int(parts[1]), confidence=float(parts[2]))
    if parts[0] == "s":
        node = TreeNode(feature=int(parts[1]), threshold=float(parts[2]))
        node.left = _read_node(reader)
        node.right = _read_node(reader)
        return node
    raise ModelFormatError(f"bad node record {parts[0]!r}")


def _expect(reader, key):
    parts = reader.next().split()
    if parts[0] != key:
        raise ModelFormatError(f"expected {key!r}, got {parts[0]!r}")
    return parts[1:]


def load_model(path):
    reader = _Reader(path)
    if reader.next() != MODEL_HEADER:
        raise ModelFormatError("missing model header")
    w, h, shrink, obj_w, obj_h = map(int, _expect(reader, "window"))
    color_space = _expect(reader, "colorspace")[0]
    m = int(_expect(reader, "m")[0])
    sigma = int(_expect(reader, "sigma")[0])
    families = tuple(_expect(reader, "families")[0].split(","))
    smooth_radius = int(_expect(reader, "smooth_radius")[0])
    k1 = int(_expect(reader, "k1_radius_cells")[0])
    cfg = FeatureConfig(color_space=color_space, m=m, sigma=sigma,
                        families=families, shrink=shrink,
                        smooth_radius=smooth_radius, k1_radius_cells=k1)
    n_channels = int(_expect(reader, "channels")[0])
    names = []
    for i in range(n_channels):
        parts = _expect(reader, "channel")
        if int(parts[0]) != i:
            raise ModelFormatError("channel records out of order")
        names.append(parts[1])
    if names != channel_names(cfg):
        raise ModelFormatError("channel enumeration does not match config")
    lambdas, r2 = {}, {}
    for g in CHANNEL_GROUPS:
        parts = _expect(reader, "lambda")
        if parts[0] != g:
            raise ModelFormatError("lambda records out of order")
        lambdas[g] = float(parts[1])
        r2[g] = float(parts[2])
    n_trees = int(_expect(reader, "trees")[0])
    trees, alphas, thetas = [], [], []
    for i in range(n_trees):
        parts = _expect(reader, "tree")
        if int(parts[0]) != i:
            raise ModelFormatError("tree records out of order")
        alphas.append(float(parts[1]))
        thetas.append(float(parts[2]))
        trees.append(_read_node(reader))
    if reader.next() != "end":
        raise ModelFormatError("missing end marker")
    return BoostedModel(trees, alphas, thetas,
                        WindowSpec(w, h, shrink, obj_w, obj_h), cfg,
                        LambdaTable(lambdas, r2), names)
