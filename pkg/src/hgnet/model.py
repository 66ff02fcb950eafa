"""Stem, recursive hourglass, and the stacked network with intermediate
prediction heads.

Layout rules that make every skip addition type-check: 3x3 convolutions
pad 1, the 7x7 stem conv pads 3 with stride 2, 1x1 convolutions pad 0.
Spatial size changes only at pooling, upsampling, or the stem stride.

Residual modules are pre-activation bottlenecks (bn -> relu -> conv,
three rounds: 1x1 in->mid, 3x3 mid->mid, 1x1 mid->out with mid = out/2)
plus an identity skip, projected by a 1x1 conv only when the channel
count changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    BatchNormState,
    Tensor,
    add,
    batchnorm,
    conv2d,
    maxpool2x2,
    relu,
    upsample_nearest2x,
)


@dataclass
class ModelConfig:
    """Architecture hyperparameters for the stacked network."""

    num_joints: int
    num_stacks: int = 8
    num_features: int = 256
    hourglass_depth: int = 4
    modules_per_location: int = 1
    input_resolution: int = 256

    @property
    def output_resolution(self):
        return self.input_resolution // 4

    @property
    def innermost_resolution(self):
        return self.output_resolution // (2 ** self.hourglass_depth)

    def validate(self):
        if self.num_joints < 1:
            raise ValueError("num_joints must be >= 1")
        if self.num_stacks < 1:
            raise ValueError("num_stacks must be >= 1")
        if self.modules_per_location < 1:
            raise ValueError("modules_per_location must be >= 1")
        if self.input_resolution % 4:
            raise ValueError("input_resolution must be divisible by 4")
        if self.num_features % 4:
            raise ValueError("num_features must be divisible by 4")
        r = self.output_resolution
        if r % (2 ** self.hourglass_depth):
            raise ValueError(
                f"output resolution {r} not divisible by 2^depth={2 ** self.hourglass_depth}"
            )
        if self.innermost_resolution < 1:
            raise ValueError("hourglass_depth too large for the output resolution")

    @classmethod
    def desk_scale(cls, num_joints):
        """Small configuration trainable in minutes on a CPU."""
        return cls(
            num_joints=num_joints,
            num_stacks=2,
            num_features=64,
            hourglass_depth=2,
            input_resolution=64,
        )

    @classmethod
    def full_scale(cls, num_joints):
        """The reference configuration: 8 stacks of 256 features at 256 px."""
        return cls(num_joints=num_joints)

    def to_dict(self):
        return {
            "num_joints": self.num_joints,
            "num_stacks": self.num_stacks,
            "num_features": self.num_features,
            "hourglass_depth": self.hourglass_depth,
            "modules_per_location": self.modules_per_location,
            "input_resolution": self.input_resolution,
        }

    @classmethod
    def from_dict(cls, d):
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class ConvParams:
    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0


@dataclass
class BNParams:
    gamma: Tensor
    beta: Tensor
    state: BatchNormState


@dataclass
class ResidualParams:
    bn1: BNParams
    conv1: ConvParams
    bn2: BNParams
    conv2: ConvParams
    bn3: BNParams
    conv3: ConvParams
    skip: ConvParams | None = None


@dataclass
class HourglassParams:
    depth: int
    up1: list
    low1: list
    low2: object  # HourglassParams when depth > 1, else list[ResidualParams]
    low3: list


@dataclass
class StemParams:
    conv: ConvParams
    bn: BNParams
    res1: ResidualParams
    res2: ResidualParams
    res3: ResidualParams


@dataclass
class StackParams:
    hourglass: HourglassParams
    post: list
    head_conv: ConvParams
    head_bn: BNParams
    head_out: ConvParams
    remap_feature: ConvParams | None = None
    remap_heatmap: ConvParams | None = None


@dataclass
class StackedModelParams:
    config: ModelConfig
    stem: StemParams
    stacks: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def _conv(x, p):
    return conv2d(x, p.weight, p.bias, stride=p.stride, padding=p.padding)


def _bn(x, p, mode):
    return batchnorm(x, p.gamma, p.beta, p.state, mode)


def residual_forward(x, p, mode):
    """Pre-activation bottleneck branch plus (projected) identity skip."""
    out = _conv(relu(_bn(x, p.bn1, mode)), p.conv1)
    out = _conv(relu(_bn(out, p.bn2, mode)), p.conv2)
    out = _conv(relu(_bn(out, p.bn3, mode)), p.conv3)
    skip = x if p.skip is None else _conv(x, p.skip)
    return add(skip, out)


def _chain(x, residuals, mode):
    for r in residuals:
        x = residual_forward(x, r, mode)
    return x


def hourglass_forward(x, p, mode):
    """One bottom-up/top-down pass; output shape equals input shape.

    Recursion: a skip branch of residuals at the incoming resolution,
    a pooled main branch that recurses (or bottoms out in residuals),
    then more residuals and nearest-neighbor upsampling, added back.
    """
    up = _chain(x, p.up1, mode)
    low = _chain(maxpool2x2(x), p.low1, mode)
    if isinstance(p.low2, HourglassParams):
        low = hourglass_forward(low, p.low2, mode)
    else:
        low = _chain(low, p.low2, mode)
    low = _chain(low, p.low3, mode)
    return add(up, upsample_nearest2x(low))


def stem_forward(x, p, mode):
    """7x7/stride-2 conv, residual, max pool, two residuals: Rin -> Rin/4."""
    if x.shape[2] % 4 or x.shape[3] % 4:
        raise ValueError(f"stem input resolution must be divisible by 4, got {x.shape[2:]}")
    out = relu(_bn(_conv(x, p.conv), p.bn, mode))
    out = residual_forward(out, p.res1, mode)
    out = maxpool2x2(out)
    out = residual_forward(out, p.res2, mode)
    return residual_forward(out, p.res3, mode)


def stacked_forward(image, params, mode):
    """Full network forward pass.

    Returns one K-channel heatmap tensor per stack so a loss can attach
    to every intermediate prediction. Between stacks, the heatmaps are
    remapped back to feature width by a 1x1 conv and added to the
    remapped post-hourglass features and the previous stack's input.
    """
    cfg = params.config
    if image.shape[1] != 3 or image.shape[2] != cfg.input_resolution or image.shape[3] != cfg.input_resolution:
        raise ValueError(
            f"expected input of shape (N,3,{cfg.input_resolution},{cfg.input_resolution}), got {image.shape}"
        )
    x = stem_forward(image, params.stem, mode)
    heatmaps = []
    for stack in params.stacks:
        hg = hourglass_forward(x, stack.hourglass, mode)
        inter = _chain(hg, stack.post, mode)
        ll = relu(_bn(_conv(inter, stack.head_conv), stack.head_bn, mode))
        heat = _conv(ll, stack.head_out)
        heatmaps.append(heat)
        if stack.remap_feature is not None:
            x = add(x, add(_conv(inter, stack.remap_feature), _conv(heat, stack.remap_heatmap)))
    return heatmaps


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _init_conv(rng, cin, cout, k, dtype, stride=1, padding=0):
    fan_in = cin * k * k
    w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, k, k))
    return ConvParams(
        weight=Tensor(w.astype(dtype), requires_grad=True),
        bias=Tensor(np.zeros(cout, dtype=dtype), requires_grad=True),
        stride=stride,
        padding=padding,
    )


def _init_bn(c, dtype):
    return BNParams(
        gamma=Tensor(np.ones(c, dtype=dtype), requires_grad=True),
        beta=Tensor(np.zeros(c, dtype=dtype), requires_grad=True),
        state=BatchNormState(c, dtype=dtype),
    )


def _init_residual(rng, cin, cout, dtype):
    mid = cout // 2
    return ResidualParams(
        bn1=_init_bn(cin, dtype),
        conv1=_init_conv(rng, cin, mid, 1, dtype),
        bn2=_init_bn(mid, dtype),
        conv2=_init_conv(rng, mid, mid, 3, dtype, padding=1),
        bn3=_init_bn(mid, dtype),
        conv3=_init_conv(rng, mid, cout, 1, dtype),
        skip=None if cin == cout else _init_conv(rng, cin, cout, 1, dtype),
    )


def _init_chain(rng, count, c, dtype):
    return [_init_residual(rng, c, c, dtype) for _ in range(count)]


def _init_hourglass(rng, depth, m, c, dtype):
    return HourglassParams(
        depth=depth,
        up1=_init_chain(rng, m, c, dtype),
        low1=_init_chain(rng, m, c, dtype),
        low2=_init_hourglass(rng, depth - 1, m, c, dtype) if depth > 1 else _init_chain(rng, m, c, dtype),
        low3=_init_chain(rng, m, c, dtype),
    )


def init_params(config, seed, dtype=np.float32):
    """Deterministically initialize all learnable parameters.

    Conv weights are zero-mean normal with variance 2/fan_in; biases and
    batch-norm betas start at zero, gammas at one. The same seed always
    yields bit-identical parameters.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    f = config.num_features
    stem = StemParams(
        conv=_init_conv(rng, 3, f // 4, 7, dtype, stride=2, padding=3),
        bn=_init_bn(f // 4, dtype),
        res1=_init_residual(rng, f // 4, f // 2, dtype),
        res2=_init_residual(rng, f // 2, f // 2, dtype),
        res3=_init_residual(rng, f // 2, f, dtype),
    )
    m = config.modules_per_location
    stacks = []
    for i in range(config.num_stacks):
        last = i == config.num_stacks - 1
        stacks.append(
            StackParams(
                hourglass=_init_hourglass(rng, config.hourglass_depth, m, f, dtype),
                post=_init_chain(rng, m, f, dtype),
                head_conv=_init_conv(rng, f, f, 1, dtype),
                head_bn=_init_bn(f, dtype),
                head_out=_init_conv(rng, f, config.num_joints, 1, dtype),
                remap_feature=None if last else _init_conv(rng, f, f, 1, dtype),
                remap_heatmap=None if last else _init_conv(rng, config.num_joints, f, 1, dtype),
            )
        )
    return StackedModelParams(config=config, stem=stem, stacks=stacks)


# ---------------------------------------------------------------------------
# Parameter traversal
# ---------------------------------------------------------------------------

def _walk_conv(name, p):
    yield name + ".weight", p.weight
    yield name + ".bias", p.bias


def _walk_bn(name, p):
    yield name + ".gamma", p.gamma
    yield name + ".beta", p.beta


def _walk_residual(name, r):
    yield from _walk_bn(name + ".bn1", r.bn1)
    yield from _walk_conv(name + ".conv1", r.conv1)
    yield from _walk_bn(name + ".bn2", r.bn2)
    yield from _walk_conv(name + ".conv2", r.conv2)
    yield from _walk_bn(name + ".bn3", r.bn3)
    yield from _walk_conv(name + ".conv3", r.conv3)
    if r.skip is not None:
        yield from _walk_conv(name + ".skip", r.skip)


def _walk_chain(name, residuals):
    for i, r in enumerate(residuals):
        yield from _walk_residual(f"{name}.{i}", r)


def _walk_hourglass(name, hg):
    yield from _walk_chain(name + ".up1", hg.up1)
    yield from _walk_chain(name + ".low1", hg.low1)
    if isinstance(hg.low2, HourglassParams):
        yield from _walk_hourglass(name + ".low2", hg.low2)
    else:
        yield from _walk_chain(name + ".low2", hg.low2)
    yield from _walk_chain(name + ".low3", hg.low3)


def named_parameters(params):
    """All learnable tensors in a stable, checkpoint-defining order."""
    yield from _walk_conv("stem.conv", params.stem.conv)
    yield from _walk_bn("stem.bn", params.stem.bn)
    yield from _walk_residual("stem.res1", params.stem.res1)
    yield from _walk_residual("stem.res2", params.stem.res2)
    yield from _walk_residual("stem.res3", params.stem.res3)
    for i, stack in enumerate(params.stacks):
        base = f"stack.{i}"
        yield from _walk_hourglass(base + ".hourglass", stack.hourglass)
        yield from _walk_chain(base + ".post", stack.post)
        yield from _walk_conv(base + ".head_conv", stack.head_conv)
        yield from _walk_bn(base + ".head_bn", stack.head_bn)
        yield from _walk_conv(base + ".head_out", stack.head_out)
        if stack.remap_feature is not None:
            yield from _walk_conv(base + ".remap_feature", stack.remap_feature)
            yield from _walk_conv(base + ".remap_heatmap", stack.remap_heatmap)


def _bn_states_of_residual(name, r):
    yield name + ".bn1", r.bn1.state
    yield name + ".bn2", r.bn2.state
    yield name + ".bn3", r.bn3.state


def named_bn_states(params):
    """All running-statistics holders, aligned with named_parameters order."""
    for name, tensor in _named_bn_params(params):
        yield name, tensor


def _named_bn_params(params):
    yield "stem.bn", params.stem.bn.state
    for res_name in ("res1", "res2", "res3"):
        yield from _bn_states_of_residual(f"stem.{res_name}", getattr(params.stem, res_name))
    for i, stack in enumerate(params.stacks):
        base = f"stack.{i}"
        yield from _hourglass_bn_states(base + ".hourglass", stack.hourglass)
        for j, r in enumerate(stack.post):
            yield from _bn_states_of_residual(f"{base}.post.{j}", r)
        yield base + ".head_bn", stack.head_bn.state


def _hourglass_bn_states(name, hg):
    for branch in ("up1", "low1"):
        for j, r in enumerate(getattr(hg, branch)):
            yield from _bn_states_of_residual(f"{name}.{branch}.{j}", r)
    if isinstance(hg.low2, HourglassParams):
        yield from _hourglass_bn_states(name + ".low2", hg.low2)
    else:
        for j, r in enumerate(hg.low2):
            yield from _bn_states_of_residual(f"{name}.low2.{j}", r)
    for j, r in enumerate(hg.low3):
        yield from _bn_states_of_residual(f"{name}.low3.{j}", r)


def stack_parameters(params, stack_index):
    """Learnable tensors belonging to one stack (for ablation probes)."""
    prefix = f"stack.{stack_index}."
    return [(n, t) for n, t in named_parameters(params) if n.startswith(prefix)]


# ---------------------------------------------------------------------------
# Parameter counting
# ---------------------------------------------------------------------------

def count_parameters(params):
    """Number of learnable scalars in an instantiated model."""
    return sum(t.numel for _, t in named_parameters(params))


def _conv_size(cin, cout, k):
    return cin * cout * k * k + cout


def _bn_size(c):
    return 2 * c


def _residual_size(cin, cout):
    mid = cout // 2
    total = (
        _bn_size(cin)
        + _conv_size(cin, mid, 1)
        + _bn_size(mid)
        + _conv_size(mid, mid, 3)
        + _bn_size(mid)
        + _conv_size(mid, cout, 1)
    )
    if cin != cout:
        total += _conv_size(cin, cout, 1)
    return total


def parameter_count(config):
    """Learnable parameter count as a pure function of the configuration.

    Used by the equal-capacity comparison of stacking arrangements:
    (stacks, modules) pairs with equal products share the hourglass
    budget exactly, and differ only in heads and remap layers.
    """
    f, k, m, s, d = (
        config.num_features,
        config.num_joints,
        config.modules_per_location,
        config.num_stacks,
        config.hourglass_depth,
    )
    stem = (
        _conv_size(3, f // 4, 7)
        + _bn_size(f // 4)
        + _residual_size(f // 4, f // 2)
        + _residual_size(f // 2, f // 2)
        + _residual_size(f // 2, f)
    )
    hourglass = (3 * d + 1) * m * _residual_size(f, f)
    per_stack = (
        hourglass
        + m * _residual_size(f, f)  # post-hourglass residuals
        + _conv_size(f, f, 1)
        + _bn_size(f)
        + _conv_size(f, k, 1)
    )
    remaps = _conv_size(f, f, 1) + _conv_size(k, f, 1)
    return stem + s * per_stack + (s - 1) * remaps
