"""Small convolutional encoder-decoder used for velocity and initialization.

Two resolution levels: an input block at full resolution, an average-pool
down to half resolution, a bottleneck, a nearest-neighbor upsample back, a
skip concatenation, and an output head.  Hidden layers use tanh; the output
conv is linear.  All convolutions are zero-padded so spatial size is
preserved, which is why inputs must have even dimensions (the pool/upsample
pair must round-trip exactly).

The same class serves two roles, differing only in input channels:

    velocity_net    [phi * PHI_INPUT_SCALE, image, prompt heatmap] -> V
    initializer_net [image, prompt heatmap] -> visible-mask logits

Forward runs on the shared autodiff runtime: pass a Tape (plus a parameter
binding) to record, or nothing to execute eagerly through the identical
primitive code.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    AVGPOOL2,
    CONCAT,
    CONV,
    EAGER,
    SCALE,
    SQUEEZE,
    STACK,
    TANH,
    UPSAMPLE2,
    Tape,
)
from .errors import CheckpointError, ShapeError

# SDF magnitudes on a 64 px grid reach the tens while tanh saturates outside
# |x| ~ 2, so the raw field is compressed before it enters the first conv.
PHI_INPUT_SCALE = 0.125

INIT_GAIN = 0.5


class ConvNet:
    """Parameter container plus forward pass for the 2-level architecture."""

    def __init__(self, in_channels: int, base: int = 8, bottleneck: int = 16):
        if in_channels < 1:
            raise ValueError(f"in_channels must be >= 1, got {in_channels}")
        if base < 1 or bottleneck < 1:
            raise ValueError("channel widths must be >= 1")
        self.in_channels = in_channels
        self.base = base
        self.bottleneck = bottleneck
        self.shapes: dict[str, tuple[int, ...]] = {
            "enc1_w": (base, in_channels, 3, 3),
            "enc1_b": (base,),
            "enc2_w": (base, base, 3, 3),
            "enc2_b": (base,),
            "bot1_w": (bottleneck, base, 3, 3),
            "bot1_b": (bottleneck,),
            "bot2_w": (bottleneck, bottleneck, 3, 3),
            "bot2_b": (bottleneck,),
            "dec1_w": (base, bottleneck + base, 3, 3),
            "dec1_b": (base,),
            "out_w": (1, base, 1, 1),
            "out_b": (1,),
        }
        self.param_names: tuple[str, ...] = tuple(self.shapes)  # registration order
        self.params: dict[str, np.ndarray] = {
            name: np.zeros(shape, dtype=np.float64) for name, shape in self.shapes.items()
        }

    def param_count(self) -> int:
        return int(sum(np.prod(s) for s in self.shapes.values()))

    def init_params(self, seed: int) -> None:
        """Scaled glorot-uniform kernels (gain 0.5), zero biases; seeded."""
        rng = np.random.default_rng(seed)
        for name in self.param_names:
            shape = self.shapes[name]
            if name.endswith("_b"):
                self.params[name] = np.zeros(shape, dtype=np.float64)
                continue
            co, ci, kh, kw = shape
            fan_in, fan_out = ci * kh * kw, co * kh * kw
            limit = INIT_GAIN * np.sqrt(6.0 / (fan_in + fan_out))
            self.params[name] = rng.uniform(-limit, limit, size=shape)

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        if set(params) != set(self.shapes):
            raise CheckpointError(
                f"parameter names mismatch: got {sorted(params)}, want {sorted(self.shapes)}"
            )
        for name, arr in params.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != self.shapes[name]:
                raise CheckpointError(
                    f"parameter {name} has shape {arr.shape}, want {self.shapes[name]}"
                )
            self.params[name] = arr

    def bind(self, rt):
        """Gradient-tracked handles for every parameter, in registration order."""
        return {name: rt.leaf(self.params[name], requires_grad=True) for name in self.param_names}

    def run(self, rt, binding, x):
        """Forward an already-stacked input handle; returns the 1-channel output."""
        c, h, w = rt.value(x).shape
        if c != self.in_channels:
            raise ShapeError(f"input has {c} channels, model expects {self.in_channels}")
        if h < 8 or w < 8 or h % 2 or w % 2:
            raise ShapeError(f"spatial dims must be even and >= 8, got {(h, w)}")
        p = binding

        def conv_tanh(inp, tag):
            return rt.apply(TANH, rt.apply(CONV, inp, p[f"{tag}_w"], p[f"{tag}_b"]))

        e1 = conv_tanh(x, "enc1")
        e2 = conv_tanh(e1, "enc2")
        m1 = conv_tanh(rt.apply(AVGPOOL2, e2), "bot1")
        m2 = conv_tanh(m1, "bot2")
        cat = rt.apply(CONCAT, rt.apply(UPSAMPLE2, m2), e2)
        d1 = conv_tanh(cat, "dec1")
        return rt.apply(CONV, d1, p["out_w"], p["out_b"])


def velocity_net(context_channels: int = 2, base: int = 8, bottleneck: int = 16) -> ConvNet:
    """Net mapping [scaled phi] + context channels to a velocity field."""
    return ConvNet(in_channels=1 + context_channels, base=base, bottleneck=bottleneck)


def initializer_net(base: int = 8, bottleneck: int = 16) -> ConvNet:
    """Net mapping [image, prompt heatmap] to visible-mask logits."""
    return ConvNet(in_channels=2, base=base, bottleneck=bottleneck)


def _as_handle(rt, tape, value):
    # Nodes pass through in taped mode; raw arrays become constants either way.
    if tape is not None and not isinstance(value, np.ndarray):
        return value
    return rt.constant(np.asarray(value, dtype=np.float64))


def forward_velocity(net: ConvNet, phi, context, tape: Tape | None = None, binding=None):
    """Velocity forward: scale phi, stack with context, run the net.

    Eager mode takes plain arrays and returns one.  Taped mode takes Nodes or
    arrays, records onto ``tape`` under ``binding`` (freshly bound when not
    given), and returns (velocity Node, binding).
    """
    rt = tape if tape is not None else EAGER
    phi_s = rt.apply(SCALE, _as_handle(rt, tape, phi), factor=PHI_INPUT_SCALE)
    x = rt.apply(STACK, phi_s, *[_as_handle(rt, tape, c) for c in context])
    if binding is None:
        binding = net.bind(rt)
    out = rt.apply(SQUEEZE, net.run(rt, binding, x))
    if tape is not None:
        return out, binding
    return out


def forward_logits(net: ConvNet, channels, tape: Tape | None = None, binding=None):
    """Initializer forward: stack raw channels, run the net, squeeze to 2D."""
    rt = tape if tape is not None else EAGER
    x = rt.apply(STACK, *[_as_handle(rt, tape, c) for c in channels])
    if binding is None:
        binding = net.bind(rt)
    out = rt.apply(SQUEEZE, net.run(rt, binding, x))
    if tape is not None:
        return out, binding
    return out


def velocity_provider(net: ConvNet, context):
    """Adapt a trained net to the ``provider(phi, context) -> V`` callable.

    The static ``context`` is bound here; the provider ignores the context
    argument handed in by the evolution loop so classical and learned
    providers share one call shape.
    """
    ctx = tuple(np.asarray(c, dtype=np.float64) for c in context)

    def provider(phi, _context=()):
        return forward_velocity(net, phi, ctx)

    return provider
