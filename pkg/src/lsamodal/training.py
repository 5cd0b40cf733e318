"""Joint training of the initializer and velocity nets through the unrolled loop.

Per sample: the initializer predicts visible-mask logits (supervised by a
BCE auxiliary loss); the thresholded logits become phi_0 via the signed
distance transform, which is not differentiable, so phi_0 enters the tape as
a constant and the initializer learns from its auxiliary loss alone.  The
velocity net is then unrolled for T steps and supervised by the cumulative
cross-entropy between smooth-Heaviside(phi_i) and the amodal mask, either
over every evolved state or over the final one only.  The regularizer term
inside each step is treated as a constant during the reverse sweep.

Gradients accumulate in fixed sample order and the optimizer walks
parameters in sorted-name order, so training is run-to-run identical for a
fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import ADD, BCE_MEAN, HEAVISIDE, LEVEL_STEP, LOGIT_BCE_MEAN, SCALE, Tape
from .errors import ShapeError, TrainingError
from .evolution import EvolutionConfig, regularizer
from .network import ConvNet, forward_logits, forward_velocity
from .prompts import FALLBACK_RADIUS, HEATMAP_SIGMA, phi_from_logits, prompt_heatmap
from .sdf import HEAVISIDE_EPS

SUPERVISION_MODES = ("all_steps", "final_only")


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def loss_evo(phis, target: np.ndarray, eps: float = HEAVISIDE_EPS, mode: str = "all_steps"):
    """Cumulative BCE between smooth-Heaviside(phi_i) and the target mask.

    ``phis`` is the recorded evolution [phi_1 .. phi_T]; all_steps sums the
    per-step losses, final_only uses the last state only.  Returns
    (total, per-step list); the per-step list always covers all of ``phis``.
    """
    if mode not in SUPERVISION_MODES:
        raise ValueError(f"mode must be one of {SUPERVISION_MODES}, got {mode!r}")
    if not phis:
        raise ValueError("need at least one evolved state")
    t = np.asarray(target, dtype=np.float64)
    per_step = []
    for phi in phis:
        if phi.shape != t.shape:
            raise ShapeError(f"phi {phi.shape} vs target {t.shape}")
        h = HEAVISIDE.fwd(phi, eps=eps)
        per_step.append(float(BCE_MEAN.fwd(h, target=t)))
    total = sum(per_step) if mode == "all_steps" else per_step[-1]
    return float(total), per_step


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamWState:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = None
    v: dict = None

    def __post_init__(self):
        if self.m is None:
            self.m = {}
        if self.v is None:
            self.v = {}


def adamw_step(params: dict, grads: dict, state: AdamWState) -> None:
    """Decoupled-weight-decay adaptive update; mutates param arrays in place.

    In-place matters: the nets hold references to these arrays, so updates
    are visible to the next forward pass without re-binding.
    """
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient; training aborted")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p *= 1.0 - state.lr * state.weight_decay
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# taped forward for one sample
# ---------------------------------------------------------------------------


def sample_loss_taped(
    tape: Tape,
    vel_net: ConvNet,
    init_net: Optional[ConvNet],
    image: np.ndarray,
    heat: np.ndarray,
    amodal: np.ndarray,
    visible: np.ndarray,
    prompts,
    evo: EvolutionConfig,
    mode: str = "all_steps",
    init_loss_weight: float = 1.0,
    r0: float = FALLBACK_RADIUS,
):
    """Record one sample's joint loss; returns (loss node, bindings, phi values).

    ``bindings`` maps section name ("velocity", "initializer") to the
    parameter binding used on this tape, for gradient extraction.
    """
    image = np.asarray(image, dtype=np.float64)
    amodal_t = np.asarray(amodal, dtype=np.float64)
    height, width = image.shape
    bindings = {}
    if init_net is not None:
        logits_node, init_binding = forward_logits(init_net, [image, heat], tape)
        bindings["initializer"] = init_binding
        aux = tape.apply(LOGIT_BCE_MEAN, logits_node, target=np.asarray(visible, dtype=np.float64))
        logits_value = tape.value(logits_node)
    else:
        aux = None
        logits_value = None
    phi0, _ = phi_from_logits(logits_value, prompts, r0, width, height)
    phi = tape.leaf(phi0)  # constant: threshold + distance transform is not differentiable
    vel_binding = None
    step_losses = []
    phi_values = []
    for _ in range(evo.steps):
        reg = regularizer(tape.value(phi)) if evo.mu != 0.0 else np.zeros_like(phi0)
        v, vel_binding = forward_velocity(vel_net, phi, [image, heat], tape, vel_binding)
        phi = tape.apply(LEVEL_STEP, phi, v, reg=reg, dt=evo.dt, mu=evo.mu)
        h = tape.apply(HEAVISIDE, phi, eps=evo.heaviside_eps)
        step_losses.append(tape.apply(BCE_MEAN, h, target=amodal_t))
        phi_values.append(tape.value(phi))
    bindings["velocity"] = vel_binding
    if mode == "all_steps":
        total = step_losses[0]
        for sl in step_losses[1:]:
            total = tape.apply(ADD, total, sl)
    else:
        total = step_losses[-1]
    if aux is not None and init_loss_weight != 0.0:
        total = tape.apply(ADD, total, tape.apply(SCALE, aux, factor=init_loss_weight))
    return total, bindings, phi_values


def extract_grads(tape_grads: dict, binding: dict, shapes: dict) -> dict:
    """Per-name gradients from a backward pass; absent entries are zeros."""
    out = {}
    for name, node in binding.items():
        g = tape_grads.get(id(node))
        out[name] = np.zeros(shapes[name]) if g is None else g
    return out


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    opt_eps: float = 1e-8
    steps: int = 3
    dt: float = 1.0
    mu: float = 0.2
    heaviside_eps: float = HEAVISIDE_EPS
    supervision: str = "all_steps"
    init_loss_weight: float = 1.0
    sigma: float = HEATMAP_SIGMA
    r0: float = FALLBACK_RADIUS
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.supervision not in SUPERVISION_MODES:
            raise ValueError(f"supervision must be one of {SUPERVISION_MODES}")
        self.evolution()  # validates steps/dt/mu/eps and the stability bound

    def evolution(self) -> EvolutionConfig:
        return EvolutionConfig(
            steps=self.steps, dt=self.dt, mu=self.mu, heaviside_eps=self.heaviside_eps
        )


def train(samples, vel_net: ConvNet, init_net: Optional[ConvNet], cfg: TrainConfig, log_fn=None):
    """Optimize both nets jointly; mutates their params; returns epoch history.

    History entries carry the mean joint loss, the evolution part, and the
    auxiliary part per epoch.  A non-finite loss aborts naming the sample
    seed that produced it.
    """
    if not samples:
        raise TrainingError("empty training set")
    evo = cfg.evolution()
    opt = AdamWState(
        lr=cfg.lr,
        weight_decay=cfg.weight_decay,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.opt_eps,
    )
    # one optimizer over both sections; names are prefixed so they cannot
    # clash, and the arrays are shared with the nets (updated in place)
    params: dict[str, np.ndarray] = {}
    for name in vel_net.param_names:
        params[f"velocity/{name}"] = vel_net.params[name]
    if init_net is not None:
        for name in init_net.param_names:
            params[f"initializer/{name}"] = init_net.params[name]

    heats = [
        prompt_heatmap(s.prompts, cfg.sigma, s.image.shape[1], s.image.shape[0]) for s in samples
    ]
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        epoch_joint, epoch_evo, epoch_aux = 0.0, 0.0, 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            acc = {name: np.zeros_like(p) for name, p in params.items()}
            for idx in batch:
                s = samples[idx]
                tape = Tape()
                loss_node, bindings, phis = sample_loss_taped(
                    tape,
                    vel_net,
                    init_net,
                    s.image,
                    heats[idx],
                    s.amodal,
                    s.visible,
                    s.prompts,
                    evo,
                    mode=cfg.supervision,
                    init_loss_weight=cfg.init_loss_weight,
                    r0=cfg.r0,
                )
                joint = float(tape.value(loss_node))
                if not np.isfinite(joint):
                    raise TrainingError(f"loss became non-finite on sample seed {s.seed}")
                evo_part, _ = loss_evo(phis, s.amodal, evo.heaviside_eps, cfg.supervision)
                epoch_joint += joint
                epoch_evo += evo_part
                epoch_aux += joint - evo_part
                grads = tape.backward(loss_node)
                for section, binding in bindings.items():
                    net = vel_net if section == "velocity" else init_net
                    by_name = extract_grads(grads, binding, net.shapes)
                    for name, g in by_name.items():
                        acc[f"{section}/{name}"] += g
            scale = 1.0 / len(batch)
            adamw_step(params, {n: g * scale for n, g in acc.items()}, opt)
        n = float(len(samples))
        entry = {
            "epoch": epoch,
            "loss": epoch_joint / n,
            "evo_loss": epoch_evo / n,
            "init_loss": epoch_aux / n,
        }
        history.append(entry)
        if log_fn is not None:
            log_fn(entry)
    return history
