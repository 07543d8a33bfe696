"""Langevin gradients and the device-level update rules (DW-SGLD and DW-SGD)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .. import pushpull as pp
from ..devices import FLOAT_BITS, CalibrationTable
from ..errors import ConfigError
from ..nn.layers import Network, project_to_prior
from .synapse import SynapsePairs


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 2e-5
    eta: float = 1e5
    batch_size: int = 48
    bits: int = 10
    n_slots: int = 64
    C_th: int = 521
    S_cycle: int = 20840
    window_start: int = 18756
    bn_lr: float = 2e2
    epochs: int = 500
    seed: int = 0
    sgd_lr: float = 4e-2
    sampler: str = "sgld"
    ensemble_every: int = 0
    burn_in: int = 0

    def __post_init__(self):
        if self.tau <= 0 or self.eta < 0 or self.bn_lr < 0 or self.sgd_lr < 0:
            raise ConfigError("tau must be > 0; eta, bn_lr and sgd_lr >= 0")
        if self.batch_size < 1 or self.n_slots < 1 or self.C_th < 1 or self.epochs < 0:
            raise ConfigError("batch_size, n_slots and C_th must be >= 1, epochs >= 0")
        if not 0 <= self.window_start < self.S_cycle:
            raise ConfigError("window_start must lie in [0, S_cycle)")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.bits < 1:
            raise ConfigError("bits must be >= 1")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}")

    @classmethod
    def full(cls, **kw) -> "TrainConfig":
        return cls(**kw)

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        """Preset for the 8x8 pattern task (1000 training images, 125 steps per epoch).

        The likelihood scale is small next to the device step so that the
        precision floor at low bit counts is visible within 8000 steps; the
        thinning window keeps four commits per cycle and sampling starts
        after ``burn_in`` steps.
        """
        base = dict(tau=2e-5, eta=300.0, batch_size=8, bn_lr=2e2, epochs=64, burn_in=6000,
                    S_cycle=64, window_start=48, C_th=4, sgd_lr=4e-2)
        base.update(kw)
        return cls(**base)

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def noise_var(self) -> float:
        return 2.0 * self.tau

    @property
    def is_float(self) -> bool:
        return self.bits >= FLOAT_BITS


SAMPLERS = ("sgld", "dwsgd", "mh-filamentary")


@dataclass
class LangevinGradient:
    tau_grad: np.ndarray          # tau * dL/dg for every analog parameter
    digital: list                 # plain summed-NLL gradients of the digital parameters
    nll: float


def langevin_gradient(net: Network, minibatch, config: TrainConfig) -> LangevinGradient:
    """``tau * (eta * sum_i dNLL_i/dg - dlog p(g)/dg)`` on one mini-batch.

    The uniform prior contributes nothing inside its support.
    """
    x, y = minibatch
    logits = net.forward(x, training=True)
    nll = net.backward(logits, y)
    g = net.analog_grad().astype(float)
    tau_grad = config.tau * (config.eta * g)
    digital = [np.asarray(p.grad, dtype=float) for p in net.digital_params]
    return LangevinGradient(tau_grad, digital, nll)


@dataclass
class StepInfo:
    nll: float
    planned_var: float = 0.0
    n_nominal: int = 0
    n_lower: int = 0
    n_upper: int = 0


def _update_digital(net: Network, grads, config: TrainConfig) -> None:
    lr = config.bn_lr * config.tau
    for p, g in zip(net.digital_params, grads):
        p.data = (p.data - lr * g).astype(p.data.dtype)


def _device_update(net: Network, plan_fn, grad_step, table: CalibrationTable, rng,
                   synapses: SynapsePairs | None) -> tuple[SynapsePairs, pp.PulsePlan]:
    pairs = synapses if synapses is not None else SynapsePairs.from_weights(net.get_analog())
    sign = pairs.active_sign(grad_step)
    plan = plan_fn(sign * grad_step)
    dg = pp.execute_sampled(plan, table, rng)
    pairs.apply(dg, sign)
    net.set_analog(pairs.weights)
    return pairs, plan


def _info(nll, plan, table) -> StepInfo:
    reg = np.asarray(plan.regime)
    var = np.asarray(pp.planned_distribution(plan, table).var)
    return StepInfo(nll, float(var.mean()), int(np.sum(reg == pp.NOMINAL)),
                    int(np.sum(reg == pp.LOWER_CLAMPED)), int(np.sum(reg == pp.UPPER_CLAMPED)))


def sgld_step(net: Network, minibatch, config: TrainConfig, table: CalibrationTable,
              rng: np.random.Generator, synapses: SynapsePairs | None = None) -> StepInfo:
    """One DW-SGLD update of every analog parameter via push-pull pulses.

    ``table`` must already carry the ``T_min`` of ``config.bits``. At float
    precision the device is bypassed and the ideal Gaussian update is drawn.
    """
    lg = langevin_gradient(net, minibatch, config)
    step = -lg.tau_grad
    _update_digital(net, lg.digital, config)
    if config.is_float:
        w = net.get_analog() + step + np.sqrt(config.noise_var) * rng.standard_normal(step.shape)
        w = project_to_prior(w)
        if synapses is not None:
            synapses.set_weights(w)
        net.set_analog(w)
        return StepInfo(lg.nll, config.noise_var, len(step))
    req_var = config.noise_var
    _, plan = _device_update(net, lambda g: pp.plan(pp.UpdateRequest(g, req_var), table),
                             step, table, rng, synapses)
    return _info(lg.nll, plan, table)


def dwsgd_step(net: Network, minibatch, config: TrainConfig, table: CalibrationTable,
               rng: np.random.Generator, synapses: SynapsePairs | None = None) -> StepInfo:
    """Push-pull gradient descent with the symmetric part pinned at ``T_min``.

    The step is ``sgd_lr`` times the mini-batch mean NLL gradient; whatever
    noise the pulses add is parasitic.
    """
    x, y = minibatch
    logits = net.forward(x, training=True)
    nll = net.backward(logits, y)
    step = -config.sgd_lr / len(y) * net.analog_grad().astype(float)
    _update_digital(net, [np.asarray(p.grad, dtype=float) for p in net.digital_params], config)
    if config.is_float or table.noiseless:
        w = project_to_prior(net.get_analog() + step)
        if synapses is not None:
            synapses.set_weights(w)
        net.set_analog(w)
        return StepInfo(nll, 0.0, len(step))
    _, plan = _device_update(net, lambda g: pp.plan_fixed_symmetric(g, table), step, table,
                             rng, synapses)
    return _info(nll, plan, table)


def sgld_chain(grad_U, x0, n_steps: int, tau: float, table: CalibrationTable,
               rng: np.random.Generator, sampled: bool = True) -> np.ndarray:
    """SGLD on an explicit potential ``U``; ``grad_U`` maps positions to gradients.

    ``x0`` may be an array of independent chains, advanced together. Updates go
    through the push-pull planner and a synapse pair per chain, so the prior
    box ``[-1, 1]`` applies. Returns the trajectory with shape
    ``(n_steps + 1, *x0.shape)``.
    """
    x0 = np.asarray(x0, dtype=float)
    pairs = SynapsePairs.from_weights(x0.ravel())
    out = np.empty((n_steps + 1, x0.size))
    out[0] = pairs.weights
    for t in range(n_steps):
        step = -tau * np.asarray(grad_U(pairs.weights), dtype=float)
        sign = pairs.active_sign(step)
        plan = pp.plan(pp.UpdateRequest(sign * step, 2.0 * tau), table)
        dg = pp.execute_sampled(plan, table, rng) if sampled else \
            np.asarray(pp.planned_distribution(plan, table).mean)
        pairs.apply(dg, sign)
        out[t + 1] = pairs.weights
    return out.reshape((n_steps + 1, *x0.shape))
