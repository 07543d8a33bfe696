"""Metropolis-Hastings on filamentary devices, the baseline whose proposals drift."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..devices import FilamentaryModel, filamentary_program


def filamentary_proposal(model: FilamentaryModel) -> Callable:
    """Re-program each device at the current that targets its present conductance."""
    def propose(g, rng):
        return filamentary_program(model.current_for(g), model, rng)
    return propose


def gaussian_proposal(sigma: float) -> Callable:
    def propose(g, rng):
        return g + sigma * rng.standard_normal(np.shape(g))
    return propose


def mh_chain(loglik_fn, n_params: int, model: FilamentaryModel | None, n_steps: int,
             rng: np.random.Generator, g0=None, proposal: Callable | None = None,
             log_prior: Callable | None = None):
    """Run ``n_steps`` Metropolis steps; returns ``(chain, acceptance_rate)``.

    ``chain`` has shape ``(n_steps + 1, n_params)`` and starts at ``g0``
    (default: mid-range). The ratio is the plain Metropolis one: the state
    dependence of filamentary proposals goes uncorrected, which is what a
    device-level implementation does and what pulls chains to high
    conductance. The prior defaults to uniform on the conductance range.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if proposal is None:
        if model is None:
            raise ValueError("give a device model or a proposal")
        proposal = filamentary_proposal(model)
    if log_prior is None:
        if model is not None:
            lo, hi = model.g_range
            log_prior = lambda g: 0.0 if np.all((g >= lo) & (g <= hi)) else -np.inf
        else:
            log_prior = lambda g: 0.0
    if g0 is None:
        g0 = np.full(n_params, np.mean(model.g_range)) if model is not None else np.zeros(n_params)
    g = np.array(g0, dtype=float).reshape(n_params)
    lp = loglik_fn(g) + log_prior(g)
    chain = np.empty((n_steps + 1, n_params))
    chain[0] = g
    accepted = 0
    log_u = np.log(rng.uniform(size=n_steps))
    for t in range(n_steps):
        cand = np.asarray(proposal(g, rng), dtype=float).reshape(n_params)
        lq = log_prior(cand)
        if np.isfinite(lq):
            lq = lq + loglik_fn(cand)
        if log_u[t] < lq - lp:
            g, lp = cand, lq
            accepted += 1
        chain[t + 1] = g
    return chain, accepted / n_steps
