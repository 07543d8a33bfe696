"""The end-to-end training protocol: sampler steps, online thinning, ensemble tests."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data import Dataset
from ..devices import CalibrationTable, FilamentaryModel, default_table
from ..nn import tensor as T
from ..nn.layers import Network
from .langevin import TrainConfig, dwsgd_step, sgld_step
from .synapse import SynapsePairs
from .thinning import (PosteriorStore, ThinningController, ensemble_infer, predict_proba,
                       slot_probs, thinning_controller)

log = logging.getLogger(__name__)

LOG_HEADER = ["epoch", "minibatch", "slot", "filled", "train_nll", "test_acc_ensemble",
              "test_acc_last"]
SAMPLE_COUNTS = (2, 4, 8, 16, 32, 64)


@dataclass
class TrainResult:
    config: TrainConfig
    store: PosteriorStore
    accuracy: dict = field(default_factory=dict)    # ensemble size -> test accuracy
    last_accuracy: float = float("nan")
    rows: list = field(default_factory=list)
    n_minibatches: int = 0
    acceptance: float | None = None
    mean_planned_var: float = 0.0
    seconds: float = 0.0


def accuracy(pred, labels) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


class _FilamentaryWeights:
    """Maps a single filamentary conductance per weight onto [-1, 1]."""

    def __init__(self, model: FilamentaryModel):
        self.model = model

    def to_g(self, w):
        lo, hi = self.model.g_range
        return lo + (np.asarray(w) + 1.0) * 0.5 * (hi - lo)

    def to_w(self, g):
        lo, hi = self.model.g_range
        return 2.0 * (np.asarray(g) - lo) / (hi - lo) - 1.0


class Trainer:
    """Train ``net`` on ``train`` with the sampler named in ``config``.

    Device-level samplers need a calibration ``table`` (the default is the
    linear stand-in for the default device); its ``T_min`` is set here from
    ``config.bits``.
    """

    def __init__(self, net: Network, train: Dataset, test: Dataset, config: TrainConfig,
                 table: CalibrationTable | None = None,
                 model: FilamentaryModel | None = None,
                 log_path: str | Path | None = None, eval_limit: int | None = None):
        self.net = net
        self.train = train
        self.test = test if eval_limit is None else test.subset(slice(0, eval_limit))
        self.cfg = config
        base = table if table is not None else default_table()
        self.table = base if config.is_float else base.with_precision(config.bits)
        self.model = model or FilamentaryModel()
        self.log_path = Path(log_path) if log_path is not None else None
        self.rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7,)))
        self.store = PosteriorStore(config.n_slots, net.state_vector().size)
        self.thin = ThinningController.from_config(config)

    # -- samplers -----------------------------------------------------------

    def _mh_step(self, batch, state):
        """One filamentary Metropolis step over every analog weight at once."""
        fw = state["fw"]
        x, y = batch
        m = self.model

        def energy():
            logits = self.net.forward(x, training=True)
            return float(T.cross_entropy(logits, y).data)

        g = state["g"]
        e_cur = energy()
        cand = np.clip(m.mu_of_I(m.current_for(g))
                       + m.sigma_of_I(m.current_for(g)) * self.rng.standard_normal(g.shape),
                       *m.g_range)
        self.net.set_analog(fw.to_w(cand))
        e_new = energy()
        state["tried"] += 1
        if np.log(self.rng.uniform()) < -self.cfg.eta * (e_new - e_cur):
            state["g"] = cand
            state["accepted"] += 1
        else:
            self.net.set_analog(fw.to_w(g))
        return e_cur

    def run(self) -> TrainResult:
        cfg = self.cfg
        t0 = time.time()
        res = TrainResult(cfg, self.store)
        pairs = SynapsePairs.from_weights(self.net.get_analog())
        mh_state = None
        if cfg.sampler == "mh-filamentary":
            fw = _FilamentaryWeights(self.model)
            mh_state = {"fw": fw, "g": fw.to_g(self.net.get_analog()), "tried": 0, "accepted": 0}
        data_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(11,)))
        fh = writer = None
        if self.log_path is not None:
            fh = open(self.log_path, "w", encoding="utf-8", newline="")
            writer = csv.writer(fh)
            writer.writerow(LOG_HEADER)
        step = 0
        var_sum = 0.0
        try:
            for epoch in range(cfg.epochs):
                nll_sum, n_seen = 0.0, 0
                for batch in self.train.batches(cfg.batch_size, data_rng):
                    if cfg.sampler == "sgld":
                        info = sgld_step(self.net, batch, cfg, self.table, self.rng, pairs)
                        nll, var_sum = info.nll, var_sum + info.planned_var
                    elif cfg.sampler == "dwsgd":
                        info = dwsgd_step(self.net, batch, cfg, self.table, self.rng, pairs)
                        nll, var_sum = info.nll, var_sum + info.planned_var
                    else:
                        nll = self._mh_step(batch, mh_state)
                    nll_sum += nll
                    n_seen += len(batch[1])
                    # DW-SGD keeps a single point estimate and skips the store
                    if step >= cfg.burn_in and cfg.sampler != "dwsgd":
                        thinning_controller(step - cfg.burn_in, self.thin, self.store,
                                            self.net.state_vector())
                    step += 1
                ens = ""
                if cfg.ensemble_every and (epoch + 1) % cfg.ensemble_every == 0 and self.store.filled:
                    ens = self._ensemble_acc(None)
                row = [epoch, step, self.store.current_index, self.store.filled,
                       nll_sum / max(n_seen, 1), ens, self._last_acc()]
                res.rows.append(row)
                if writer is not None:
                    writer.writerow([_fmt(v) for v in row])
        finally:
            if fh is not None:
                fh.close()
        res.n_minibatches = step
        res.mean_planned_var = var_sum / max(step, 1)
        res.last_accuracy = self._last_acc()
        if mh_state is not None:
            res.acceptance = mh_state["accepted"] / max(mh_state["tried"], 1)
        res.accuracy = self.report()
        res.seconds = time.time() - t0
        return res

    def _last_acc(self) -> float:
        return accuracy(predict_proba(self.net, self.test.inputs).argmax(axis=1), self.test.labels)

    def _ensemble_acc(self, k) -> float:
        pred, _ = ensemble_infer(self.store, self.net, self.test.inputs, k)
        return accuracy(pred, self.test.labels)

    def report(self, counts=SAMPLE_COUNTS) -> dict:
        """Test accuracy of the ``k`` most recent samples for each ``k`` that the store can serve.

        Point-estimate samplers report the final model for every ``k``.
        """
        if self.cfg.sampler == "dwsgd" or self.store.filled == 0:
            acc = self._last_acc()
            return {k: acc for k in counts}
        probs = slot_probs(self.store, self.net, self.test.inputs)
        # newest first, so a cumulative mean gives every most-recent-k ensemble
        cum = np.cumsum(probs[::-1], axis=0)
        out = {}
        for k in counts:
            if k <= self.store.filled or k == counts[0]:
                kk = min(k, self.store.filled)
                out[k] = accuracy(cum[kk - 1].argmax(axis=1), self.test.labels)
        if self.store.n_slots == 1:
            out[1] = accuracy(cum[0].argmax(axis=1), self.test.labels)
        return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_config(path: str | Path, cfg: TrainConfig, **extra) -> None:
    payload = dict(cfg.as_dict(), **extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
