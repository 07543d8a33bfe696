"""Online thinning and the fixed-capacity posterior store."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import EmptyStore, StoreFull
from ..nn import tensor as T
from ..nn.layers import Network, load_snapshot, save_snapshot

OVERWRITE, COMMIT = "overwrite", "commit"


class PosteriorStore:
    """``n_slots`` full state vectors (parameters and batch-norm statistics).

    Slots ``[0, filled)`` are committed and never change, except that once the
    store is full a ring-mode commit replaces the last slot. Slot ``filled`` (if
    any) holds the model currently being proposed.
    """

    def __init__(self, n_slots: int, dim: int):
        if n_slots < 1:
            raise ValueError("n_slots must be >= 1")
        self.slots = np.zeros((n_slots, dim))
        self.filled = 0
        self.pending: np.ndarray | None = None
        self.n_commits = 0

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    @property
    def current_index(self) -> int:
        return min(self.filled, self.n_slots - 1)

    @property
    def full(self) -> bool:
        return self.filled >= self.n_slots

    def propose(self, vec) -> None:
        vec = np.asarray(vec, dtype=float)
        self.pending = vec.copy()
        if not self.full:
            self.slots[self.filled] = vec

    def commit(self, vec=None, ring: bool = True) -> int:
        """Store ``vec`` (default: the pending model) definitively; returns its slot."""
        vec = self.pending if vec is None else np.asarray(vec, dtype=float)
        if vec is None:
            raise ValueError("nothing to commit")
        if self.full:
            if not ring:
                raise StoreFull(f"all {self.n_slots} slots are committed")
            self.slots[-1] = vec
            slot = self.n_slots - 1
        else:
            self.slots[self.filled] = vec
            slot = self.filled
            self.filled += 1
        self.n_commits += 1
        self.pending = None
        return slot

    def committed(self, k: int | None = None) -> np.ndarray:
        """The ``k`` most recently committed vectors (all when ``k`` is None)."""
        if self.filled == 0:
            raise EmptyStore("no committed posterior samples")
        k = self.filled if k is None else min(k, self.filled)
        return self.slots[self.filled - k:self.filled]

    def save(self, directory: str | Path, net: Network) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for i in range(self.filled):
            p = d / f"slot_{i:03d}.bin"
            save_snapshot(net, p, self.slots[i])
            paths.append(p)
        return paths

    @classmethod
    def load(cls, directory: str | Path, n_slots: int | None = None) -> "PosteriorStore":
        files = sorted(Path(directory).glob("slot_*.bin"))
        if not files:
            raise EmptyStore(f"no slot files in {directory}")
        vecs = [load_snapshot(f)[1] for f in files]
        st = cls(n_slots or len(vecs), len(vecs[0]))
        for v in vecs:
            st.commit(v)
        return st


def commits_after(n_minibatches: int, S_cycle: int, window_start: int, C_th: int) -> int:
    """Closed-form commit count; the downcounter restarts at every cycle."""
    full, rem = divmod(n_minibatches, S_cycle)
    per_cycle = (S_cycle - window_start) // C_th
    return full * per_cycle + max(0, rem - window_start) // C_th


@dataclass
class ThinningController:
    S_cycle: int
    window_start: int
    C_th: int
    counter: int = 0

    def __post_init__(self):
        if self.C_th < 1 or not 0 <= self.window_start < self.S_cycle:
            raise ValueError("need C_th >= 1 and 0 <= window_start < S_cycle")
        self.counter = self.C_th

    @classmethod
    def from_config(cls, cfg) -> "ThinningController":
        return cls(cfg.S_cycle, cfg.window_start, cfg.C_th)

    def action(self, step_index: int) -> str:
        """Decide what to do with the model proposed at mini-batch ``step_index`` (0-based)."""
        k = step_index % self.S_cycle
        if k == 0:
            self.counter = self.C_th
        if k >= self.window_start:
            self.counter -= 1
            if self.counter == 0:
                self.counter = self.C_th
                return COMMIT
        return OVERWRITE


def thinning_controller(step_index: int, controller: ThinningController,
                        store: PosteriorStore, vec, ring: bool = True) -> str:
    """Apply the controller's decision for ``vec`` to ``store``."""
    act = controller.action(step_index)
    store.propose(vec)
    if act == COMMIT:
        store.commit(ring=ring)
    return act


def ensemble_infer(store: PosteriorStore, net: Network, inputs, k: int | None = None,
                   batch: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Average the softmax outputs of the ``k`` most recent committed samples.

    The network's own state is restored afterwards. Returns ``(classes, probs)``.
    """
    probs = slot_probs(store, net, inputs, k, batch).mean(axis=0)
    return probs.argmax(axis=1), probs


def slot_probs(store: PosteriorStore, net: Network, inputs, k: int | None = None,
               batch: int = 256) -> np.ndarray:
    """Per-slot softmax outputs, shape ``(k, n_inputs, n_classes)``, oldest first."""
    vecs = store.committed(k)
    saved = net.state_vector()
    try:
        out = []
        for v in vecs:
            net.load_state_vector(v)
            out.append(predict_proba(net, np.asarray(inputs), batch))
    finally:
        net.load_state_vector(saved)
    return np.stack(out)


def predict_proba(net: Network, inputs, batch: int = 256) -> np.ndarray:
    out = []
    for i in range(0, len(inputs), batch):
        out.append(T.softmax(net.forward(inputs[i:i + batch], training=False).data))
    return np.concatenate(out) if out else np.zeros((0, 0))
