"""Differential device pairs holding signed weights."""

from __future__ import annotations

import numpy as np

G_MIN, G_MAX = 0.0, 1.0


class SynapsePairs:
    """Vector of ``(g_plus, g_minus)`` pairs; weight ``= scale * (g_plus - g_minus)``.

    Only one device of a pair is ever away from its minimum: the positive one
    for positive weights, the negative one for negative weights.
    """

    def __init__(self, g_plus, g_minus, scale: float = 1.0):
        self.g_plus = np.array(g_plus, dtype=float)
        self.g_minus = np.array(g_minus, dtype=float)
        if self.g_plus.shape != self.g_minus.shape:
            raise ValueError("g_plus and g_minus shapes differ")
        if scale <= 0:
            raise ValueError("scale must be > 0")
        self.scale = float(scale)

    @classmethod
    def from_weights(cls, w, scale: float = 1.0) -> "SynapsePairs":
        w = np.clip(np.asarray(w, dtype=float) / scale, -G_MAX, G_MAX)
        return cls(np.maximum(w, 0.0), np.maximum(-w, 0.0), scale)

    def __len__(self):
        return self.g_plus.size

    @property
    def weights(self) -> np.ndarray:
        return self.scale * (self.g_plus - self.g_minus)

    def active_sign(self, hint=None) -> np.ndarray:
        """+1 where the positive device is the one being programmed, else -1.

        A zero weight has both devices at minimum; ``hint`` (the intended
        update) then picks the side so the first pulse moves a device up.
        """
        d = self.g_plus - self.g_minus
        s = np.sign(d)
        if hint is not None:
            s = np.where(s == 0, np.sign(hint), s)
        return np.where(s == 0, 1.0, s)

    def apply(self, dg_device, sign) -> None:
        """Add ``dg_device`` (weight units) to the active devices given by ``sign``.

        A device pushed below its minimum stops there and the remainder goes to
        the partner, which flips the weight's sign. Weights are held in
        ``[-scale, scale]``.
        """
        w = (self.g_plus - self.g_minus) + sign * np.asarray(dg_device, dtype=float) / self.scale
        w = np.clip(w, -G_MAX, G_MAX)
        self.g_plus = np.maximum(w, G_MIN)
        self.g_minus = np.maximum(-w, G_MIN)

    def set_weights(self, w) -> None:
        p = SynapsePairs.from_weights(w, self.scale)
        self.g_plus, self.g_minus = p.g_plus, p.g_minus

    def convention_holds(self) -> bool:
        return bool(np.all(np.minimum(self.g_plus, self.g_minus) == G_MIN)
                    and np.all((self.g_plus >= G_MIN) & (self.g_plus <= G_MAX))
                    and np.all((self.g_minus >= G_MIN) & (self.g_minus <= G_MAX)))
