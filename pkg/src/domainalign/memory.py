"""Per-domain memory banks: one unit-norm slot per training sample,
updated with momentum after every batch and never contributing gradients.
"""

import numpy as np

from .numerics import InvalidInputError, l2_normalize
from .encoder import encode


class MemoryBank:
    def __init__(self, domain, ids, slots, momentum):
        if not 0.0 <= momentum <= 1.0:
            raise InvalidInputError(f"momentum {momentum} outside [0,1]")
        ids = np.asarray(ids, dtype=np.int64)
        slots = np.asarray(slots, dtype=np.float64)
        if len(ids) != slots.shape[0]:
            raise InvalidInputError("one slot per id required")
        self.domain = domain
        self.momentum = float(momentum)
        self.slots = slots.copy()
        self._row = {int(i): r for r, i in enumerate(ids)}
        self.ids = ids.copy()

    def __len__(self):
        return self.slots.shape[0]

    def _index(self, sample_id):
        try:
            return self._row[int(sample_id)]
        except KeyError:
            raise InvalidInputError(
                f"unknown sample id {sample_id} in bank {self.domain}") from None

    def read(self, sample_id):
        return self.slots[self._index(sample_id)].copy()

    def snapshot(self, ids):
        """Detached copy of the requested rows; later updates don't leak in."""
        rows = [self._index(i) for i in ids]
        return self.slots[rows].copy()

    def momentum_update(self, sample_id, v):
        """slot <- normalize(eta * slot + (1 - eta) * v), in place."""
        r = self._index(sample_id)
        blended = self.momentum * self.slots[r] + (1.0 - self.momentum) * np.asarray(v)
        self.slots[r] = l2_normalize(blended)

    def update_batch(self, ids, vs):
        for i, v in zip(ids, vs):
            self.momentum_update(i, v)


def init_bank(dataset, params, momentum):
    """Fill slots with the encoder's current features for every sample."""
    feats = encode(params, dataset.features)
    return MemoryBank(dataset.domain, dataset.ids, feats, momentum)
