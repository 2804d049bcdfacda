'''
Labelled random streams derived from a single run seed.
'''

from typing import Dict

import hashlib
import numpy as np


VICON = 'vicon'
SENSING = 'sensing'
ATTITUDE = 'attitude'
COMPARE = 'compare'


class RngStreams:
    '''
    One independent `numpy.random.Generator` per subsystem label. Each stream
    is seeded from the run seed and a fixed key derived from its label, so
    drawing from one stream (or not drawing at all) never shifts another.
    '''

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    @staticmethod
    def label_key(label: str) -> int:
        digest = hashlib.sha256(label.encode('utf-8')).digest()
        return int.from_bytes(digest[:8], 'little')

    def stream(self, label: str) -> np.random.Generator:
        if label not in self._streams:
            seq = np.random.SeedSequence(
                entropy=self.seed,
                spawn_key=(self.label_key(label),))
            self._streams[label] = np.random.default_rng(seq)
        return self._streams[label]
