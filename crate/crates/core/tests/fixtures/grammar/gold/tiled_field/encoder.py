# role: Encoder
from .config import DEFAULTS


class PlaneEncoder:
    levels = DEFAULTS["num_levels"]

    def encode(self, positions):
        return positions
