# role: Field
from .config import DEFAULTS
from .encoder import PlaneEncoder


class TiledField:
    def __init__(self):
        self.encoder = PlaneEncoder()

    # shape: get_density(positions[R,S,3]) -> [R,S,1]
    def get_density(self, positions):
        return self.encoder.encode(positions)[..., :1]
