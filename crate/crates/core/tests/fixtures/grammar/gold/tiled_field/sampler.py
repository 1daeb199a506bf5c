# role: Sampler
from .config import DEFAULTS
from .field import TiledField


class ProposalSampler:
    def __init__(self):
        self.proposal = TiledField()

    def sample(self, ray_bundle, count=48):
        return [self.proposal.get_density(ray_bundle)] * count
