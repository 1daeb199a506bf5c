# role: DataManager
from .config import DEFAULTS


class RayDataManager:
    def __init__(self, parser_name="blender"):
        self.parser_name = parser_name
        self.batch = 4096

    def next_train(self, step):
        return step % self.batch
