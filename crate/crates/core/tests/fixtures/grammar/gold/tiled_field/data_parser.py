# role: DataParser
from .config import DEFAULTS


class BlenderParser:
    near = DEFAULTS["near"]
    far = DEFAULTS["far"]

    def parse(self, root):
        return {"root": root, "split": "train"}
