import sys
from pathlib import Path

import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(2)

from helpers import register_mini_preset  # noqa: E402

register_mini_preset()
