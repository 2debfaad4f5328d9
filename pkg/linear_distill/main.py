from .bench import bench  # noqa
from .cli import main
from .config import config_init, config_show  # noqa
from .data import data_export_synthetic  # noqa
from .distill import ablate_command, distill_command, teacher_pretrain  # noqa
from .gradcheck import gradcheck  # noqa
from .probe import probe  # noqa

__all__ = ["main"]
