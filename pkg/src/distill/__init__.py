"""Layer generators and score distillation for relighting and colorization"""
from .colorize import ColorizeConfig, ColorizeResult, distill_colorize, head_step
from .generator import ColorLayerGenerator, LayerGenerator
from .relight import CFG_PRESETS, DistillConfig, DistillResult, distill_relight
from .sds import reg_loss, sds_grad, sds_surrogate, vsd_grad
from .structure import StructureRegularizer, edge_map, edge_structure_loss, make_sketch

__all__ = [
    "ColorizeConfig",
    "ColorizeResult",
    "distill_colorize",
    "head_step",
    "ColorLayerGenerator",
    "LayerGenerator",
    "CFG_PRESETS",
    "DistillConfig",
    "DistillResult",
    "distill_relight",
    "reg_loss",
    "sds_grad",
    "sds_surrogate",
    "vsd_grad",
    "StructureRegularizer",
    "edge_map",
    "edge_structure_loss",
    "make_sketch",
]
