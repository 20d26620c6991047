"""layerlight - layered score distillation for disentangled relighting"""

__version__ = "0.1.0"
