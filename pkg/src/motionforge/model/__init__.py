from .checkpoint import load_checkpoint, save_checkpoint
from .layers import Conv1d, Dense, LayerNorm, Module, SelfAttention
from .networks import (
    N_CLASSES,
    Classifier,
    Critic,
    Generator,
    ModelConfig,
    Networks,
    NonFiniteError,
    classifier_forward,
    critic_forward,
    generator_forward,
    layer_inventory,
    self_attention_forward,
)
