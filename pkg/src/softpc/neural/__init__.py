from .layers import (
    gcn_propagation,
    gcn_forward,
    gcn_backward,
    leaky_relu,
    leaky_relu_backward,
    topk_pool,
    topk_pool_backward,
    power_normalize,
    power_normalize_backward,
)
from .model import (
    ModelConfig,
    EncoderParams,
    DecoderParams,
    ModelParams,
    LatentCode,
    init_params,
    latent_shape,
    encode,
    encode_backward,
    decode,
    decode_backward,
    save_model,
    load_model,
)
from .train import TrainSchedule, AdamState, adam_step, init_adam, train

__all__ = [
    "gcn_propagation", "gcn_forward", "gcn_backward",
    "leaky_relu", "leaky_relu_backward",
    "topk_pool", "topk_pool_backward",
    "power_normalize", "power_normalize_backward",
    "ModelConfig", "EncoderParams", "DecoderParams", "ModelParams", "LatentCode",
    "init_params", "latent_shape", "encode", "encode_backward",
    "decode", "decode_backward", "save_model", "load_model",
    "TrainSchedule", "AdamState", "adam_step", "init_adam", "train",
]
