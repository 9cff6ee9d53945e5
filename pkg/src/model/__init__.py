from src.model.attention import ECA, SpatialAttention, eca_kernel_size, simam
from src.model.exchange import (
    AdaptiveExchange,
    ConvBlock,
    EncoderState,
    FixedExchange,
    ModalityEncoder,
    exchange_mixture,
    mem_forward,
)
from src.model.fusion import CrossFusion
from src.model.decoder import Decoder
from src.model.dclnet import (
    DCLNet,
    PredictionPair,
    build_model,
    dclnet_forward,
    load_checkpoint,
    parameter_summary,
    save_checkpoint,
)
