"""LookupViT: a classifier that runs full-width layers on a few coarse tokens and cheap cross-attention on the patch tokens.

Subpackages map onto the pieces of the model:

- :mod:`lookupvit.tensor` -- numpy tensors, gradient tape, MAC instrumentation
- :mod:`lookupvit.tokenizer` -- patch embedding and compressed-token resampling
- :mod:`lookupvit.block` -- bidirectional cross-attention block
- :mod:`lookupvit.model` / :mod:`lookupvit.train` -- classifier, loss, training
- :mod:`lookupvit.flops` -- analytic and measured cost model
- :mod:`lookupvit.cli` -- command line harness
"""
from .block import BlockFlags, BlockParams, lookup_block_forward, mhbc_gather, mhbc_infuse, vit_block
from .config import ModelConfig, TrainConfig, load_config
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    LookupViTError,
    NonFiniteError,
    SchemaError,
)
from .model import ModelParams, feature_deviation, forward, init_params, loss, predict
from .tensor import Tape, Tensor, backward
from .tokenizer import PatchEmbedParams, TokenPair, build_token_pair, embed_patches

__version__ = "0.1.0"
