from .graph import Graph, inv_softplus, sigmoid, softmax_rows_value, softplus
from .optim import AdamWState, adamw_step
from .rng import make_rng
from .container import load_tensors, save_tensors
from .gradcheck import check_gradients

__all__ = [
    "Graph",
    "AdamWState",
    "adamw_step",
    "make_rng",
    "save_tensors",
    "load_tensors",
    "check_gradients",
    "softplus",
    "inv_softplus",
    "sigmoid",
    "softmax_rows_value",
]
