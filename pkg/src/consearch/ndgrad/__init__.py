from .tensor import (
    Tensor,
    add,
    backward,
    concat,
    conv1d,
    gather,
    log_softmax,
    log_softmax_np,
    matmul,
    mean,
    mul,
    neg,
    one_hot,
    relu,
    sigmoid,
    sigmoid_np,
    square,
    sub,
    sum_,
    take_rows,
    tanh,
)
from .nn import Conv1d, Embedding, GRUCell, Linear, Module, uniform_init
from .optim import Adam
from .checkpoint import FORMAT_TAG, load_arrays, save_arrays

__all__ = [
    "Tensor", "add", "backward", "concat", "conv1d", "gather", "log_softmax",
    "log_softmax_np", "matmul", "mean", "mul", "neg", "one_hot", "relu",
    "sigmoid", "sigmoid_np", "square", "sub", "sum_", "take_rows", "tanh",
    "Conv1d", "Embedding", "GRUCell", "Linear", "Module", "uniform_init",
    "Adam", "FORMAT_TAG", "load_arrays", "save_arrays",
]
