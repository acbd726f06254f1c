from .core import (Adam, Dense, GradCheckReport, Param, adam_step, dense_backward,
                   dense_forward, grad_check, init_uniform, make_param, mse, mse_grad,
                   param_rng)
from .lstm import (BLOCK_NAMES, GATES, LstmCellParams, LstmState, available_backends,
                   get_backend, lstm_backward, lstm_forward, lstm_step, set_backend)

__all__ = [
    "Adam", "Dense", "GradCheckReport", "Param", "adam_step", "dense_backward",
    "dense_forward", "grad_check", "init_uniform", "make_param", "mse", "mse_grad",
    "param_rng", "BLOCK_NAMES", "GATES", "LstmCellParams", "LstmState",
    "available_backends", "get_backend", "lstm_backward", "lstm_forward", "lstm_step",
    "set_backend",
]
