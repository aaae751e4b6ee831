"""Reference interpreter, tensor files, parameter environments and brute-force oracles"""
from .tensor_io import format_tensor, parse_tensor, read_tensor, write_tensor
from .params import (
    ParamStore,
    Env,
    bias_key,
    check_inputs,
    random_params,
    random_inputs,
    random_env,
)
from .evaluator import (
    ELEMENTWISE,
    eval_prim,
    eval_cell,
    eval_section,
    evaluate,
    run,
    materialize_linear,
)
from .oracles import (
    oracle_conv,
    oracle_conv_transposed,
    oracle_pool,
    oracle_attention,
    oracle_multihead,
)

__all__ = [
    'format_tensor',
    'parse_tensor',
    'read_tensor',
    'write_tensor',
    'ParamStore',
    'Env',
    'bias_key',
    'check_inputs',
    'random_params',
    'random_inputs',
    'random_env',
    'ELEMENTWISE',
    'eval_prim',
    'eval_cell',
    'eval_section',
    'evaluate',
    'run',
    'materialize_linear',
    'oracle_conv',
    'oracle_conv_transposed',
    'oracle_pool',
    'oracle_attention',
    'oracle_multihead',
]
