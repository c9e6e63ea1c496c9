"""Semi-tensor-product (STP) factorized tensors and neural-network layers."""

from .accounting import (
    compression_factor,
    flop_count,
    flop_formulas,
    memory_ratio,
    network_report,
    param_count,
    param_expr,
)
from .forms import (
    FactorizedWeight,
    build,
    init_gaussian,
    load_weight,
    merge1,
    merge2,
    merge3,
    merge_chain,
    reconstruct,
    save_weight,
)
from .layers import (
    dense_forward,
    layer_backward,
    str_conv_forward,
    str_fcl_forward,
    stp_dense_forward,
    stt_conv_forward,
    stt_fcl_forward,
    sttu_conv_forward,
    sttu_fcl_forward,
    tensor_regression_forward,
)
from .plan import LayerPlan, PlanError
from .stp import SemiCore, StructureError, lstp_vec, semi_contract, semi_mode_n, semi_trace, stp_mat
from .tensor_core import ShapeError, conv2d, contract, fold, mode_n_product, self_contract, unfold

__version__ = "0.1.0"

__all__ = [
    "FactorizedWeight",
    "LayerPlan",
    "PlanError",
    "SemiCore",
    "ShapeError",
    "StructureError",
    "build",
    "compression_factor",
    "contract",
    "conv2d",
    "dense_forward",
    "flop_count",
    "flop_formulas",
    "fold",
    "init_gaussian",
    "layer_backward",
    "load_weight",
    "lstp_vec",
    "memory_ratio",
    "merge1",
    "merge2",
    "merge3",
    "merge_chain",
    "mode_n_product",
    "network_report",
    "param_count",
    "param_expr",
    "reconstruct",
    "save_weight",
    "self_contract",
    "semi_contract",
    "semi_mode_n",
    "semi_trace",
    "stp_dense_forward",
    "stp_mat",
    "str_conv_forward",
    "str_fcl_forward",
    "stt_conv_forward",
    "stt_fcl_forward",
    "sttu_conv_forward",
    "sttu_fcl_forward",
    "tensor_regression_forward",
    "unfold",
    "__version__",
]
