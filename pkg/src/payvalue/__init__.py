"""Network-aware user value for payment platforms."""
from .graph_model import (Digraph, InvitationNetwork, PaymentDataset, PaymentGraph, build_graph,
                          restrict_to_window, validate)
from .intrinsic import IntrinsicParams, IntrinsicValue, SigmoidParams, intrinsic_scores, sigmoid
from .model import UserValueModel
from .value_engine import NetworkValue, ValueParams, ValueResult, direct_solve, solve_value

__version__ = "0.1.0"
