"""Transducer losses over alignment graphs (GTC-T, CTC-T, MonoRNN-T, RNN-T).

Forward-backward losses with analytic gradients, brute-force oracles,
time-synchronous beam search and a small numpy training harness.
"""

__version__ = "0.1.0"

from gtct.numerics import NEG_INF, JoinerLattice, log_add, log_softmax_rows
from gtct.topology import (
    AlignmentGraph,
    build_ctct_graph,
    build_graph,
    build_monornnt_graph,
    validate_graph,
)
from gtct.loss import (
    LossOutput,
    ar_rnnt_loss,
    ctc_loss,
    gtct_backward,
    gtct_forward,
    gtct_loss,
    rnnt_loss,
)

__all__ = [
    "__version__",
    "NEG_INF",
    "JoinerLattice",
    "log_add",
    "log_softmax_rows",
    "AlignmentGraph",
    "build_ctct_graph",
    "build_monornnt_graph",
    "build_graph",
    "validate_graph",
    "LossOutput",
    "gtct_forward",
    "gtct_backward",
    "gtct_loss",
    "rnnt_loss",
    "ar_rnnt_loss",
    "ctc_loss",
]
