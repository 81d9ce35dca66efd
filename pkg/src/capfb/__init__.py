"""Feedback capacity of channels with memory and transmission cost."""
from .directed_info import (FullHistoryPolicy, JointDistribution, OutputKernelSeq, build_joint,
                            directed_information, expected_kl_gap, induced_output_kernels,
                            stationary_rate_via_states, variational_objective)
from .dp import (DualSolveResult, dual_objective, dual_search, finite_horizon_dp,
                 relative_value_iteration, stage_maximize, stationary_distribution)
from .errors import (CapfbError, ConvergenceError, DomainError, ErgodicityError, ResourceError,
                     UnsupportedClosedFormError)
from .gaussian import (GaussianMatrixParams, GaussianScalarParams, GaussianScalarSolution,
                       matrix_J_star, matrix_riccati_solve, matrix_solve, rate_loss, scalar_solve)
from .oracle import (OracleConfig, evaluate_restricted_vs_full, maximize_full_history,
                     maximize_window_policy)
from .prob import (FiniteChannelKernel, MarkovInputPolicy, StateWindow, TransmissionCost, bsc,
                   decode_state, encode_state, kl_divergence, shift_state)

__version__ = "0.1.0"
