"""Mercer kernels on the half-line: norms, the integral operator, and a
stable kernel that is not absolutely integrable."""

from .counterexample import (CounterexampleSpec, MhCertificate, build_counterexample, build_M_h,
                             series_evidence, sylvester_hadamard)
from .kernel_operator import (BoundedInput, DomainMismatchError, adversarial_search, apply_operator,
                              reduce_input, stability_verdict)
from .kernels import (INDICATOR, BlockDiagKernel, Bump, CallableKernel, Kernel, MissingFactorError,
                      PiecewiseConstantKernel, SymMatrix, TrapezoidKernel, UnboundedSupportError,
                      eval_blockdiag, eval_bump, eval_factor_function, eval_pwc_kernel, eval_trap_kernel)
from .norms import (DimensionTooLargeError, NormReport, bump_l1_distance, kernel_l1_distance_pwc_trap,
                    kernel_l1_pwc, kernel_l1_trap, kernel_opnorm_pwc, kernel_opnorm_trap_bracket, matrix_l1,
                    matrix_norm_report, matrix_opnorm_inf1_bounds, matrix_opnorm_inf1_exact)
from .verification import check_psd_matrix, gram_check, symmetry_continuity_probe

__version__ = "0.1.0"
