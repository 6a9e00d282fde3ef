"""Convex relaxations of optimal power flow in the bus injection and branch flow models."""

__version__ = "0.1.0"

from .bfm import (AngleRecoveryResult, BranchFlowState, ComplexState, beta, bfm_residual, bfm_to_bim,
                  bim_to_bfm, check_cycle_condition, recover_angles, relax_magnitudes, reverse_orientation)
from .bim import (AdmittanceOperators, Qcqp, VoltageProfile, admittance_operators, bim_residual, build_qcqp,
                  injections_from_voltage)
from .cost import CostSpec
from .errors import (CaseSemanticError, CaseSyntaxError, CompletionError, ConvergenceError, CycleConditionError,
                     DegenerateEdgeError, NotInXncError, OpfRelaxError, RelaxationInexactError, ResidualError,
                     TopologyError)
from .netmodel import (Bus, DirectedNetwork, Line, Network, TreeIndex, orient, parse_case, serialize_case,
                       spanning_tree)
from .pmatrix import (ChordalExtension, CompletionResult, PartialMatrix, SdpStandardForm, chordal_extension,
                      partial_from_voltage, rank1_completion, sdp_standard_form, two_by_two_checks,
                      wg_constraints_residual, wg_cycle_condition, wg_to_x, x_to_wg)
from .radial import (BoundReport, LinearState, check_bounds, distflow_residual, solve_linear_distflow,
                     solve_linear_reverse, solve_radial)
from .relax import (ExactnessReport, OpfResult, brute_force_opf, build_bfm_socp, build_bim_socp,
                    check_exactness, recover_solution, solve_opf)
from .socp import ConeProblem, ConeSolution, RotatedCone, kkt_residuals, solve
