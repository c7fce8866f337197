"""Franks-lemma constructions for Poisson maps and Hamiltonian flows.

Coordinates on R^{2d+n} are ``(x_1..x_d, y_1..y_d, z_1..z_n)`` with the
constant-rank structure ``J_hat = diag(J, 0)``; Hamiltonian vector fields are
``X_H = J_hat grad H`` and the normal form is ``H0 = -y_1`` (field e_{x_1}).
"""
from .bump import BumpFunction, ell, ell_d1, ell_d2, make_bump
from .core import (PoissonSpace, embed_Phi, embed_pi_k, is_poisson_linear, is_symplectic, lift_A_pi, matrix_norm,
                   poisson_defect, random_symplectic, rotation, structure_matrix, symplectic_defect, symplectic_J)
from .errors import (ChartError, ComplexSpectrum, DegenerateBase, DimensionError, DivergedError, DomainError,
                     FranksPoissonError, GapTooSmall, InfeasibleAngle, NoCrossing, NondegeneracyFailure, NoReturn,
                     OutOfRegime, OutOfTube)
from .factorization import Factorization, RotationFactor, decompose_near_identity, symplectic_diagonalize
from .fields import (HamiltonianField, field_from_descriptor, make_chained_hamiltonian, make_rotation_hamiltonian,
                     make_transit_hamiltonian, normal_form_hamiltonian, quadratic_hamiltonian, rescale_support)
from .flowbox import (FlowboxChart, FunctionHamiltonian, LeafChart, Section, build_flowbox_chart, conjugate_field,
                      solve_tau, verify_poisson_chart)
from .flows import (closed_form_K_flow, closed_form_transit_flow, flow_jacobian, integrate_flow, poincare_map,
                    resolved_step)
from .kernels import backend_name
from .realization import (PerturbedHamiltonian, PerturbedMap, perturbation_size, realize_continuous,
                          realize_discrete)
from .report import VerificationReport
from .suites import run_suite

__version__ = "0.1.0"

__all__ = [name for name, obj in list(globals().items()) if not name.startswith("_") and not hasattr(obj, "__path__")
           and getattr(obj, "__name__", "").rpartition(".")[0] != __name__]
