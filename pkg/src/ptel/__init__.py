"""Past-time temporal epistemic logic over shared-memory programs.

Bounded model checking with perfect-recall knowledge, exact step
specification checks on transition graphs, and a sequent proof kernel.
"""

from .errors import BudgetExceeded, FormulaError, KernelError, ModelError, PtelError, SyntaxProblem
from .evaluator import (AuditReport, CheckReport, Evaluator, Verdict, check_invariant,
                        check_valid_bounded, evaluator_for, satisfies, stability_audit)
from .explorer import (Point, PointSet, RunPrefix, TransitionGraph, explore_points,
                       indist_classes, induction_graph, make_point, observation_history,
                       reachable_graph, run_prefix)
from .formula import (expand_derived, nnf, parse_formula, render_formula, unfold_since)
from .kernel import (Derivation, Sequent, check_derivation, parse_derivation, soundness_fuzz)
from .program import (GlobalState, LocalState, Program, atom_holds, initial_state,
                      parse_program, step_thread, with_initial)
from .rg import (RGInterface, StepSpec, check_step_spec, entails_on_edges,
                 invariant_by_preservation, parallel_composition, pres_by_thread)

__version__ = "0.1.0"
