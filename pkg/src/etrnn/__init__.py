"""Compile ETR-INV formulas into two-layer neural-network training instances.

The pipeline is::

    parse_etr_inv -> lower_to_combined -> split_repeated_terms
        -> compile_restricted -> remove_fixed_weights -> add_bias_anchor
        -> remove_question_marks

Witnesses for the compiled instance can be synthesized from formula
solutions, verified exactly, and turned back into formula solutions.
"""

from etrnn.errors import EtrnnError
from etrnn.evaluate import Witness, forward_eval, total_cost, verify_witness
from etrnn.formula import EtrInvFormula, evaluate_formula, parse_etr_inv
from etrnn.inveq import lower_to_combined, split_repeated_terms
from etrnn.lowering import compile_full
from etrnn.network import TrainingInstance, validate_instance
from etrnn.witness import extract_assignment, synthesize_witness

__all__ = [
    "EtrInvFormula",
    "EtrnnError",
    "TrainingInstance",
    "Witness",
    "compile_full",
    "evaluate_formula",
    "extract_assignment",
    "forward_eval",
    "lower_to_combined",
    "parse_etr_inv",
    "split_repeated_terms",
    "synthesize_witness",
    "total_cost",
    "validate_instance",
    "verify_witness",
]
