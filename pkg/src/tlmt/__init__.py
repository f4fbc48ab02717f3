"""Temporal-logic task specifications over real-valued states, compiled to reward automata."""

from .syntax import parse_formula, print_formula, resolve, ParseError, FragmentError, ResolutionError
from .abstraction import LetterTable, abstract_formula
from .automaton import Dfa, compile_dfa, minimize, run, accepts, ltlf_eval, ltlfmt_eval
from .product import CompiledTask, ProductMDP, compile_task, rollout
from .augment import GoalSpec, ReplayBuffer, crm_expand, her_relabel, crm_her_expand
from .agent import TrainSpec, QFunction, train, evaluate, evaluate_policy

__version__ = "0.1.0"
