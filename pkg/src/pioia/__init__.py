"""Staged outer-inner approximation for unit commitment with an SOC-relaxed AC network."""

from .backend import SolveControls, SolveOutcome, get_backend, solve_continuous, solve_mixed
from .benders import TimeBlockDual, benders_cut, solve_time_block
from .cuts import Cut, CutPool, line_capacity_cut, select_violated, soc_cut
from .formulation import ModelSpec, Variant, VariableIndex, build_inner, build_outer_base
from .metrics import gap, milestones, optg, violation
from .model import (CommitmentSchedule, UcInstance, generate_synthetic, load_instance,
                    perturb_loads, write_instance)
from .oia import AlgoParams, SolverState, active_capacity_keys, run_oia, update_controls
from .oracle import brute_force_optimum, enumerate_feasible_commitments
from .progressive import Method, generator_scores, run_ig_stage, run_lp_stage, run_pioia
from .trace import RunTrace

__version__ = "0.1.0"
