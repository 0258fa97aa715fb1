"""Finite-blocklength simulation of the typicality-based code."""

from .beliefs import (BeliefReport, NoConditioningMass, empirical_belief_divergence, encode_all,
                      ensemble_posteriors, explicit_posteriors, kl_bits)
from .codebook import (BlockTrace, Codebook, CodebookEnsemble, CodingTargets, encode,
                       exhaustive_traces, generate_codebook, message_bits, simulate_traces)
from .converse import ConverseReport, converse_check
from .events import ErrorEventEstimate, error_event_frequencies, estimate_error_events
from .stage import BlockGameResult, StageFailure, StageRecord, stagewise_block_game
from .sweep import CSV_COLUMNS, make_source, run_sweep, sweep_csv, sweep_row
from .typicality import (RestrictedTypeLaw, TypicalityConfig, default_config, delta_schedule,
                         is_typical, margin_rates)

__all__ = [
    "BeliefReport", "BlockGameResult", "BlockTrace", "CSV_COLUMNS", "Codebook", "CodebookEnsemble",
    "CodingTargets", "ConverseReport", "ErrorEventEstimate", "NoConditioningMass",
    "RestrictedTypeLaw", "StageFailure", "StageRecord", "TypicalityConfig", "converse_check",
    "default_config", "delta_schedule", "empirical_belief_divergence", "encode", "encode_all",
    "ensemble_posteriors", "error_event_frequencies", "estimate_error_events", "exhaustive_traces",
    "explicit_posteriors", "generate_codebook", "is_typical", "kl_bits", "make_source",
    "margin_rates", "message_bits", "run_sweep", "simulate_traces", "stagewise_block_game",
    "sweep_csv", "sweep_row",
]
