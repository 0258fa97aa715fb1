"""Blocklength sweeps and their CSV rows."""

from __future__ import annotations

import csv
import io

from .beliefs import NoConditioningMass, empirical_belief_divergence
from .codebook import (DEFAULT_MAX_SYMBOLS, EXHAUSTIVE_LIMIT, CodebookEnsemble, generate_codebook,
                       message_bits, resolve_rates, simulate_traces)
from .events import error_event_frequencies
from .stage import stagewise_block_game
from .typicality import TypicalityConfig, default_config

CSV_COLUMNS = ("n", "trial_count", "p_f0", "p_f1", "p_f2", "avg_state_kl", "avg_type_kl_1",
               "avg_type_kl_2", "block_cost", "gamma_star_ref")


def make_source(instance, policy, config: TypicalityConfig, n: int, seed: int, rates=None,
                explicit: bool | None = None):
    """Explicit codebook when its source sequences can be enumerated and the
    words fit the memory budget, the codebook ensemble otherwise."""
    rates = resolve_rates(instance, policy, config, rates)
    if explicit is None:
        bits = [message_bits(n, r) for r in rates.as_tuple()]
        k0, k1, k2 = (1 << b for b in bits) if max(bits) <= 40 else (0, 0, 0)
        explicit = (len(instance.alphabet_u) ** n <= EXHAUSTIVE_LIMIT and max(bits) <= 40
                    and n * (k0 + k0 * k1 + k0 * k2) <= DEFAULT_MAX_SYMBOLS)
    if explicit:
        return generate_codebook(instance, policy, config, n, seed, rates)
    return CodebookEnsemble(instance, policy, config, n, rates)


def sweep_row(instance, policy, n: int, trials: int, seed: int, rates=None, config=None,
              gamma_star_ref=None) -> dict:
    config = config or default_config(instance, policy, n=n)
    source = make_source(instance, policy, config, n, seed, rates)
    traces = simulate_traces(source, config, trials, seed)
    events = error_event_frequencies(traces)
    try:
        beliefs = empirical_belief_divergence(source, instance, config, trials, seed, traces=traces)
        kls = (beliefs.avg_state_kl, beliefs.avg_type_kl_1, beliefs.avg_type_kl_2)
    except NoConditioningMass:
        kls = (None, None, None)
    block = stagewise_block_game(source, instance, config, trials, seed)
    return {"n": n, "trial_count": trials, "p_f0": events.p_f0, "p_f1": events.p_f1_given_not_f0,
            "p_f2": events.p_f2_given_not_f0, "avg_state_kl": kls[0], "avg_type_kl_1": kls[1],
            "avg_type_kl_2": kls[2], "block_cost": block.block_encoder_cost,
            "gamma_star_ref": gamma_star_ref}


def run_sweep(instance, policy, n_list, trials: int, seed: int, rates=None, delta=None,
              gamma_star_ref=None) -> list:
    rows = []
    for n in n_list:
        config = TypicalityConfig(delta) if delta is not None else None
        rows.append(sweep_row(instance, policy, n, trials, seed, rates, config, gamma_star_ref))
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()
