"""Joint power splitting and battery management for energy harvesting AF relay networks."""

from .channel import (ChannelQuantizer, ChannelTrace, FadingParams, LinkQuantizer, build_quantizer,
                      quantize, read_trace_csv, sample_trace, write_trace_csv)
from .comparators import (ComparatorConfig, run_fixed_ratio, run_harvest_store_use, run_harvest_use,
                          run_relay_selection, run_time_switching)
from .embedded import SolverSettings, SolverStats, build_context, dinkelbach, j_upper, solve_embedded
from .model import (Decision, InfeasibleDecision, SlotChannel, SystemParams, payoff, rate_from_snr,
                    slot_snr)
from .planner import (PlanResult, PolicyTable, backward_induction, build_lookup_table,
                      exhaustive_search, run_greedy, run_online_markov)

__version__ = "0.1.0"
