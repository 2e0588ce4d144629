"""Pareto-optimal split-TCP proxy chains over a full-mesh RTT matrix."""
from .pareto import (ParetoFront, ParetoPath, minimax_path, pareto_baseline, pareto_optimized,
                     shortest_path)
from .topology import (DistanceMatrix, ProxyGraph, TopologyError, build_full_mesh,
                       parse_rocketfuel_latencies, parse_topology)
from .transfer import (ChainLookupTable, TransferModel, build_lookup_table, chain_time,
                       rounds_for_size, select_chain)

__version__ = "0.1.0"

__all__ = [
    "ChainLookupTable", "DistanceMatrix", "ParetoFront", "ParetoPath", "ProxyGraph",
    "TopologyError", "TransferModel", "build_full_mesh", "build_lookup_table", "chain_time",
    "minimax_path", "pareto_baseline", "pareto_optimized", "parse_rocketfuel_latencies",
    "parse_topology", "rounds_for_size", "select_chain", "shortest_path",
]
