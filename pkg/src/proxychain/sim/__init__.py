"""Discrete-event simulation of split-TCP chains and proxy offload."""
from .chain import (OffloadResult, OffloadScenario, SimLink, make_payload, run_chain,
                    run_offload, simulate_chain_transfer)
from .engine import EventLoop, SimulationDiverged
from .offload import OffloadMachine, OffloadState
from .seqspace import SeqTranslation, TcpSegment, translate_segment, untranslate_segment
from .tcp import SimTcpConn, detect_slowstart_end

__all__ = [
    "EventLoop", "OffloadMachine", "OffloadResult", "OffloadScenario", "OffloadState",
    "SeqTranslation", "SimLink", "SimTcpConn", "SimulationDiverged", "TcpSegment",
    "detect_slowstart_end", "make_payload", "run_chain", "run_offload",
    "simulate_chain_transfer", "translate_segment", "untranslate_segment",
]
