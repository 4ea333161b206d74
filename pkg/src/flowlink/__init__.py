"""Flow-level link capacity analysis toolkit.

Submodules:
    traffic_model  parametric traffic models and closed-form moments
    simulator      event-driven unconstrained / processor-sharing simulation
    analyzer       working-area and saturation-line fitting, knee detection
    netflow        NetFlow v5 parsing, sample aggregation, shared CSV format
    cli            `flowlink` command-line entry point
"""

from . import analyzer, errors, netflow, simulator, traffic_model

__version__ = "0.1.0"

__all__ = ["analyzer", "errors", "netflow", "simulator", "traffic_model", "__version__"]
