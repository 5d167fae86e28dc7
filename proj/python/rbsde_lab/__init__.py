"""Lattice solvers for reflected BSDEs with non-Lipschitz generators."""

from ._core import (
    EnvelopeFlow,
    Envelope,
    FlowLevel,
    Generator,
    Lattice,
    MCurve,
    Problem,
    RbsdeError,
    ResidualReport,
    Solution,
    certificate,
    compare,
    envelope_gap_bound,
    generator,
    m_curves,
    paste,
    residual,
    run_config,
    scan,
    shifted,
    solve,
    solve_extremal,
)

__all__ = [name for name in dir() if not name.startswith("_")]
