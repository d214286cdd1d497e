"""SDP solver adapters.

Settings are pinned so that repeated solves of the same problem return the
same certificate; the chosen backend and its options travel with every
result for reproducibility. NFL_SYNTH_BACKEND selects the adapter when the
caller does not.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import cvxpy as cp

from .errors import NumericalFailure, ParseError

CLARABEL_OPTIONS = {
    "tol_gap_abs": 1e-9,
    "tol_gap_rel": 1e-9,
    "tol_feas": 1e-9,
}
SCS_OPTIONS = {
    "eps_abs": 1e-9,
    "eps_rel": 1e-9,
    "max_iters": 200_000,
}

_SOLVER_IDS = {"clarabel": cp.CLARABEL, "scs": cp.SCS}


@dataclass(frozen=True)
class SdpBackend:
    name: str
    options: dict = field(default_factory=dict)

    def run(self, problem: cp.Problem) -> str:
        """Solve in place; returns the cvxpy status string."""
        try:
            problem.solve(solver=_SOLVER_IDS[self.name], **self.options)
        except cp.error.SolverError as exc:
            raise NumericalFailure(f"SDP solver failed: {exc}") from exc
        return problem.status


def select_backend(name: str | None = None) -> SdpBackend:
    """Resolve a backend by name, falling back to NFL_SYNTH_BACKEND, then to
    the default."""
    if name is None:
        name = os.environ.get("NFL_SYNTH_BACKEND", "clarabel")
    key = name.strip().lower()
    if key == "clarabel":
        return SdpBackend("clarabel", dict(CLARABEL_OPTIONS))
    if key == "scs":
        return SdpBackend("scs", dict(SCS_OPTIONS))
    raise ParseError(f"unknown SDP backend {name!r} (available: clarabel, scs)")
