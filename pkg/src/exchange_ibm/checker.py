"""Invariance checks for Bernoulli measures under an exchange process."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cycles import Cycle, decompose_cycles
from .exactgen import DEFAULT_MAX_STATES, StateCapExceeded, build_generator, verify_invariant_exact
from .model import DEFAULT_TOL, PairMap, ProcessModel, RateTable, SpinMeasure, pair_measure


def _close(x: float, y: float, tol: float) -> bool:
    return abs(x - y) <= tol * max(abs(x), abs(y))


@dataclass(frozen=True)
class AgreementResult:
    agrees: bool
    witness: Cycle | None = None
    values: tuple[float, float] | None = None

    def __bool__(self):
        return self.agrees


def check_agreement(nu: SpinMeasure, F: PairMap, tol: float = DEFAULT_TOL) -> AgreementResult:
    """Whether nu x nu is constant on every cycle of F (relative tolerance ``tol``)."""
    p2 = pair_measure(nu).probs
    for c in decompose_cycles(F):
        ref = p2[c.states[0]]
        for s in c.states[1:]:
            if not _close(ref, p2[s], tol):
                return AgreementResult(False, c, (float(ref), float(p2[s])))
    return AgreementResult(True)


def check_pair_invariance(nu: SpinMeasure, F: PairMap, tol: float = DEFAULT_TOL) -> bool:
    """Whether nu x nu is preserved by F (pushforward equality for maps that are not one-to-one)."""
    p2 = pair_measure(nu).flat
    if F.is_bijective:
        pulled = p2[F.inverse_images()]
    else:
        pulled = np.zeros_like(p2)
        np.add.at(pulled, F.images, p2)
    return bool(np.all(np.abs(pulled - p2) <= tol * np.maximum(np.abs(pulled), np.abs(p2))))


@dataclass(frozen=True)
class RateResult:
    holds: bool
    witness: Cycle | None = None

    def __bool__(self):
        return self.holds


def check_rate_condition(rates: RateTable, F: PairMap) -> RateResult:
    """Whether the rate table is constant along every cycle of F (exact comparison)."""
    r = rates.rates
    for c in decompose_cycles(F):
        first = r[c.states[0]]
        if any(r[s] != first for s in c.states[1:]):
            return RateResult(False, c)
    return RateResult(True)


def edge_residual(nu: SpinMeasure, F: PairMap, rates: RateTable) -> float:
    """Sup-norm stationarity defect of nu x nu for one edge joining two vertices."""
    p2 = pair_measure(nu).flat
    lam = rates.rates.reshape(-1)
    moved = F.images != np.arange(F.images.size)
    flow = np.where(moved, lam * p2, 0.0)
    inflow = np.zeros_like(p2)
    np.add.at(inflow, F.images, flow)
    return float(np.max(np.abs(inflow - flow)))


@dataclass
class InvarianceReport:
    invariant: bool | None
    method: str
    agreement: bool | None
    pair_invariance: bool
    rate_conditions: list[bool]
    edge_residuals: list[float]
    exact_residual: float | None = None
    exact_tolerance: float | None = None
    witness: dict | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "invariant": self.invariant,
            "method": self.method,
            "agreement": self.agreement,
            "pair_invariance": self.pair_invariance,
            "rate_conditions": self.rate_conditions,
            "edge_residuals": self.edge_residuals,
            "exact_residual": self.exact_residual,
            "exact_tolerance": self.exact_tolerance,
            "witness": self.witness,
            "notes": self.notes,
        }


def check_model_invariance(
    model: ProcessModel, nu: SpinMeasure, tol: float = DEFAULT_TOL, max_states: int = DEFAULT_MAX_STATES
) -> InvarianceReport:
    """Decide whether nu^V is invariant for the model.

    With a one-to-one map and rates constant along cycles, the answer comes
    from agreement of nu x nu with F.  Otherwise each edge is checked on its
    own two-vertex chain (invariance for every edge is enough, by summing
    the stationarity equations), and the full generator settles the rest
    when it fits under ``max_states``.
    """
    F = model.map
    oriented = model.mode == "oriented"
    bijective = F.is_bijective
    pair_ok = check_pair_invariance(nu, F, tol)
    agreement = None
    witness = None
    if bijective and not oriented:
        res = check_agreement(nu, F, tol)
        agreement = res.agrees
        if not res:
            witness = {"cycle": [list(s) for s in res.witness.states], "values": list(res.values)}
    rate_ok = [bool(check_rate_condition(e.rates, F)) if bijective else False for e in model.edges]

    p2 = pair_measure(nu).flat
    edge_res = [edge_residual(nu, F, e.rates) for e in model.edges]
    max_rate = max((float(e.rates.rates.max()) for e in model.edges), default=0.0)
    edge_tol = tol * max(max_rate, 1.0) * max(float(p2.max()), 1e-300)

    report = InvarianceReport(None, "undetermined", agreement, pair_ok, rate_ok, edge_res)
    report.witness = witness
    verdict = agreement if agreement is not None else pair_ok

    moved = F.images != np.arange(F.images.size)
    positive = all(bool(np.all(e.rates.rates.reshape(-1)[moved] > 0)) for e in model.edges)
    if bijective and all(rate_ok) and verdict:
        report.invariant, report.method = True, "criterion"
    elif all(r <= edge_tol for r in edge_res):
        report.invariant, report.method = True, "edgewise"
    elif bijective and all(rate_ok) and positive and len(model.edges) > 0:
        report.invariant, report.method = False, "criterion"
    else:
        report.notes.append("rate hypothesis fails or some moving rate is zero; criterion not conclusive")

    try:
        gen = build_generator(model, max_states)
    except StateCapExceeded as exc:
        report.notes.append(f"exact check skipped: {exc}")
        return report
    exact = verify_invariant_exact(nu, gen)
    report.exact_residual, report.exact_tolerance = exact.residual, exact.tolerance
    if report.invariant is None:
        report.invariant, report.method = exact.invariant, "exact"
    elif report.invariant != exact.invariant:
        report.notes.append(f"exact residual {exact.residual:.3e} disagrees with the {report.method} verdict")
    return report
