"""Bundled model builders: the one-shot duopoly stage, the repeated game, and
the integrated intervention-plus-duopoly model.

Stage coding follows the source convention throughout: Firm1/Firm1* states
are defect(0), cooperate(1), stop(2); Firm2 chooses defect(0)/cooperate(1).
Stage payoffs live in a utility table over (Firm1, Firm2); the stop state
pays zero (nothing accrues after termination). Firm1's next-stage behaviour
depends only on the stop signal and Firm2's current move, so each stage's
survival is governed by that stage's own signal.

Calibration constants frozen after fitting the published expected-utility
pairs: 4 stage instances (3 repetitions), one stop signal per stage, and
evidence-level stop probabilities applied to the first stage only while later
stages stay at the 0.0189 baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DocumentError
from .network import CHANCE, DECISION, UTILITY, NetworkDoc, NodeSpec, TableSpec
from .oobn import (
    ClassDoc,
    FIRM1_STATES,
    FlatFinding,
    FlatNetwork,
    InputDecl,
    InstanceDecl,
    STOP_STATES,
    flatten,
    set_stage_override,
    stage_name,
    unroll_repeated,
)

FIRM2_STATES = ("defect", "cooperate")
PARAM_GRID = tuple(f"{v / 20:.2f}" for v in range(21))  # 0.00, 0.05, ..., 1.00

BASELINE_STOP_P = 0.0189
CALIBRATED_STAGES = 3
CALIBRATED_COUPLING = "per-stage-AA"
P_E1 = 0.514  # published intervention posterior under the E1 findings
P_E2 = 0.925  # unpublished; frozen to reproduce the terminal sweep row


@dataclass(frozen=True)
class PayoffMatrix:
    """Symmetric stage payoffs: a both-cooperate, b both-defect, c cooperate
    against a defector, d defect against a cooperator."""

    a: float
    b: float
    c: float
    d: float

    def is_valid_pd(self) -> bool:
        return (
            self.d > self.a > self.b >= self.c
            and 2 * self.a > (self.c + self.d) > 2 * self.b
        )

    def utility_values(self) -> tuple[float, ...]:
        # over (Firm1: defect, cooperate, stop) x (Firm2: defect, cooperate)
        return (self.b, self.c, self.d, self.a, 0.0, 0.0)


PERFECT_SUBSTITUTABILITY = PayoffMatrix(a=100.0, b=0.0, c=-10.0, d=150.0)
IMPERFECT_SUBSTITUTABILITY = PayoffMatrix(a=150.0, b=100.0, c=50.0, d=160.0)


@dataclass(frozen=True)
class StrategyParams:
    """Rival-behaviour model: tit-for-tat, or the generalized form where the
    rival cooperates next stage with probability alpha_C after cooperation
    and alpha_D after defection. Values may be point probabilities, weight
    vectors over the 21-point parameter grid, or None for a uniform grid."""

    mode: str = "tft"
    alpha_c: float | tuple[float, ...] | None = None
    alpha_d: float | tuple[float, ...] | None = None
    stage1_cooperates: bool | None = None

    def __post_init__(self):
        if self.mode not in ("tft", "generalized"):
            raise DocumentError(f"unknown strategy mode {self.mode!r}")
        for name, value in (("alpha_c", self.alpha_c), ("alpha_d", self.alpha_d)):
            if isinstance(value, (list, tuple, np.ndarray)):
                weights = tuple(float(x) for x in value)
                if len(weights) != len(PARAM_GRID) or any(w < 0 for w in weights) or not any(weights):
                    raise DocumentError(
                        f"{name} weights must be {len(PARAM_GRID)} nonnegative values, not all zero"
                    )
                object.__setattr__(self, name, weights)
            elif value is not None and not 0.0 <= float(value) <= 1.0:
                raise DocumentError(f"{name} must lie in [0, 1]")

    @property
    def starts_cooperating(self) -> bool:
        if self.stage1_cooperates is not None:
            return self.stage1_cooperates
        return self.mode == "tft"

    @staticmethod
    def tft() -> "StrategyParams":
        return StrategyParams(mode="tft")

    @staticmethod
    def generalized(alpha_c=None, alpha_d=None, stage1_cooperates=None) -> "StrategyParams":
        return StrategyParams("generalized", alpha_c, alpha_d, stage1_cooperates)


def resolve_payoffs(value) -> PayoffMatrix:
    if isinstance(value, PayoffMatrix):
        return value
    if value in (None, "perfect"):
        return PERFECT_SUBSTITUTABILITY
    if value == "imperfect":
        return IMPERFECT_SUBSTITUTABILITY
    if isinstance(value, dict):
        return PayoffMatrix(float(value["a"]), float(value["b"]), float(value["c"]), float(value["d"]))
    raise DocumentError(f"unknown payoff spec {value!r}")


# --- one-shot stage -------------------------------------------------------------


def build_pd_stage(p: PayoffMatrix) -> NetworkDoc:
    """The one-shot duopoly stage: rival move as a uniform two-state chance
    node, own move as the decision, one utility table."""
    firm1 = NodeSpec(
        "Firm1", CHANCE, states=FIRM2_STATES, table=TableSpec("explicit", values=(0.5, 0.5))
    )
    firm2 = NodeSpec("Firm2", DECISION, states=FIRM2_STATES)
    u2 = NodeSpec(
        "U2",
        UTILITY,
        parents=("Firm1", "Firm2"),
        table=TableSpec("utility", values=(p.b, p.c, p.d, p.a)),
    )
    return NetworkDoc("pd-stage", (firm1, firm2, u2), decision_order=("Firm2",))


# --- the repeated-stage class ----------------------------------------------------


def _tft_expression() -> dict:
    return {
        "op": "select",
        "switch": "stop?",
        "cases": {
            "1": {"op": "constant", "state": "stop"},
            "0": {
                "op": "select",
                "switch": "Firm2",
                "cases": {
                    "defect": {"op": "constant", "state": "defect"},
                    "cooperate": {"op": "constant", "state": "cooperate"},
                },
            },
        },
    }


def _generalized_expression() -> dict:
    return {
        "op": "select",
        "switch": "stop?",
        "cases": {
            "1": {"op": "constant", "state": "stop"},
            "0": {
                "op": "select",
                "switch": "Firm2",
                "cases": {
                    "defect": {"op": "parent", "name": "Firm1*|D"},
                    "cooperate": {"op": "parent", "name": "Firm1*|C"},
                },
            },
        },
    }


def _alpha_prior(value: float | tuple[float, ...] | None) -> tuple[float, ...]:
    """Prior over the parameter grid: uniform when unknown, or a point mass
    (the grid is extended by callers only for off-grid literals, which the
    bundled models never use)."""
    k = len(PARAM_GRID)
    if value is None or isinstance(value, tuple):
        return tuple([1.0 / k] * k)
    idx = int(round(float(value) * 20))
    if not 0 <= idx <= 20 or abs(idx / 20 - float(value)) > 1e-9:
        raise DocumentError(f"point value {value} is not on the parameter grid")
    prior = [0.0] * k
    prior[idx] = 1.0
    return tuple(prior)


def build_stage_class(p: PayoffMatrix, s: StrategyParams) -> ClassDoc:
    """One stage of the repeated game as a reusable class: Firm1 and the stop
    signal come in over identity links, Firm1* goes out to the next stage."""
    nodes: list[NodeSpec] = [
        NodeSpec("Firm2", DECISION, states=FIRM2_STATES),
        NodeSpec(
            "U2",
            UTILITY,
            parents=("Firm1", "Firm2"),
            table=TableSpec("utility", values=p.utility_values()),
        ),
    ]
    if s.mode == "tft":
        nodes.append(
            NodeSpec(
                "Firm1*",
                CHANCE,
                states=FIRM1_STATES,
                parents=("stop?", "Firm2"),
                table=TableSpec("expression", expr=_tft_expression()),
            )
        )
    else:
        for alpha, response, prob in (
            ("alpha_D", "Firm1*|D", s.alpha_d),
            ("alpha_C", "Firm1*|C", s.alpha_c),
        ):
            if isinstance(prob, float) or isinstance(prob, int):
                # Point beliefs fold straight into the response node.
                q = float(prob)
                nodes.append(
                    NodeSpec(
                        response,
                        CHANCE,
                        states=FIRM2_STATES,
                        table=TableSpec("explicit", values=(1.0 - q, q)),
                    )
                )
            else:
                nodes.append(
                    NodeSpec(
                        alpha,
                        CHANCE,
                        states=PARAM_GRID,
                        table=TableSpec("explicit", values=_alpha_prior(prob)),
                    )
                )
                nodes.append(
                    NodeSpec(
                        response,
                        CHANCE,
                        states=FIRM2_STATES,
                        parents=(alpha,),
                        table=TableSpec("expression", expr={"op": "bernoulli", "param": alpha}),
                    )
                )
        nodes.append(
            NodeSpec(
                "Firm1*",
                CHANCE,
                states=FIRM1_STATES,
                parents=("stop?", "Firm2", "Firm1*|D", "Firm1*|C"),
                table=TableSpec("expression", expr=_generalized_expression()),
            )
        )
    return ClassDoc(
        name=f"duopoly-stage-{s.mode}",
        body=NetworkDoc("stage", tuple(nodes), decision_order=("Firm2",)),
        inputs=(InputDecl("Firm1", FIRM1_STATES), InputDecl("stop?", STOP_STATES)),
        outputs=("Firm1*",),
    )


def _strategy_findings(flat: FlatNetwork, s: StrategyParams, n_instances: int) -> FlatNetwork:
    if s.starts_cooperating:
        flat = set_stage_override(flat, 1, "Firm1", "cooperate")
    if s.mode == "generalized":
        for alpha, weights in (("alpha_C", s.alpha_c), ("alpha_D", s.alpha_d)):
            if isinstance(weights, tuple):
                for k in range(1, n_instances + 1):
                    node = flat.resolve(stage_name(k, alpha))
                    flat = flat.with_finding(FlatFinding(node, "likelihood", weights))
    return flat


# --- pure repeated game -----------------------------------------------------------


def build_repeated_pd(
    p: PayoffMatrix, s: StrategyParams, n_stages: int
) -> tuple[ClassDoc, dict[str, ClassDoc]]:
    """The repeated game on its own: one shared continuation parameter (delta)
    drives one shared stop signal feeding every stage."""
    if n_stages < 1:
        raise DocumentError("n_stages must be >= 1")
    stage = build_stage_class(p, s)
    m = n_stages + 1
    top = [
        NodeSpec(
            "Firm1_init",
            CHANCE,
            states=FIRM1_STATES,
            table=TableSpec("explicit", values=(0.5, 0.5, 0.0)),
        ),
        NodeSpec(
            "delta",
            CHANCE,
            states=PARAM_GRID,
            table=TableSpec("explicit", values=_alpha_prior(None)),
        ),
        NodeSpec(
            "stop?",
            CHANCE,
            states=STOP_STATES,
            parents=("delta",),
            table=TableSpec(
                "expression", expr={"op": "bernoulli", "param": "delta", "complement": True}
            ),
        ),
    ]
    instances = []
    for k in range(1, m + 1):
        firm1_src = "Firm1_init" if k == 1 else stage_name(k - 1, "Firm1*")
        instances.append(
            InstanceDecl(
                f"Duopoly_{k}",
                stage.name,
                (("Firm1", firm1_src), ("stop?", "stop?")),
            )
        )
    root = ClassDoc(
        name=f"repeated-pd-{n_stages}x",
        body=NetworkDoc("root", tuple(top)),
        instances=tuple(instances),
    )
    return root, {stage.name: stage}


def flatten_repeated_pd(p: PayoffMatrix, s: StrategyParams, n_stages: int) -> FlatNetwork:
    root, registry = build_repeated_pd(p, s, n_stages)
    flat = flatten(root, registry)
    return _strategy_findings(flat, s, n_stages + 1)


# --- integrated model ----------------------------------------------------------------


def build_aa_class(aa: NetworkDoc) -> ClassDoc:
    if not aa.has_node("AAIntervention"):
        raise DocumentError("the intervention network must expose AAIntervention")
    return ClassDoc(name="AA", body=aa, outputs=("AAIntervention",))


def build_global(
    aa: NetworkDoc,
    p: PayoffMatrix,
    s: StrategyParams,
    n_stages: int = CALIBRATED_STAGES,
    coupling: str = CALIBRATED_COUPLING,
) -> FlatNetwork:
    """Full integrated model: the stop input of each stage is identity-linked
    to an intervention-network instance per the coupling mode."""
    stage = build_stage_class(p, s)
    flat = unroll_repeated(stage, build_aa_class(aa), n_stages, coupling)
    return _strategy_findings(flat, s, n_stages + 1)


def stop_node_names(n_stages: int, coupling: str) -> list[str]:
    if coupling == "shared-AA":
        return ["Stop"]
    return [f"Stop_{k}" for k in range(1, n_stages + 2)]


def build_global_override(
    p: PayoffMatrix,
    s: StrategyParams,
    n_stages: int = CALIBRATED_STAGES,
    coupling: str = CALIBRATED_COUPLING,
    stop_p: float | Sequence[float] = BASELINE_STOP_P,
) -> FlatNetwork:
    """Integrated model with the intervention effect replaced by plain
    Bernoulli stop signals (the published-posterior injection path)."""
    if n_stages < 1:
        raise DocumentError("n_stages must be >= 1")
    stage = build_stage_class(p, s)
    m = n_stages + 1
    names = stop_node_names(n_stages, coupling)
    probs = _stop_probs(stop_p, len(names))
    top = [
        NodeSpec(
            "Firm1_init",
            CHANCE,
            states=FIRM1_STATES,
            table=TableSpec("explicit", values=(0.5, 0.5, 0.0)),
        )
    ]
    for name, prob in zip(names, probs):
        top.append(
            NodeSpec(
                name,
                CHANCE,
                states=STOP_STATES,
                table=TableSpec("explicit", values=(1.0 - prob, prob)),
            )
        )
    instances = []
    for k in range(1, m + 1):
        firm1_src = "Firm1_init" if k == 1 else stage_name(k - 1, "Firm1*")
        stop_src = names[0] if coupling == "shared-AA" else names[k - 1]
        instances.append(
            InstanceDecl(
                f"Duopoly_{k}",
                stage.name,
                (("Firm1", firm1_src), ("stop?", stop_src)),
            )
        )
    root = ClassDoc(
        name=f"global-override-{n_stages}x-{coupling}",
        body=NetworkDoc("root", tuple(top)),
        instances=tuple(instances),
    )
    flat = flatten(root, {stage.name: stage})
    return _strategy_findings(flat, s, m)


def _stop_probs(stop_p: float | Sequence[float], count: int) -> list[float]:
    if isinstance(stop_p, (int, float)):
        probs = [float(stop_p)] * count
    else:
        probs = [float(x) for x in stop_p]
        if len(probs) != count:
            raise DocumentError(f"need {count} stop probabilities, got {len(probs)}")
    for q in probs:
        if not 0.0 <= q <= 1.0:
            raise DocumentError(f"stop probability {q} outside [0, 1]")
    return probs


def override_stop_probability(
    flat: FlatNetwork, p: float, scope: str = "all"
) -> FlatNetwork:
    """Replace the stop-signal priors of an override-mode model: every stage,
    or only the first (later stages keep their current level, the calibrated
    reading of evidence about the current market)."""
    if not 0.0 <= p <= 1.0:
        raise DocumentError(f"stop probability {p} outside [0, 1]")
    if scope not in ("all", "first-stage"):
        raise DocumentError(f"unknown override scope {scope!r}")
    stop_nodes = [
        n.name
        for n in flat.net.nodes
        if n.name == "Stop" or (n.name.startswith("Stop_") and n.name[5:].isdigit())
    ]
    if not stop_nodes:
        raise DocumentError(
            "no stop-signal nodes; build the model in override mode first"
        )
    if scope == "first-stage":
        stop_nodes = [n for n in stop_nodes if n in ("Stop", "Stop_1")]
    net = flat.net
    for name in stop_nodes:
        spec = net.node(name)
        net = net.with_node_replaced(
            NodeSpec(
                name,
                CHANCE,
                states=STOP_STATES,
                table=TableSpec("explicit", values=(1.0 - p, p)),
            )
        )
    return replace(flat, net=net)
