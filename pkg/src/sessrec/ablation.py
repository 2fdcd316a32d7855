"""Named ablation arms: module toggles and graph-element removals.

Module arms change the encoder paths only; graph arms rebuild the graph with
one edge class disabled from the start (so neighbor caps and the conflict
rule react accordingly) and train the unchanged model on it. The
no-user-nodes arm both removes the interaction edges and reads the initial
user embedding in place of the graph output.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import Config
from .data import SessionCorpus, segment_examples
from .errors import ConfigError
from .evaluate import MetricReport, report_from_ranks
from .graph import EdgeType, GraphConfig, HeteroGraph, assemble_graph
from .train import FULL, ArmToggles, score_examples, train_model

ARMS: dict[str, tuple[ArmToggles, frozenset[EdgeType]]] = {
    "full": (FULL, frozenset()),
    "w/o HGNN module": (ArmToggles(use_hgnn=False), frozenset()),
    "w/o CPL module": (ArmToggles(use_current=False), frozenset()),
    "w/o GPL module": (ArmToggles(use_general=False), frozenset()),
    "w/o user nodes": (
        ArmToggles(user_passthrough=True),
        frozenset({EdgeType.INTERACT, EdgeType.INTERACTED_BY}),
    ),
    "w/o in edges": (FULL, frozenset({EdgeType.IN})),
    "w/o out edges": (FULL, frozenset({EdgeType.OUT})),
    "w/o similar edges": (FULL, frozenset({EdgeType.SIMILAR})),
}


def arm_spec(arm: str) -> tuple[ArmToggles, frozenset[EdgeType]]:
    try:
        return ARMS[arm]
    except KeyError:
        raise ConfigError(
            f"unknown ablation arm {arm!r}; valid arms: " + ", ".join(sorted(ARMS))
        ) from None


def build_arm_graph(arm: str, corpus: SessionCorpus, config: Config) -> HeteroGraph:
    _toggles, exclude = arm_spec(arm)
    graph = assemble_graph(
        corpus,
        GraphConfig(config.graph_s, config.graph_k, config.graph_self_loops),
        exclude=exclude,
    )
    for et in exclude:
        assert graph.edge_count(et) == 0, f"{arm}: {et.value} edges survived"
    return graph


@dataclass
class ArmResult:
    arm: str
    report: MetricReport
    graph: HeteroGraph
    params: object
    toggles: ArmToggles
    ranks: object
    test_examples: list


def run_arm(arm: str, corpus: SessionCorpus, config: Config, log=None) -> ArmResult:
    """Train and evaluate one arm end to end on the corpus's test split."""
    toggles, _exclude = arm_spec(arm)
    graph = build_arm_graph(arm, corpus, config)
    params, _stats = train_model(corpus, graph, config, toggles, log=log)
    test_examples = segment_examples(corpus, split="test")
    ranks = score_examples(params, graph, test_examples, toggles)
    report = report_from_ranks(
        arm,
        ranks,
        config.eval_ks,
        user_ids=[ex.user_id for ex in test_examples],
        per_user=config.eval_per_user,
    )
    return ArmResult(arm, report, graph, params, toggles, ranks, test_examples)
