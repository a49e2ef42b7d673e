import importlib.resources

import pytest

from csketch.core import TraceConfig
from csketch.graph import ContactGraph
from csketch.ids import assign
from csketch.processor import process
from csketch.simulate import Scenario, generate
from csketch.tracer import TraceResult, trace_contacts
from csketch.wire import parse_stream


def demo_scenario_text() -> str:
    return importlib.resources.files("csketch").joinpath("data/demo.json").read_text()


@pytest.fixture(scope="session")
def demo_scenario() -> Scenario:
    return Scenario.from_json(demo_scenario_text())


@pytest.fixture(scope="session")
def demo_bundle(demo_scenario):
    """(scenario, streams, ground truth) for the bundled 10-user demo."""
    streams, truth = generate(demo_scenario)
    return demo_scenario, streams, truth


def ingest_scenario(scenario: Scenario, streams: dict[int, bytes]) -> ContactGraph:
    graph = ContactGraph(scenario.config)
    table = assign(scenario.config.population, scenario.config.ids_per_user,
                   scenario.id_mode, scenario.id_seed)
    for user in sorted(streams):
        process(graph, parse_stream(streams[user]), table)
    return graph


@pytest.fixture()
def demo_graph(demo_bundle) -> ContactGraph:
    scenario, streams, _ = demo_bundle
    return ingest_scenario(scenario, streams)


@pytest.fixture()
def demo_traced(demo_graph):
    """Graph plus the combined trace of the two infected users at depth 3."""
    result = trace_contacts(demo_graph, [2, 6], TraceResult(), 3)
    return demo_graph, result


def small_config(**overrides) -> TraceConfig:
    defaults = dict(
        incubation_days=5,
        slot_minutes=1440,
        sample_minutes=288,
        samples_per_slot=5,
        population=10,
        avg_degree=4,
        ids_per_user=2,
    )
    defaults.update(overrides)
    return TraceConfig(**defaults)
