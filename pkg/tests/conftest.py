from __future__ import annotations

import time
from pathlib import Path

import pytest

from lacp import envelope as env
from lacp.node import Node, ToolRegistry, builtin_calculator, echo_tool
from lacp.transaction import ReplayGuard

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def identities():
    """(client identity, server identity, keystore) shared per session;
    all signing material is ephemeral."""
    client = env.keygen("client")
    server = env.keygen("server")
    return client, server, env.Keystore([client, server])


class FakeClock:
    def __init__(self, start: float = 1_754_640_000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


@pytest.fixture
def fake_clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def make_node(identities):
    """Factory for nodes bound to the shared identities, with an echo and
    calculator tool plus a per-node invocation counter."""
    client, server, keystore = identities

    def factory(clock=time.time, freshness=300.0, retention=86_400.0, **flags):
        registry = ToolRegistry()
        counter = {"calls": 0}

        def counting_echo(params, deadline=None):
            counter["calls"] += 1
            return echo_tool(params, deadline)

        registry.register("echo", counting_echo)
        registry.register("calculator", builtin_calculator)
        node = Node(server, keystore, registry=registry,
                    guard=ReplayGuard(freshness, retention), clock=clock, **flags)
        node.echo_calls = counter  # test-only introspection
        return node

    return factory
