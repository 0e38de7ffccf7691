import pytest

from invcurate.verify import BuiltinBackend, Program

import corpus


@pytest.fixture
def running_example():
    return Program.from_source(corpus.source("running_example.c"))


@pytest.fixture
def cohendiv():
    return Program.from_source(corpus.source("cohendiv.c"))


@pytest.fixture
def range_loop():
    return Program.from_source(corpus.source("range_loop.c"))


@pytest.fixture
def builtin():
    return BuiltinBackend()


@pytest.fixture
def trace_backend():
    return BuiltinBackend(clock="trace", trace_seconds=1.0)
