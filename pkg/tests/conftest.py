from __future__ import annotations

import pytest

from clam.backend import ScriptedBackend, load_script_rules
from clam.corpus import bundled_sample_path, load_pairs


class RecordingBackend:
    """Wraps a backend and keeps every prompt it was sent."""

    def __init__(self, inner):
        self.inner = inner
        self.prompts: list[str] = []

    def complete(self, request):
        self.prompts.append(request.prompt)
        return self.inner.complete(request)


@pytest.fixture(scope="session")
def fixture_rules():
    return load_script_rules(bundled_sample_path("fixture_rules.json"))


@pytest.fixture
def fixture_backend(fixture_rules):
    return ScriptedBackend(fixture_rules)


@pytest.fixture(scope="session")
def sample_pairs():
    return load_pairs(bundled_sample_path())


@pytest.fixture
def recording_backend(fixture_backend):
    return RecordingBackend(fixture_backend)
