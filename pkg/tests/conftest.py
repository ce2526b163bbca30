import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

from pinball import settings
from pinball.configuration import Configuration
from pinball.geometry import Site

hypothesis_settings.register_profile(
    "pinball", deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
hypothesis_settings.load_profile("pinball")

SRC = Path(__file__).resolve().parents[1] / "src"


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """テストごとに設定を既定値へ戻す（子プロセスからも src を import できるようにする）"""
    monkeypatch.setenv("PYTHONPATH", os.pathsep.join(filter(None, [str(SRC), os.environ.get("PYTHONPATH")])))
    monkeypatch.delenv(settings.ENV_CONFIG, raising=False)
    settings.reset()
    yield
    settings.reset()


def h_site(i, j):
    return Site(i + j + 1, i - j + 1)


def v_site(i, j):
    return Site(i + j + 1, i - j)


def ring_sites(r, skip=()):
    """格子座標で max(|i|, |j|) = r の正方形をなす辺のサイト"""
    sites = []
    for i in range(-r, r):
        sites += [h_site(i, -r), h_site(i, r)]
    for j in range(-r, r):
        sites += [v_site(-r, j), v_site(r, j)]
    return [s for s in sites if s not in set(skip)]


@pytest.fixture
def loop_config():
    return Configuration.filled(8, True)
