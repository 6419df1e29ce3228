import logging
from pathlib import Path

import pytest

from positioning.services.channel import ArrayConfig, ElementPattern, Geometry, Room
from positioning.services.geometry import Position
from positioning.services.session import FtmLink

FIXTURES = Path(__file__).parent / 'fixtures'


def load_hex(name):
    """Bytes of a hex-dump fixture; '#' starts a comment"""
    text = (FIXTURES / name).read_text(encoding='utf-8')
    digits = ''.join(line.split('#', 1)[0] for line in text.splitlines())
    return bytes.fromhex(''.join(digits.split()))


@pytest.fixture(autouse=True)
def service_logs_reach_caplog(monkeypatch):
    for name in ('positioning', 'positioning.services'):
        monkeypatch.setattr(logging.getLogger(name), 'propagate', True)


@pytest.fixture
def cardioid_array():
    return ArrayConfig(element_pattern=ElementPattern.CARDIOID)


@pytest.fixture
def open_room():
    """ISTA and one RSTA 2 m apart along +x, nothing in between"""
    room = Room(10.0, 8.0, 3.0)
    return Geometry(room, {'ista': Position(2.0, 4.0, 1.0), 'rsta': Position(4.0, 4.0, 1.0)})


@pytest.fixture
def link(open_room, cardioid_array):
    return FtmLink(open_room, 'ista', 'rsta', array=cardioid_array)
