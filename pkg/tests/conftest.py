import os
import sys

import pytest

# Ensure project root is on sys.path when running tests from the tests directory
ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT_DIR not in sys.path:
    sys.path.insert(0, ROOT_DIR)

from app.feasibility import map_from_enu
from app.schemas import AbsoluteFix, Anchor, EnuOrigin, EnuPoint, FixSource, StepIncrement

DATA_DIR = os.path.join(ROOT_DIR, "data")
SCENARIO_DIR = os.path.join(ROOT_DIR, "scenarios")

ORIGIN = EnuOrigin.from_lla(60.45, 22.28)

# Same layout as data/campus_buildings.geojson, directly in ENU meters.
CAMPUS_RINGS = {
    "1001": [(0, -10), (30, -10), (30, 10), (0, 10)],
    "1002": [(-60, 3), (-5, 3), (-5, 30), (-60, 30)],
    "1003": [(-60, -30), (-5, -30), (-5, -3), (-60, -3)],
    "1004": [(40, -10), (60, -10), (60, 10), (40, 10)],
}

LAB_ANCHORS = [
    Anchor(id="A1", pos=EnuPoint(e=0.0, n=-10.0)),
    Anchor(id="A2", pos=EnuPoint(e=30.0, n=-10.0)),
    Anchor(id="A3", pos=EnuPoint(e=30.0, n=10.0)),
    Anchor(id="A4", pos=EnuPoint(e=0.0, n=10.0)),
]


def make_fix(t, e, n, sigma=1.0, source=FixSource.GNSS):
    return AbsoluteFix(t=t, pos=EnuPoint(e=e, n=n), sigma=(sigma, sigma, sigma), source=source)


def make_step(t, de, dn, psi=0.0, dpsi=0.0):
    return StepIncrement(
        t=t, delta_p=(de, dn), delta_z=0.0, delta_psi=dpsi,
        step_length=float((de * de + dn * dn) ** 0.5), psi=psi,
    )


@pytest.fixture
def square_map():
    """One forbidden 10 m square centred on (5, 5)."""
    return map_from_enu({"B": [(0, 0), (10, 0), (10, 10), (0, 10)]})


@pytest.fixture
def campus_map():
    return map_from_enu(CAMPUS_RINGS, allowed_ids=["1001"])


@pytest.fixture
def lab_anchors():
    return list(LAB_ANCHORS)


@pytest.fixture
def sqlite_sessions(tmp_path, monkeypatch):
    """Point the run registry at a throwaway SQLite file."""
    from sqlalchemy import create_engine
    from sqlalchemy.orm import sessionmaker

    from app import db
    from app.database import Base

    engine = create_engine(
        f"sqlite:///{tmp_path / 'runs.db'}", connect_args={"check_same_thread": False}
    )
    Base.metadata.create_all(bind=engine)
    Session = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    monkeypatch.setattr(db, "SessionLocal", Session)
    yield Session
    engine.dispose()
