"""Attack harness: fixtures, participants over a loopback bus, scenarios and offline analysis."""
from .fixtures import FixtureTree, generate_fixtures, install_library
from .offline import RecoveredKey, RecoveredPayload, offline_decrypt, offline_decrypt_detailed
from .participant import Participant
from .platform import Platform, load_library
from .scenarios import (
    BASELINE_FAILED,
    BASELINE_OK,
    NOT_REPRODUCED,
    REPRODUCED,
    AttackReport,
    ExfiltrationSink,
    Scenario,
    ScenarioName,
    ScriptItem,
    SinkKind,
    camera_script,
    hello_script,
    make_scenario,
    run_scenario,
)
from .transport import LoopbackBus, read_capture, write_capture

__all__ = [
    "AttackReport", "BASELINE_FAILED", "BASELINE_OK", "ExfiltrationSink", "FixtureTree", "LoopbackBus",
    "NOT_REPRODUCED", "Participant", "Platform", "REPRODUCED", "RecoveredKey", "RecoveredPayload",
    "Scenario", "ScenarioName", "ScriptItem", "SinkKind", "camera_script", "generate_fixtures",
    "hello_script", "install_library", "load_library", "make_scenario", "offline_decrypt",
    "offline_decrypt_detailed", "read_capture", "run_scenario", "write_capture",
]
