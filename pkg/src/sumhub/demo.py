"""Built-in demonstration fixture: a flight control sensor chain.

Three physical parts and one high-level function, each with Taxi and
Take-off failure modes, the effects and detection methods they map to, the
safety requirements derived from detection, and a small safety argument
citing both analyses. Loading it into an empty repository produces zero
consistency findings, which makes it the baseline for mutation tests.

Item ids follow the INES-<n> scheme; the highest is INES-2687, so the next
allocated id is INES-2688.
"""

from __future__ import annotations

from .store import EPOCH_TIMESTAMP, AddLink, ChangeSet, CreateItem, Repository

DEMO_AUTHOR = "demo"

_PARTS = [
    ("INES-2679", "FCS & pilot interface 1"),
    ("INES-2682", "Aircraft sensors 2"),
    ("INES-2685", "FCS & pilot interface 2"),
]

# (id, name, flight_phase, owner part)
_MODES = [
    ("INES-2680", "FCS & pilot interface 1 does not provide value to computer (Taxi)",
     "Taxi", "INES-2679"),
    ("INES-2681", "FCS & pilot interface 1 does not provide value to computer (Take off)",
     "TakeOff", "INES-2679"),
    ("INES-2683", "Aircraft sensors 2 do not provide values to computer (Taxi)",
     "Taxi", "INES-2682"),
    ("INES-2684", "Aircraft sensors 2 do not provide values to computer (Take off)",
     "TakeOff", "INES-2682"),
    ("INES-2686", "FCS & pilot interface 2 does not provide value to computer (Taxi)",
     "Taxi", "INES-2685"),
    ("INES-2687", "FCS & pilot interface 2 does not provide value to computer (Take off)",
     "TakeOff", "INES-2685"),
]

_TAXI_MODES = ["INES-2680", "INES-2683", "INES-2686"]
_TAKEOFF_MODES = ["INES-2681", "INES-2684", "INES-2687"]


def demo_changesets() -> list[ChangeSet]:
    """The fixture as four changesets: system model, FMEA, requirements, GSN."""
    system = ChangeSet(
        ops=(
            CreateItem("Function", {"name": "Provide pilot commands to the flight computer"},
                       "INES-2660"),
            CreateItem("Part", {"name": _PARTS[0][1]}, _PARTS[0][0]),
            CreateItem("Part", {"name": _PARTS[1][1]}, _PARTS[1][0]),
            CreateItem("Part", {"name": _PARTS[2][1]}, _PARTS[2][0]),
            AddLink("connection", "INES-2679", "INES-2685"),
            AddLink("connection", "INES-2682", "INES-2685"),
        ),
        author=DEMO_AUTHOR,
        timestamp=EPOCH_TIMESTAMP,
    )

    fmea_ops: list = [
        CreateItem("FailureEffect", {"name": "Elevator run away, airplane could crash"},
                   "INES-2401"),
        CreateItem("DetectionMethod",
                   {"name": "Compare the sensor signal 1 to the redundant sensor signal 2"},
                   "INES-2402"),
        CreateItem("DetectionMethod", {"name": "Propagate failure to cockpit"}, "INES-2403"),
        CreateItem("FhaEffect", {"name": "No impact"}, "INES-2405"),
        CreateItem("FhaEffect", {"name": "Loss of plane possible"}, "INES-2409"),
        CreateItem("FailureEffect", {"name": "No significant impact on the airplane"},
                   "INES-2656"),
    ]
    for mode_id, name, phase, _owner in _MODES:
        fmea_ops.append(CreateItem("FailureMode", {"name": name, "flight_phase": phase}, mode_id))
    for mode_id, _name, _phase, owner in _MODES:
        fmea_ops.append(AddLink("fails_as", owner, mode_id))
    fmea_ops.append(AddLink("fails_as", "INES-2660", "INES-2686"))
    fmea_ops.append(AddLink("fails_as", "INES-2660", "INES-2687"))
    for mode_id in _TAXI_MODES:
        fmea_ops.append(AddLink("leads_to", mode_id, "INES-2656"))
    for mode_id in _TAKEOFF_MODES:
        fmea_ops.append(AddLink("leads_to", mode_id, "INES-2401"))
    fmea_ops.append(AddLink("assessed_as", "INES-2656", "INES-2405"))
    fmea_ops.append(AddLink("assessed_as", "INES-2401", "INES-2409"))
    for mode_id, _name, _phase, _owner in _MODES:
        fmea_ops.append(AddLink("detected_by", mode_id, "INES-2402"))
    for mode_id in _TAKEOFF_MODES:
        fmea_ops.append(AddLink("detected_by", mode_id, "INES-2403"))
    fmea = ChangeSet(ops=tuple(fmea_ops), author=DEMO_AUTHOR, timestamp=EPOCH_TIMESTAMP)

    requirements = ChangeSet(
        ops=(
            CreateItem("Requirement",
                       {"name": "Single sensor failures shall not lead to loss of control"},
                       "INES-2400"),
            CreateItem("SafetyRequirement",
                       {"name": "Redundant sensor signals shall be compared for consistency"},
                       "INES-2410"),
            CreateItem("SafetyRequirement",
                       {"name": "Detected sensor failures shall be reported to the cockpit"},
                       "INES-2411"),
            AddLink("derives", "INES-2402", "INES-2410"),
            AddLink("derives", "INES-2403", "INES-2411"),
        ),
        author=DEMO_AUTHOR,
        timestamp=EPOCH_TIMESTAMP,
    )

    gsn = ChangeSet(
        ops=(
            CreateItem("GsnGoal", {"name": "Sensor value loss is detected and mitigated"},
                       "INES-2420"),
            CreateItem("GsnStrategy",
                       {"name": "Argumentation over all identified hazardous events"},
                       "INES-2421"),
            CreateItem("GsnGoal",
                       {"name": "Each sensor failure mode is analyzed and detectable"},
                       "INES-2422"),
            CreateItem("GsnEvidence", {"name": "FMEA of the flight control sensor chain"},
                       "INES-2423"),
            CreateItem("SafetyAnalysis",
                       {"name": "Flight control sensor FMEA", "kind": "FMEA"}, "INES-2424"),
            CreateItem("SafetyAnalysis",
                       {"name": "Flight function hazard assessment", "kind": "FHA"}, "INES-2425"),
            AddLink("supported_by", "INES-2420", "INES-2421"),
            AddLink("subgoal", "INES-2421", "INES-2422"),
            AddLink("evidenced_by", "INES-2422", "INES-2423"),
            AddLink("cites", "INES-2423", "INES-2424"),
            AddLink("addresses", "INES-2420", "INES-2411"),
            AddLink("addresses", "INES-2422", "INES-2410"),
            AddLink("analyzes", "INES-2424", "INES-2679"),
            AddLink("analyzes", "INES-2424", "INES-2682"),
            AddLink("analyzes", "INES-2424", "INES-2685"),
            AddLink("analyzes", "INES-2425", "INES-2660"),
        ),
        author=DEMO_AUTHOR,
        timestamp=EPOCH_TIMESTAMP,
    )
    return [system, fmea, requirements, gsn]


def load_demo(repo: Repository, principal: str | None = None) -> int:
    """Apply the fixture changesets; returns the resulting head revision."""
    head = repo.head
    for changeset in demo_changesets():
        head = repo.apply_changeset(principal, head, changeset).number
    return head
