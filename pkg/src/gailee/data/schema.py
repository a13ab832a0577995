"""Event schema: entity types, event types, roles and role constraints."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

NONE = "None"

ACE_ENTITY_TYPES = ("PER", "ORG", "GPE", "LOC", "FAC", "VEH", "WEA")

ACE_EVENT_TYPES = (
    "Be-Born", "Marry", "Divorce", "Injure", "Die", "Transport", "Transfer-Ownership",
    "Transfer-Money", "Start-Org", "Merge-Org", "Declare-Bankruptcy", "End-Org", "Attack",
    "Demonstrate", "Meet", "Phone-Write", "Start-Position", "End-Position", "Nominate", "Elect",
    "Arrest-Jail", "Release-Parole", "Trial-Hearing", "Charge-Indict", "Sue", "Convict",
    "Sentence", "Fine", "Execute", "Extradite", "Acquit", "Appeal", "Pardon",
)

ACE_ROLES = (
    "Person", "Place", "Agent", "Victim", "Instrument", "Artifact", "Vehicle", "Origin",
    "Destination", "Buyer", "Seller", "Beneficiary", "Giver", "Recipient", "Org", "Attacker",
    "Target", "Entity", "Defendant", "Prosecutor", "Adjudicator", "Plaintiff",
)

_PLACE = ("GPE", "LOC", "FAC")
_ACTOR = ("PER", "ORG", "GPE")
_JUSTICE = {"Defendant": _ACTOR, "Adjudicator": _ACTOR, "Place": _PLACE}

_ACE_CONSTRAINTS = {
    "Be-Born": {"Person": ("PER",), "Place": _PLACE},
    "Marry": {"Person": ("PER",), "Place": _PLACE},
    "Divorce": {"Person": ("PER",), "Place": _PLACE},
    "Injure": {"Agent": _ACTOR, "Victim": ("PER",), "Instrument": ("WEA", "VEH"), "Place": _PLACE},
    "Die": {"Agent": _ACTOR, "Victim": ("PER",), "Instrument": ("WEA", "VEH"), "Place": _PLACE},
    "Transport": {"Agent": _ACTOR, "Artifact": ("PER", "WEA", "VEH"), "Vehicle": ("VEH",),
                  "Origin": _PLACE, "Destination": _PLACE},
    "Transfer-Ownership": {"Buyer": _ACTOR, "Seller": _ACTOR, "Beneficiary": _ACTOR,
                           "Artifact": ("VEH", "WEA", "FAC", "ORG"), "Place": _PLACE},
    "Transfer-Money": {"Giver": _ACTOR, "Recipient": _ACTOR, "Beneficiary": _ACTOR, "Place": _PLACE},
    "Start-Org": {"Agent": _ACTOR, "Org": ("ORG",), "Place": _PLACE},
    "Merge-Org": {"Org": ("ORG",), "Place": _PLACE},
    "Declare-Bankruptcy": {"Org": _ACTOR, "Place": _PLACE},
    "End-Org": {"Org": ("ORG",), "Place": _PLACE},
    "Attack": {"Attacker": _ACTOR, "Target": ("PER", "ORG", "VEH", "FAC", "WEA", "GPE"),
               "Instrument": ("WEA", "VEH"), "Place": _PLACE},
    "Demonstrate": {"Entity": ("PER", "ORG"), "Place": _PLACE},
    "Meet": {"Entity": _ACTOR, "Place": _PLACE},
    "Phone-Write": {"Entity": _ACTOR},
    "Start-Position": {"Person": ("PER",), "Entity": ("ORG", "GPE"), "Place": _PLACE},
    "End-Position": {"Person": ("PER",), "Entity": ("ORG", "GPE"), "Place": _PLACE},
    "Nominate": {"Person": ("PER",), "Agent": _ACTOR},
    "Elect": {"Person": ("PER",), "Entity": _ACTOR, "Place": _PLACE},
    "Arrest-Jail": {"Person": ("PER",), "Agent": _ACTOR, "Place": _PLACE},
    "Release-Parole": {"Person": ("PER",), "Entity": _ACTOR, "Place": _PLACE},
    "Trial-Hearing": {**_JUSTICE, "Prosecutor": _ACTOR},
    "Charge-Indict": {**_JUSTICE, "Prosecutor": _ACTOR},
    "Sue": {**_JUSTICE, "Plaintiff": _ACTOR},
    "Convict": dict(_JUSTICE),
    "Sentence": dict(_JUSTICE),
    "Fine": {"Entity": _ACTOR, "Adjudicator": _ACTOR, "Place": _PLACE},
    "Execute": {"Person": ("PER",), "Agent": _ACTOR, "Place": _PLACE},
    "Extradite": {"Agent": _ACTOR, "Person": ("PER",), "Origin": _PLACE, "Destination": _PLACE},
    "Acquit": dict(_JUSTICE),
    "Appeal": {"Plaintiff": _ACTOR, "Adjudicator": _ACTOR, "Place": _PLACE},
    "Pardon": dict(_JUSTICE),
}


@dataclass
class EventSchema:
    """Ordered type inventories plus per-event-type role constraints.

    ``role_constraints[event_type][role]`` lists the entity types that may fill
    ``role``. An event type absent from the map is unconstrained; for a listed
    event type, unlisted roles are disallowed.
    """

    entity_types: list[str]
    event_types: list[str]
    roles: list[str]
    role_constraints: dict[str, dict[str, list[str]]] = field(default_factory=dict)

    def __post_init__(self):
        self.entity_types = list(self.entity_types)
        self.event_types = list(self.event_types)
        self.roles = list(self.roles)
        self.role_constraints = {
            ev: {role: list(types) for role, types in spec.items()} for ev, spec in self.role_constraints.items()
        }
        self.validate()

    def validate(self) -> None:
        for name, items in (("entity_types", self.entity_types), ("event_types", self.event_types),
                            ("roles", self.roles)):
            if len(set(items)) != len(items):
                raise ValueError(f"schema: duplicate entries in {name}")
        for name, items in (("event_types", self.event_types), ("roles", self.roles)):
            if NONE in items:
                raise ValueError(f"schema: {NONE!r} is reserved and cannot appear in {name}")
        for ev, spec in self.role_constraints.items():
            if ev not in self.event_types:
                raise ValueError(f"schema: constraint for undeclared event type {ev!r}")
            for role, types in spec.items():
                if role not in self.roles:
                    raise ValueError(f"schema: constraint for undeclared role {role!r} under {ev!r}")
                for t in types:
                    if t not in self.entity_types:
                        raise ValueError(f"schema: constraint {ev}/{role} names undeclared entity type {t!r}")

    def role_allowed(self, event_type: str, role: str, entity_type: str) -> bool:
        spec = self.role_constraints.get(event_type)
        if spec is None:
            return True
        return entity_type in spec.get(role, ())

    def to_dict(self) -> dict:
        return {
            "entity_types": self.entity_types,
            "event_types": self.event_types,
            "roles": self.roles,
            "role_constraints": self.role_constraints,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EventSchema":
        missing = {"entity_types", "event_types", "roles"} - set(d)
        if missing:
            raise ValueError(f"schema: missing keys {sorted(missing)}")
        return cls(d["entity_types"], d["event_types"], d["roles"], d.get("role_constraints", {}))


def default_schema() -> EventSchema:
    """ACE-style inventory: 7 entity types, 33 event types, 22 roles."""
    return EventSchema(ACE_ENTITY_TYPES, ACE_EVENT_TYPES, ACE_ROLES, _ACE_CONSTRAINTS)


def load_schema(path) -> EventSchema:
    try:
        return EventSchema.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None


def save_schema(schema: EventSchema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=1) + "\n")
