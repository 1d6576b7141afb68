"""Orchestration actions exchanged between the Orchestrator and Workers."""

from __future__ import annotations

from dataclasses import dataclass

from fogrune.entity import Selector

ADD_TASK = "ADD_TASK"
REMOVE_TASK = "REMOVE_TASK"
ADD_INPUT = "ADD_INPUT"
REMOVE_INPUT = "REMOVE_INPUT"
KINDS = (ADD_TASK, REMOVE_TASK, ADD_INPUT, REMOVE_INPUT)

LAUNCHING = "launching"
RUNNING = "running"
TERMINATING = "terminating"


@dataclass(frozen=True)
class InputBinding:
    """One entity stream feeding a task, subscribed at the entity's home broker."""

    input_index: int
    entity_id: str
    broker: str
    selector: Selector

    @property
    def ident(self) -> tuple[int, str]:
        return self.input_index, self.entity_id

    def sub_id(self, task_id: str) -> str:
        return f"{task_id}|{self.input_index}|{self.entity_id}"

    def to_json(self) -> dict:
        return {"input_index": self.input_index, "entity_id": self.entity_id,
                "broker": self.broker, "selector": self.selector.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "InputBinding":
        return cls(int(obj["input_index"]), obj["entity_id"], obj["broker"],
                   Selector.from_json(obj["selector"]))


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    function: str
    key: str
    operator: str
    inputs: tuple[InputBinding, ...]
    output_types: tuple[str, ...] = ()
    priority: int = 50

    def to_json(self) -> dict:
        return {"task_id": self.task_id, "function": self.function, "key": self.key,
                "operator": self.operator, "inputs": [b.to_json() for b in self.inputs],
                "output_types": list(self.output_types), "priority": self.priority}

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSpec":
        return cls(obj["task_id"], obj["function"], obj["key"], obj["operator"],
                   tuple(InputBinding.from_json(b) for b in obj["inputs"]),
                   tuple(obj.get("output_types", ())), int(obj.get("priority", 50)))


@dataclass(frozen=True)
class Action:
    kind: str
    worker_id: str
    task_id: str
    spec: TaskSpec | None = None
    binding: InputBinding | None = None
    migration_id: str | None = None

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "worker_id": self.worker_id,
            "task_id": self.task_id,
            "spec": None if self.spec is None else self.spec.to_json(),
            "binding": None if self.binding is None else self.binding.to_json(),
            "migration_id": self.migration_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Action":
        return cls(
            obj["kind"], obj["worker_id"], obj["task_id"],
            None if obj.get("spec") is None else TaskSpec.from_json(obj["spec"]),
            None if obj.get("binding") is None else InputBinding.from_json(obj["binding"]),
            obj.get("migration_id"),
        )

    def __repr__(self) -> str:
        extra = f" {self.binding.entity_id}@{self.binding.broker}" if self.binding else ""
        mig = f" mig={self.migration_id}" if self.migration_id else ""
        return f"<{self.kind} {self.task_id} on {self.worker_id}{extra}{mig}>"
