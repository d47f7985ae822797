"""Task schedules for the static, dynamic and online settings.

A schedule lists, per task, the classes that arrive with training data
(``new_seen``), the classes that arrive with attributes only
(``new_unseen``) and, in the online setting, earlier unseen classes whose
data becomes available (``converted``). Class roles at any task are derived
from the list rather than stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ScheduleError

SETTINGS = ("static", "dynamic", "online")

# num_classes, static (tasks, batch), dynamic (tasks, seen, unseen), online (tasks, seen, unseen)
PRESETS: dict[str, dict] = {
    "apy": {"classes": 32, "static": (4, 8), "dynamic": (4, 5, 3), "online": (4, 4, 4)},
    "awa1": {"classes": 50, "static": (5, 10), "dynamic": (5, 8, 2), "online": (5, 7, 3)},
    "awa2": {"classes": 50, "static": (5, 10), "dynamic": (5, 8, 2), "online": (5, 7, 3)},
    "cub": {"classes": 200, "static": (20, 10), "dynamic": (20, 7, 2), "online": (20, 6, 3)},
    "sun": {"classes": 717, "static": (15, 47), "dynamic": (15, 43, 4), "online": (15, 42, 5)},
}


@dataclass(frozen=True)
class TaskSpec:
    t: int
    new_seen: tuple[int, ...]
    new_unseen: tuple[int, ...] = ()
    converted: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "new_seen": list(self.new_seen),
            "new_unseen": list(self.new_unseen),
            "converted": list(self.converted),
        }


@dataclass
class TaskSchedule:
    setting: str
    tasks: list[TaskSpec]
    classes: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.classes:
            seen: dict[int, None] = {}
            for task in self.tasks:
                for c in task.new_seen + task.new_unseen:
                    seen[c] = None
            self.classes = list(seen)
        self.validate()

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def validate(self) -> None:
        if self.setting not in SETTINGS:
            raise ScheduleError(f"unknown setting {self.setting!r}")
        if not self.tasks:
            raise ScheduleError("schedule has no tasks")
        inventory = set(self.classes)
        if len(inventory) != len(self.classes):
            raise ScheduleError("class inventory contains duplicates")
        introduced: set[int] = set()
        unseen_so_far: set[int] = set()
        converted_so_far: set[int] = set()
        for i, task in enumerate(self.tasks, start=1):
            if task.t != i:
                raise ScheduleError(f"task {i} is labelled t={task.t}")
            groups = (set(task.new_seen), set(task.new_unseen), set(task.converted))
            if sum(map(len, groups)) != len(set().union(*groups)):
                raise ScheduleError(f"task {i}: new_seen/new_unseen/converted overlap")
            if any(len(g) != len(seq) for g, seq in zip(groups, (task.new_seen, task.new_unseen, task.converted))):
                raise ScheduleError(f"task {i}: repeated class id")
            fresh = groups[0] | groups[1]
            if fresh - inventory:
                raise ScheduleError(f"task {i}: classes {sorted(fresh - inventory)} not in inventory")
            if fresh & introduced:
                raise ScheduleError(f"task {i}: classes {sorted(fresh & introduced)} introduced twice")
            if self.setting == "static" and (task.new_unseen or task.converted):
                raise ScheduleError("static tasks only reveal seen classes; the unseen pool is implicit")
            if task.converted:
                if self.setting != "online":
                    raise ScheduleError(f"task {i}: conversions are only allowed in the online setting")
                bad = groups[2] - (unseen_so_far - converted_so_far)
                if bad:
                    raise ScheduleError(f"task {i}: {sorted(bad)} were not unseen in an earlier task")
            introduced |= fresh
            unseen_so_far |= groups[1]
            converted_so_far |= groups[2]

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.num_tasks:
            raise ScheduleError(f"task {t} outside 1..{self.num_tasks}")

    def roles(self, t: int) -> tuple[list[int], list[int]]:
        """(seen, unseen) class ids at task ``t`` (1-based), in arrival order."""
        self._check_t(t)
        seen: list[int] = []
        for task in self.tasks[:t]:
            seen.extend(task.new_seen)
            seen.extend(task.converted)
        seen_set = set(seen)
        if self.setting == "static":
            unseen = [c for c in self.classes if c not in seen_set]
        else:
            unseen = [c for task in self.tasks[:t] for c in task.new_unseen if c not in seen_set]
        return seen, unseen

    def visible(self, t: int) -> list[int]:
        """Classes whose attributes are available at task ``t``."""
        self._check_t(t)
        if self.setting == "static":
            return list(self.classes)
        return [c for task in self.tasks[:t] for c in task.new_seen + task.new_unseen]

    def trained(self, t: int) -> list[int]:
        """Classes contributing real training features at task ``t``."""
        self._check_t(t)
        task = self.tasks[t - 1]
        return list(task.new_seen + task.converted)

    def introduced(self, j: int) -> list[int]:
        """Classes that first appeared at task ``j``."""
        self._check_t(j)
        task = self.tasks[j - 1]
        return list(task.new_seen + task.new_unseen)

    def to_json(self) -> dict:
        return {
            "setting": self.setting,
            "classes": list(self.classes),
            "tasks": [task.to_json() for task in self.tasks],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSchedule":
        try:
            tasks = [
                TaskSpec(
                    int(item["t"]),
                    tuple(int(c) for c in item.get("new_seen", ())),
                    tuple(int(c) for c in item.get("new_unseen", ())),
                    tuple(int(c) for c in item.get("converted", ())),
                )
                for item in obj["tasks"]
            ]
            return cls(obj["setting"], tasks, [int(c) for c in obj.get("classes", [])])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScheduleError):
                raise
            raise ScheduleError(f"malformed schedule ({exc})") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TaskSchedule":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScheduleError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_json(obj)


def _even_sizes(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def build_schedule(
    classes: int | Sequence[int],
    setting: str,
    num_tasks: int,
    seen_per_task: int | None = None,
    unseen_per_task: int | None = None,
    unseen_fraction: float = 0.2,
) -> TaskSchedule:
    """Split a class inventory into tasks following the setting's rules.

    ``classes`` is either a count (ids ``0..n-1``) or an explicit ordered list.
    Static: the inventory is revealed in ``num_tasks`` batches (``seen_per_task``
    each if given, otherwise as even as possible). Dynamic: every task adds
    ``seen_per_task`` seen and ``unseen_per_task`` unseen classes. Online: as
    dynamic, plus from task 2 on the first still-unseen class of the previous
    task is converted to seen.
    """
    inventory = list(range(classes)) if isinstance(classes, int) else [int(c) for c in classes]
    n = len(inventory)
    if setting not in SETTINGS:
        raise ScheduleError(f"unknown setting {setting!r}; choose from {', '.join(SETTINGS)}")
    if num_tasks < 1:
        raise ScheduleError("need at least one task")

    if setting == "static":
        sizes = [seen_per_task] * num_tasks if seen_per_task else _even_sizes(n, num_tasks)
        if min(sizes) < 1:
            raise ScheduleError(f"cannot reveal {n} classes over {num_tasks} non-empty tasks")
        if sum(sizes) > n:
            raise ScheduleError(f"{num_tasks} tasks of {seen_per_task} classes exceed the {n} available")
        tasks, pos = [], 0
        for t, size in enumerate(sizes, start=1):
            tasks.append(TaskSpec(t, tuple(inventory[pos : pos + size])))
            pos += size
        return TaskSchedule(setting, tasks, inventory)

    if seen_per_task is None or unseen_per_task is None:
        per = n // num_tasks
        u = unseen_per_task if unseen_per_task is not None else max(1, round(per * unseen_fraction))
        s = seen_per_task if seen_per_task is not None else per - u
    else:
        s, u = seen_per_task, unseen_per_task
    if s < 1:
        raise ScheduleError("each task needs at least one new seen class")
    if u < 1:
        raise ScheduleError(f"the {setting} setting needs at least one new unseen class per task")
    if num_tasks * (s + u) > n:
        raise ScheduleError(f"{num_tasks} tasks of {s}+{u} classes exceed the {n} available")

    tasks, pos = [], 0
    for t in range(1, num_tasks + 1):
        new_seen = tuple(inventory[pos : pos + s])
        new_unseen = tuple(inventory[pos + s : pos + s + u])
        pos += s + u
        converted: tuple[int, ...] = ()
        if setting == "online" and t > 1:
            converted = (tasks[-1].new_unseen[0],)
        tasks.append(TaskSpec(t, new_seen, new_unseen, converted))
    return TaskSchedule(setting, tasks, inventory)


def preset_schedule(name: str, setting: str) -> TaskSchedule:
    """The task split used for one of the five benchmark datasets."""
    try:
        spec = PRESETS[name.lower()]
    except KeyError:
        raise ScheduleError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    if setting not in SETTINGS:
        raise ScheduleError(f"unknown setting {setting!r}")
    if setting == "static":
        tasks, batch = spec["static"]
        return build_schedule(spec["classes"], "static", tasks, seen_per_task=batch)
    tasks, s, u = spec[setting]
    return build_schedule(spec["classes"], setting, tasks, seen_per_task=s, unseen_per_task=u)


def split_counts(schedule: TaskSchedule) -> list[tuple[int, int, int]]:
    """Per task: (seen carried from earlier tasks, seen added this task, unseen)."""
    out = []
    prev = 0
    for t in range(1, schedule.num_tasks + 1):
        seen, unseen = schedule.roles(t)
        out.append((prev, len(seen) - prev, len(unseen)))
        prev = len(seen)
    return out
