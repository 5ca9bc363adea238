"""User registry and time-slot booking store, persisted to one text file.

Slots are half-open [start, end) wall-clock intervals in epoch seconds
and may never overlap across users: the lab is a single exclusive
resource.  The `example` user always exists, needs no booking, and
cannot be deleted.  Password digests are salted SHA-256 and are never
returned by any operation here.
"""

from __future__ import annotations

import hashlib
import os
import re
import secrets
from dataclasses import dataclass, field

EXAMPLE_USER = "example"
EXAMPLE_PASSWORD = "example"
NAME_RE = re.compile(r"^[A-Za-z0-9_-]{1,32}$")
FILE_HEADER = "robolab-booking v1"


class BookingError(ValueError):
    pass


class SlotConflict(BookingError):
    pass


def _digest(salt: str, password: str) -> str:
    return hashlib.sha256(bytes.fromhex(salt) + password.encode("utf-8")) \
        .hexdigest()


@dataclass
class User:
    name: str
    salt: str
    password_digest: str
    workspace: str

    def check_password(self, password: str) -> bool:
        return secrets.compare_digest(self.password_digest,
                                      _digest(self.salt, password))


@dataclass(frozen=True)
class Slot:
    user: str
    start: float
    end: float

    def covers(self, now: float) -> bool:
        return self.start <= now < self.end

    def overlaps(self, start: float, end: float) -> bool:
        return self.start < end and start < self.end


@dataclass
class BookingStore:
    users: dict[str, User] = field(default_factory=dict)
    slots: list[Slot] = field(default_factory=list)

    def __post_init__(self):
        if EXAMPLE_USER not in self.users:
            self.add_user(EXAMPLE_USER, EXAMPLE_PASSWORD)

    # -- users ---------------------------------------------------------------

    def add_user(self, name: str, password: str,
                 workspace: str | None = None) -> User:
        if not NAME_RE.match(name):
            raise BookingError(
                f"user name {name!r} must match {NAME_RE.pattern}")
        if name in self.users:
            raise BookingError(f"user {name!r} already exists")
        salt = secrets.token_hex(16)
        user = User(name=name, salt=salt,
                    password_digest=_digest(salt, password),
                    workspace=workspace or name)
        self.users[name] = user
        return user

    def remove_user(self, name: str) -> None:
        if name == EXAMPLE_USER:
            raise BookingError("the example user cannot be deleted")
        if name not in self.users:
            raise BookingError(f"no such user {name!r}")
        del self.users[name]
        self.slots = [s for s in self.slots if s.user != name]

    def verify(self, name: str, password: str) -> bool:
        user = self.users.get(name)
        return user is not None and user.check_password(password)

    # -- slots ---------------------------------------------------------------

    def reserve(self, user: str, start: float, end: float) -> Slot:
        if user not in self.users:
            raise BookingError(f"no such user {user!r}")
        if not end > start:
            raise BookingError("slot end must be after its start")
        for slot in self.slots:
            if slot.overlaps(start, end):
                raise SlotConflict(
                    f"slot [{start}, {end}) overlaps {slot.user}'s "
                    f"[{slot.start}, {slot.end})")
        slot = Slot(user=user, start=float(start), end=float(end))
        self.slots.append(slot)
        self._check_invariants()
        return slot

    def validate(self, user: str, now: float) -> tuple[bool, str]:
        """May `user` run the lab at `now`?  Returns (allowed, reason)."""
        if user == EXAMPLE_USER:
            return True, ""
        if any(s.user == user and s.covers(now) for s in self.slots):
            return True, ""
        return False, "no active booking slot"

    def _check_invariants(self) -> None:
        ordered = sorted(self.slots, key=lambda s: s.start)
        for a, b in zip(ordered, ordered[1:]):
            if a.overlaps(b.start, b.end):
                raise SlotConflict(f"overlapping slots {a} and {b}")

    # -- persistence -----------------------------------------------------------

    def save(self, path: str) -> None:
        lines = [FILE_HEADER]
        for user in sorted(self.users.values(), key=lambda u: u.name):
            lines.append(f"user {user.name} {user.salt} "
                         f"{user.password_digest} {user.workspace}")
        for slot in sorted(self.slots, key=lambda s: (s.start, s.user)):
            lines.append(f"slot {slot.user} {slot.start!r} {slot.end!r}")
        lines.append(f"end {len(self.users) + len(self.slots)}")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "BookingStore":
        """Parse the store file; any corruption raises, nothing is kept."""
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != FILE_HEADER:
            raise BookingError(f"{path}: not a booking store")
        users: dict[str, User] = {}
        slots: list[Slot] = []
        closed = False
        for line in lines[1:]:
            if closed:
                raise BookingError(f"{path}: data after the end record")
            parts = line.split(" ")
            if parts[0] == "user" and len(parts) == 5:
                _, name, salt, digest, workspace = parts
                if not NAME_RE.match(name) or name in users:
                    raise BookingError(f"{path}: bad user record {name!r}")
                if not re.fullmatch(r"[0-9a-f]{32}", salt) or \
                        not re.fullmatch(r"[0-9a-f]{64}", digest):
                    raise BookingError(f"{path}: corrupt user record {name!r}")
                users[name] = User(name, salt, digest, workspace)
            elif parts[0] == "slot" and len(parts) == 4:
                try:
                    slots.append(Slot(parts[1], float(parts[2]),
                                      float(parts[3])))
                except ValueError as exc:
                    raise BookingError(f"{path}: corrupt slot record") from exc
            elif parts[0] == "end" and len(parts) == 2:
                if parts[1] != str(len(users) + len(slots)):
                    raise BookingError(f"{path}: record count mismatch "
                                       f"(truncated file?)")
                closed = True
            else:
                raise BookingError(f"{path}: unrecognized line {line!r}")
        if not closed:
            raise BookingError(f"{path}: missing end record (truncated file?)")
        store = cls(users=users, slots=slots)
        store._check_invariants()
        for slot in slots:
            if slot.user not in users:
                raise BookingError(f"{path}: slot for unknown user "
                                   f"{slot.user!r}")
        return store


def load_or_create(path: str) -> BookingStore:
    if os.path.exists(path):
        return BookingStore.load(path)
    store = BookingStore()
    store.save(path)
    return store
