import time

import pytest
from hypothesis import given, settings, strategies as st

from robolab.booking import (EXAMPLE_USER, BookingError, BookingStore,
                             SlotConflict, load_or_create)


def make_store():
    store = BookingStore()
    store.add_user("alice", "wonderland")
    store.add_user("bob", "builder")
    return store


class TestUsers:
    def test_example_user_always_exists(self):
        store = BookingStore()
        assert EXAMPLE_USER in store.users
        assert store.verify(EXAMPLE_USER, "example")

    def test_example_user_cannot_be_deleted(self):
        store = BookingStore()
        with pytest.raises(BookingError):
            store.remove_user(EXAMPLE_USER)

    def test_unique_names(self):
        store = make_store()
        with pytest.raises(BookingError):
            store.add_user("alice", "again")

    def test_password_verification(self):
        store = make_store()
        assert store.verify("alice", "wonderland")
        assert not store.verify("alice", "wrong")
        assert not store.verify("nobody", "x")

    def test_name_validation(self):
        store = BookingStore()
        with pytest.raises(BookingError):
            store.add_user("../etc", "x")
        with pytest.raises(BookingError):
            store.add_user("a b", "x")

    def test_digest_never_in_operation_output(self):
        store = make_store()
        user = store.users["alice"]
        listing = repr(sorted(store.users))
        assert user.password_digest not in listing


class TestSlots:
    def test_empty_calendar_accepts_any_slot(self):
        store = make_store()
        slot = store.reserve("alice", 100.0, 200.0)
        assert slot.user == "alice"

    def test_overlap_conflicts(self):
        store = make_store()
        store.reserve("alice", 100.0, 200.0)
        with pytest.raises(SlotConflict):
            store.reserve("bob", 150.0, 250.0)
        with pytest.raises(SlotConflict):
            store.reserve("alice", 99.0, 101.0)

    def test_adjacent_slots_both_accepted(self):
        store = make_store()
        store.reserve("alice", 100.0, 200.0)
        store.reserve("bob", 200.0, 300.0)  # end1 == start2 is fine
        assert len(store.slots) == 2

    def test_validate_half_open_interval(self):
        store = make_store()
        store.reserve("alice", 1000.0, 2000.0)
        assert store.validate("alice", 1000.0) == (True, "")
        assert store.validate("alice", 1500.0) == (True, "")
        allowed, reason = store.validate("alice", 2000.0)
        assert not allowed and "slot" in reason
        assert not store.validate("alice", 999.9)[0]
        assert not store.validate("bob", 1500.0)[0]

    def test_example_user_any_time(self):
        store = make_store()
        assert store.validate(EXAMPLE_USER, 0.0)[0]
        assert store.validate(EXAMPLE_USER, time.time())[0]

    def test_bad_interval_rejected(self):
        store = make_store()
        with pytest.raises(BookingError):
            store.reserve("alice", 200.0, 100.0)


class TestPersistence:
    def test_empty_store_roundtrip(self, tmp_path):
        path = str(tmp_path / "booking.txt")
        store = BookingStore()
        store.save(path)
        again = BookingStore.load(path)
        assert again.users.keys() == store.users.keys()
        assert again.slots == store.slots

    def test_populated_roundtrip(self, tmp_path):
        path = str(tmp_path / "booking.txt")
        store = make_store()
        store.reserve("alice", 10.5, 20.25)
        store.reserve("bob", 20.25, 30.75)
        store.save(path)
        again = BookingStore.load(path)
        assert set(again.users) == set(store.users)
        for name in store.users:
            assert again.users[name] == store.users[name]
        assert sorted(again.slots, key=lambda s: s.start) == \
            sorted(store.slots, key=lambda s: s.start)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 10 ** 6), st.integers(1, 10 ** 4)),
                    max_size=10))
    def test_random_slot_roundtrip(self, tmp_path_factory, intervals):
        store = BookingStore()
        store.add_user("alice", "pw")
        cursor = 0.0
        for start, width in intervals:
            cursor += start + 1.0
            store.reserve("alice", cursor, cursor + width)
            cursor += width
        path = str(tmp_path_factory.mktemp("bk") / "booking.txt")
        store.save(path)
        assert BookingStore.load(path).slots == store.slots

    def test_truncation_always_detected(self, tmp_path):
        path = str(tmp_path / "booking.txt")
        store = make_store()
        store.reserve("alice", 100.0, 200.0)
        store.save(path)
        original = open(path, "rb").read()
        # chop at any byte short of the full file: must raise, never
        # produce a partial store
        for cut in range(0, len(original) - 1, 7):
            open(path, "wb").write(original[:cut])
            with pytest.raises(BookingError):
                BookingStore.load(path)

    def test_garbage_rejected(self, tmp_path):
        path = str(tmp_path / "booking.txt")
        path_obj = tmp_path / "booking.txt"
        path_obj.write_text("robolab-booking v1\nuser a b c\nend 1\n")
        with pytest.raises(BookingError):
            BookingStore.load(path)

    def test_load_or_create(self, tmp_path):
        path = str(tmp_path / "booking.txt")
        store = load_or_create(path)
        assert EXAMPLE_USER in store.users
        again = load_or_create(path)
        assert again.users[EXAMPLE_USER] == store.users[EXAMPLE_USER]

    def test_overlapping_slots_rejected_on_load(self, tmp_path):
        path = str(tmp_path / "booking.txt")
        store = make_store()
        store.reserve("alice", 100.0, 200.0)
        store.save(path)
        text = open(path).read()
        assert "end 4" in text
        bad = text.replace("end 4", "slot bob 150.0 250.0\nend 5")
        open(path, "w").write(bad)
        with pytest.raises(BookingError):
            BookingStore.load(path)
