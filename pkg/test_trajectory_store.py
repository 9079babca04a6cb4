"""
Test script for trajectory storage: memory and file backends, binary round trip
and rejection of damaged files.
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent))

from adjoint import gradient_adjoint
from benchmarks.linear import build_linear_model
from benchmarks.qoi import HalfSquaredNormQoi
from core import integrate, make_time_grid
from errors import TrajectoryFormatError, TrajectoryMismatchError
from tableaux import get_scheme
from trajectory_store import FileTrajectoryStore, TrajectoryStore, open_trajectory_store


def _run(store=None, scheme="imex3"):
    system = build_linear_model()
    tab = get_scheme(scheme)
    _, J, store = integrate(system, tab, HalfSquaredNormQoi(), make_time_grid(0.0, 0.5, 0.1), store=store)
    return system, tab, J, store


def _assert_records_equal(a, b):
    assert a.step == b.step
    assert a.t_start == b.t_start and a.dt == b.dt and a.qoi_increment == b.qoi_increment
    assert np.array_equal(a.stage_times, b.stage_times)
    for field in ("u_start", "u_end"):
        for x, y in zip(getattr(a, field), getattr(b, field)):
            assert np.array_equal(x, y)
    for field in ("stage_states", "k_implicit", "k_explicit", "predictors"):
        for stage_a, stage_b in zip(getattr(a, field), getattr(b, field)):
            for x, y in zip(stage_a, stage_b):
                assert np.array_equal(x, y)


def test_record_size():
    _, tab, _, store = _run()
    layout = store.layout
    # 4 scalars, s stage times, u_start/u_end, 3 stage fields, predictors
    assert layout.record_size == 4 + 4 + 2 * 2 + 3 * 4 * 2 + 4 * 2
    assert len(store) == 5
    assert len(layout.encode(store.get(1))) == layout.record_size


def test_round_trip_is_bit_exact():
    print("\n💾 Trajectory round trip")
    _, _, J, store = _run()
    with tempfile.TemporaryDirectory() as tmp:
        path = store.write(Path(tmp) / "run.imxtraj")
        loaded = TrajectoryStore.read(path)
    assert loaded.layout == store.layout
    assert np.array_equal(loaded.mu, store.mu)
    for x, y in zip(loaded.initial_state, store.initial_state):
        assert np.array_equal(x, y)
    assert len(loaded) == len(store)
    for n in range(1, len(store) + 1):
        _assert_records_equal(loaded.get(n), store.get(n))
    assert loaded.total_qoi == J
    print(f"   ✅ {len(loaded)} records")


def test_file_backend_matches_memory():
    system, tab, J_mem, memory = _run()
    with tempfile.TemporaryDirectory() as tmp:
        with FileTrajectoryStore(Path(tmp) / "live.imxtraj") as on_disk:
            _, _, J_file, on_disk = _run(store=on_disk)
            assert J_file == J_mem
            assert len(on_disk) == len(memory)
            for n in range(1, len(memory) + 1):
                _assert_records_equal(on_disk.get(n), memory.get(n))
            _, grad_file = gradient_adjoint(system, tab, HalfSquaredNormQoi(), on_disk)
            # the file written during the run is itself a valid trajectory file
            reread = TrajectoryStore.read(on_disk.path)
            assert len(reread) == len(memory)
    _, grad_mem = gradient_adjoint(system, tab, HalfSquaredNormQoi(), memory)
    assert np.array_equal(grad_file, grad_mem)


def test_closed_file_store_rejects_reads():
    with tempfile.TemporaryDirectory() as tmp:
        store = FileTrajectoryStore(Path(tmp) / "closed.imxtraj")
        _run(store=store)
        store.close()
        try:
            store.get(1)
        except TrajectoryFormatError as exc:
            assert "closed" in str(exc)
        else:
            raise AssertionError("reading a closed trajectory file must fail")


def test_empty_trajectory_round_trip():
    system = build_linear_model()
    _, _, store = integrate(system, get_scheme("imex2"), HalfSquaredNormQoi(), [0.0])
    with tempfile.TemporaryDirectory() as tmp:
        loaded = TrajectoryStore.read(store.write(Path(tmp) / "empty.imxtraj"))
    assert len(loaded) == 0
    assert loaded.total_qoi == 0.0


def test_damaged_files_are_rejected():
    _, _, _, store = _run()
    with tempfile.TemporaryDirectory() as tmp:
        path = store.write(Path(tmp) / "run.imxtraj")
        data = path.read_bytes()

        truncated = Path(tmp) / "truncated.imxtraj"
        truncated.write_bytes(data[:-8])
        foreign = Path(tmp) / "foreign.imxtraj"
        foreign.write_bytes(b"NOTATRAJ" + data[8:])
        stub = Path(tmp) / "stub.imxtraj"
        stub.write_bytes(data[:10])

        for bad in (truncated, foreign, stub):
            try:
                TrajectoryStore.read(bad)
            except TrajectoryFormatError as exc:
                assert isinstance(exc, ValueError)
            else:
                raise AssertionError(f"{bad.name} should be rejected")


def test_random_access_bounds():
    _, _, _, store = _run()
    for n in (0, len(store) + 1):
        try:
            store.get(n)
        except IndexError:
            pass
        else:
            raise AssertionError(f"step {n} is out of range")


def test_backend_factory():
    assert type(open_trajectory_store("memory")) is TrajectoryStore
    with tempfile.TemporaryDirectory() as tmp:
        store = open_trajectory_store(f"file:{tmp}/x.imxtraj")
        assert isinstance(store, FileTrajectoryStore)
    try:
        open_trajectory_store("disk")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown backend should be rejected")


def test_sweep_rejects_foreign_trajectory():
    system, tab, _, store = _run()
    try:
        gradient_adjoint(system.with_mu([-1.0, 0.5, 0.5, -2.0]), tab, HalfSquaredNormQoi(), store)
    except TrajectoryMismatchError:
        pass
    else:
        raise AssertionError("trajectory recorded at another mu must be rejected")
    try:
        gradient_adjoint(system, get_scheme("imex2"), HalfSquaredNormQoi(), store)
    except TrajectoryMismatchError:
        pass
    else:
        raise AssertionError("trajectory recorded with another scheme must be rejected")


if __name__ == "__main__":
    test_record_size()
    test_round_trip_is_bit_exact()
    test_file_backend_matches_memory()
    test_closed_file_store_rejects_reads()
    test_empty_trajectory_round_trip()
    test_damaged_files_are_rejected()
    test_random_access_bounds()
    test_backend_factory()
    test_sweep_rejects_foreign_trajectory()
    print("\n✅ Trajectory store tests passed")
