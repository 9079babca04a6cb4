"""
Per-step trajectory records and their memory / file storage backends.

File format (little-endian):
    magic "IMXTRAJ1"
    u32 N_t, u32 s, u32 m, u32 state_dims[m], u32 coupling_dims[m], u32 n_mu
    f8 mu[n_mu], f8 u_0 (all subsystems, in order)
    N_t records of f8, fields in StageRecord declaration order
"""
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from errors import TrajectoryFormatError

MAGIC = b"IMXTRAJ1"
_U32 = np.dtype("<u4")
_F8 = np.dtype("<f8")


@dataclass
class StageRecord:
    """
    Everything the gradient sweeps need from one forward step.

    Stage-indexed fields are nested lists indexed [stage][subsystem].
    """

    step: int
    t_start: float
    dt: float
    qoi_increment: float
    stage_times: np.ndarray
    u_start: List[np.ndarray]
    u_end: List[np.ndarray]
    stage_states: List[List[np.ndarray]]
    k_implicit: List[List[np.ndarray]]
    k_explicit: List[List[np.ndarray]]
    predictors: List[List[np.ndarray]]


@dataclass(frozen=True)
class TrajectoryLayout:
    """Dimensions shared by every record of one trajectory."""

    s: int
    state_dims: Tuple[int, ...]
    coupling_dims: Tuple[int, ...]
    n_mu: int

    @property
    def m(self) -> int:
        return len(self.state_dims)

    @property
    def total_state(self) -> int:
        return int(sum(self.state_dims))

    @property
    def total_coupling(self) -> int:
        return int(sum(self.coupling_dims))

    @property
    def record_size(self) -> int:
        """Number of doubles per record."""
        n, nc, s = self.total_state, self.total_coupling, self.s
        return 4 + s + 2 * n + 3 * s * n + s * nc

    @property
    def header_size(self) -> int:
        return len(MAGIC) + _U32.itemsize * (4 + 2 * self.m)

    def split(self, flat: np.ndarray, dims: Sequence[int]) -> List[np.ndarray]:
        offsets = np.cumsum([0, *dims])
        return [flat[offsets[i]:offsets[i + 1]].copy() for i in range(len(dims))]

    def encode(self, record: StageRecord) -> np.ndarray:
        """Flatten a record into the on-disk double layout."""
        parts = [np.array([record.step, record.t_start, record.dt, record.qoi_increment], dtype=float),
                 np.asarray(record.stage_times, dtype=float)]
        parts.extend(record.u_start)
        parts.extend(record.u_end)
        for field in (record.stage_states, record.k_implicit, record.k_explicit, record.predictors):
            for stage in field:
                parts.extend(stage)
        flat = np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])
        if flat.size != self.record_size:
            raise TrajectoryFormatError(
                f"record for step {record.step} has {flat.size} values, layout expects {self.record_size}"
            )
        return flat

    def decode(self, flat: np.ndarray) -> StageRecord:
        """Inverse of encode."""
        n, nc, s = self.total_state, self.total_coupling, self.s
        pos = 0

        def take(count: int) -> np.ndarray:
            nonlocal pos
            chunk = flat[pos:pos + count]
            pos += count
            return chunk

        step, t_start, dt, dj = take(4)
        stage_times = take(s).copy()
        u_start = self.split(take(n), self.state_dims)
        u_end = self.split(take(n), self.state_dims)
        fields = []
        for _ in range(3):
            fields.append([self.split(take(n), self.state_dims) for _ in range(s)])
        predictors = [self.split(take(nc), self.coupling_dims) for _ in range(s)]
        return StageRecord(
            step=int(step),
            t_start=float(t_start),
            dt=float(dt),
            qoi_increment=float(dj),
            stage_times=stage_times,
            u_start=u_start,
            u_end=u_end,
            stage_states=fields[0],
            k_implicit=fields[1],
            k_explicit=fields[2],
            predictors=predictors,
        )

    def header_bytes(self, n_steps: int) -> bytes:
        words = [n_steps, self.s, self.m, *self.state_dims, *self.coupling_dims, self.n_mu]
        return MAGIC + np.asarray(words, dtype=_U32).tobytes()


class TrajectoryStore:
    """In-memory trajectory: append during integrate, random access afterwards."""

    def __init__(self):
        self.layout: Optional[TrajectoryLayout] = None
        self.mu: Optional[np.ndarray] = None
        self.initial_state: Optional[List[np.ndarray]] = None
        self._records: List[StageRecord] = []

    def start(self, layout: TrajectoryLayout, mu: np.ndarray, initial_state: Sequence[np.ndarray]) -> None:
        """Reset the store for a new trajectory."""
        self.layout = layout
        self.mu = np.asarray(mu, dtype=float).copy()
        self.initial_state = [np.asarray(u, dtype=float).copy() for u in initial_state]
        self._records = []

    def append(self, record: StageRecord) -> None:
        if self.layout is None:
            raise RuntimeError("trajectory store not started")
        self._records.append(record)

    def get(self, n: int) -> StageRecord:
        """Record of step n, 1 <= n <= len(self)."""
        if not 1 <= n <= len(self):
            raise IndexError(f"step {n} out of range 1..{len(self)}")
        return self._records[n - 1]

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[StageRecord]:
        for n in range(1, len(self) + 1):
            yield self.get(n)

    @property
    def total_qoi(self) -> float:
        return float(sum(record.qoi_increment for record in self))

    def write(self, path: Path) -> Path:
        """Write the whole trajectory to a binary file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            _write_preamble(fh, self.layout, len(self), self.mu, self.initial_state)
            for record in self:
                fh.write(self.layout.encode(record).astype(_F8).tobytes())
        logger.debug(f"Wrote {len(self)} trajectory records to {path}")
        return path

    @classmethod
    def read(cls, path: Path) -> "TrajectoryStore":
        """Load a trajectory file into memory; rejects truncated or foreign files."""
        path = Path(path)
        data = path.read_bytes()
        layout, n_steps, mu, u0, offset = _parse_preamble(data, path)

        store = TrajectoryStore()
        store.start(layout, mu, u0)
        if n_steps == 0:
            return store
        body = np.frombuffer(data, dtype=_F8, offset=offset)
        for n in range(n_steps):
            chunk = body[n * layout.record_size:(n + 1) * layout.record_size].astype(float)
            store.append(layout.decode(chunk))
        return store


class FileTrajectoryStore(TrajectoryStore):
    """Trajectory kept on disk: records appended while integrating, read back by seek."""

    def __init__(self, path: Path):
        super().__init__()
        self.path = Path(path)
        self._fh: Optional[BinaryIO] = None
        self._count = 0
        self._lock = threading.Lock()

    def start(self, layout: TrajectoryLayout, mu: np.ndarray, initial_state: Sequence[np.ndarray]) -> None:
        super().start(layout, mu, initial_state)
        self.close()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w+b")
        _write_preamble(self._fh, layout, 0, self.mu, self.initial_state)
        self._fh.flush()
        self._count = 0
        logger.debug(f"Trajectory file opened at {self.path}")

    def _body_offset(self) -> int:
        return self.layout.header_size + _F8.itemsize * (self.layout.n_mu + self.layout.total_state)

    def append(self, record: StageRecord) -> None:
        if self._fh is None:
            raise RuntimeError("trajectory store not started")
        payload = self.layout.encode(record).astype(_F8).tobytes()
        with self._lock:
            self._fh.seek(0, 2)
            self._fh.write(payload)
            self._count += 1
            # patch N_t in the header
            self._fh.seek(len(MAGIC))
            self._fh.write(np.asarray([self._count], dtype=_U32).tobytes())
            self._fh.flush()

    def get(self, n: int) -> StageRecord:
        if not 1 <= n <= len(self):
            raise IndexError(f"step {n} out of range 1..{len(self)}")
        size = self.layout.record_size * _F8.itemsize
        with self._lock:
            if self._fh is None:
                raise TrajectoryFormatError(f"{self.path}: store closed")
            self._fh.seek(self._body_offset() + (n - 1) * size)
            raw = self._fh.read(size)
        if len(raw) != size:
            raise TrajectoryFormatError(f"{self.path}: record {n} truncated")
        return self.layout.decode(np.frombuffer(raw, dtype=_F8).astype(float))

    def __len__(self) -> int:
        return self._count

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "FileTrajectoryStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_trajectory_store(backend: str = "memory") -> TrajectoryStore:
    """
    Create a trajectory store from a backend string.

    Args:
        backend: "memory" or "file:<path>"

    Returns:
        TrajectoryStore: empty store, started by integrate
    """
    if backend == "memory":
        return TrajectoryStore()
    if backend.startswith("file:") and len(backend) > 5:
        return FileTrajectoryStore(Path(backend[5:]))
    raise ValueError(f"unknown trajectory backend '{backend}', expected 'memory' or 'file:<path>'")


def _write_preamble(fh: BinaryIO, layout: TrajectoryLayout, n_steps: int,
                    mu: np.ndarray, initial_state: Sequence[np.ndarray]) -> None:
    fh.write(layout.header_bytes(n_steps))
    fh.write(np.asarray(mu, dtype=_F8).tobytes())
    fh.write(np.concatenate([np.asarray(u, dtype=float) for u in initial_state]).astype(_F8).tobytes())


def _parse_preamble(data: bytes, path: Path):
    if len(data) < len(MAGIC) + 3 * _U32.itemsize or data[:len(MAGIC)] != MAGIC:
        raise TrajectoryFormatError(f"{path}: not an IMXTRAJ1 trajectory file")
    n_steps, s, m = np.frombuffer(data, dtype=_U32, count=3, offset=len(MAGIC))
    words_needed = 4 + 2 * int(m)
    if len(data) < len(MAGIC) + words_needed * _U32.itemsize:
        raise TrajectoryFormatError(f"{path}: header truncated")
    words = np.frombuffer(data, dtype=_U32, count=words_needed, offset=len(MAGIC)).astype(int)
    m = int(m)
    layout = TrajectoryLayout(
        s=int(s),
        state_dims=tuple(int(v) for v in words[3:3 + m]),
        coupling_dims=tuple(int(v) for v in words[3 + m:3 + 2 * m]),
        n_mu=int(words[3 + 2 * m]),
    )

    offset = layout.header_size
    expected = offset + _F8.itemsize * (layout.n_mu + layout.total_state + int(n_steps) * layout.record_size)
    if len(data) != expected:
        raise TrajectoryFormatError(
            f"{path}: size {len(data)} bytes does not match header ({expected} bytes for {int(n_steps)} steps)"
        )
    preamble = np.frombuffer(data, dtype=_F8, count=layout.n_mu + layout.total_state, offset=offset).astype(float)
    mu = preamble[:layout.n_mu]
    u0 = layout.split(preamble[layout.n_mu:], layout.state_dims)
    offset += _F8.itemsize * (layout.n_mu + layout.total_state)
    return layout, int(n_steps), mu, u0, offset
