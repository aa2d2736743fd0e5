# for development use

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any
import logging
import time

logger = logging.getLogger(__name__)


@dataclass
class ProfileException(BaseException):
    msg: str
    profiler: Profiler

    def __str__(self):
        return "Profiler raised an exception: " + self.msg + "\nGenerator state:\n" + str(self.profiler.state)


def _fmt(val: Any, ifnone: Any = 0) -> str:
    if val is None:
        return _fmt(ifnone)
    if isinstance(val, float):
        return val.__format__(".4f")
    return str(val)


@dataclass
class State:
    sequence_durations: list[float] = field(default_factory=list)
    sequences: int = 0
    frames: int = 0
    elapsed: float = 0.0
    live_rate: float = 0.0
    average_rate: float | None = None

    @classmethod
    def new(cls):
        return cls()

    @property
    def overall_rate(self) -> float | None:
        return self.sequences / self.elapsed if self.elapsed > 0 else None

    def __str__(self):
        return (
            f"live_rate={_fmt(self.live_rate)}\naverage_rate={_fmt(self.average_rate, ifnone=0)}"
            f"\noverall_rate={_fmt(self.overall_rate, ifnone=0)}"
            f"\nsequences={self.sequences}\nframes={self.frames}\nelapsed={_fmt(self.elapsed)}"
        )


class Profiler:
    """To monitor the throughput of a generation run, in sequences per second

    The generator reports each finished sequence with `tick`; the profiler never drives the generator.
    Rates are per worker when the durations come from workers, overall_rate is wall-clock.
    """

    def __init__(self, sample_sequences: int = 10):
        self.sample_sequences = sample_sequences
        self.state = State.new()
        self._started: float | None = None

    def err(self, msg: Any):
        raise ProfileException(str(msg), self)

    def start(self):
        self._started = time.perf_counter()
        return self

    def tick(self, duration: float, frames: int = 0):
        if self._started is None:
            self.start()

        if duration <= 0:
            self.state.live_rate = 0
        else:
            self.state.live_rate = 1 / duration
            self.state.sequence_durations.append(duration)

        if len(self.state.sequence_durations) > self.sample_sequences:
            self.state.sequence_durations.pop(0)

        sum_ = sum(self.state.sequence_durations)
        if sum_ == 0:
            self.state.average_rate = None
        else:
            self.state.average_rate = 1 / (sum_ / len(self.state.sequence_durations))

        self.state.sequences += 1
        self.state.frames += frames
        self.state.elapsed = time.perf_counter() - self._started  # type: ignore[operator]
        return self

    def min_rate(self, min_rate: int | float):
        rate = self.state.live_rate
        if rate < min_rate:
            self.err(f"Sequence rate ({_fmt(rate)}/s) is lower than minimum ({_fmt(min_rate)}/s)")
        return self

    def min_average_rate(self, min_rate: int | float):
        a = self.state.average_rate
        if a is not None and a < min_rate:
            self.err(f"Sequence rate ({_fmt(a)}/s) is lower than minimum ({_fmt(min_rate)}/s)")
        return self

    def max_elapsed(self, seconds: int | float):
        if self.state.elapsed > seconds:
            self.err(f"Run took {_fmt(self.state.elapsed)}s, more than the allowed {_fmt(seconds)}s")
        return self

    def report(self, level: int = logging.INFO):
        logger.log(
            level,
            "%d sequences (%d frames) in %.2fs: %s seq/s overall, %s seq/s per worker",
            self.state.sequences,
            self.state.frames,
            self.state.elapsed,
            _fmt(self.state.overall_rate),
            _fmt(self.state.average_rate),
        )
        return self
