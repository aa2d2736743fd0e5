"""psh._worker

This internal submodule holds the per-process state of generation workers.
The pose database, its index and the hand model are immutable and large, so every worker
receives them once through the pool initializer (`init`) instead of with every task.

This submodule does not depend on any other pyseqhand submodules, and can be safely imported
without circular imports. The task function is handed over by psh.dataset through `init`.
However, functions in this submodule should not be called before `init`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import wraps
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable

if TYPE_CHECKING:
    from .handmodel import HandModel
    from .posedb import PoseDB, PoseIndex
    from .poseflow import FlowConfig


@dataclass(frozen=True, eq=False)
class WorkerContext:
    db: PoseDB
    index: PoseIndex
    model: HandModel
    cfg: FlowConfig
    backgrounds: tuple[Path, ...]
    output_dir: Path


# These are set by init(), in the coordinator for inline runs or in each pool process
initialized = False
context: WorkerContext = None  # type: ignore
task: Callable[[WorkerContext, int], Any] = None  # type: ignore


def init(ctx: WorkerContext, fn: Callable[[WorkerContext, int], Any]):
    global initialized, context, task
    context = ctx
    task = fn
    initialized = True


def reset():
    global initialized, context, task
    initialized = False
    context = None  # type: ignore
    task = None  # type: ignore


def wrap(f):
    @wraps(f)
    def new(*args, **kwargs):
        if not initialized:
            raise RuntimeError(f"{f.__qualname__} should only be called after psh._worker.init()")
        return f(*args, **kwargs)
    return new


@wrap
def run(index: int):
    return task(context, index)
