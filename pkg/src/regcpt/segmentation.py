"""Bootstrap-assisted binary segmentation for multiple change points.

A FIFO queue starts from the whole sample.  Each interval that is long
enough gets the full single-change-point test on its own rows, with the
trimming fraction applied relative to the interval length and a fresh
precision fit.  A rejection records the interval-local argmax as a global
boundary and enqueues the two children.  The trace keeps one entry per
processed interval in queue order, so the whole run is reproducible from
(data, cfg, min_len) alone.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

from . import rng
from .cpt_process import CptProcess
from .data_model import Dataset
from .errors import ConfigError, RegcptError
from .testing import TestConfig, detect


@dataclass(frozen=True)
class TraceEntry:
    s: int
    e: int
    decision: str  # "reject" | "accept" | "infeasible"
    p_value: float | None
    k_hat: int | None  # absolute row index of the recorded boundary

    def to_json_dict(self) -> dict:
        return {"s": self.s, "e": self.e, "p_value": self.p_value,
                "reject": self.decision == "reject", "k_hat": self.k_hat}


@dataclass(frozen=True)
class SegmentationResult:
    change_points: tuple
    boundaries: tuple
    m_hat: int
    trace: tuple

    def validate(self) -> None:
        cps = self.change_points
        if list(cps) != sorted(set(cps)):
            raise ConfigError("change_points must be strictly increasing")
        n = self.boundaries[-1]
        if any(not (0 < k < n) for k in cps):
            raise ConfigError("change_points must lie strictly inside (0, n)")
        if self.m_hat != len(cps):
            raise ConfigError("m_hat must equal len(change_points)")
        if self.boundaries != (0,) + cps + (n,):
            raise ConfigError("boundaries must be 0, change_points, n")

    def to_json_dict(self) -> dict:
        return {
            "change_points": list(self.change_points),
            "boundaries": list(self.boundaries),
            "m_hat": self.m_hat,
            "trace": [t.to_json_dict() for t in self.trace],
        }


def default_min_len(tau0: float) -> int:
    """Shortest interval worth testing: >= 40 rows and >= 10 grid points
    per trimmed side."""
    return max(40, math.ceil(10.0 / tau0))


def segment(data: Dataset, cfg: TestConfig, min_len: int | None = None,
            workers: int = 1, capture_root_process: bool = False):
    """Recursive testing from (0, n); splits at each rejected interval.

    Returns a SegmentationResult, or (result, root process) when
    ``capture_root_process`` is set.  Detection errors abort the run,
    annotated with the offending interval.
    """
    cfg.validate()
    n = data.n
    if min_len is None:
        min_len = default_min_len(cfg.tau0)
    if min_len < 4:
        raise ConfigError(f"min_len must be >= 4, got {min_len}")
    if math.floor(min_len * cfg.tau0) < 2:
        raise ConfigError(
            f"min_len={min_len} leaves fewer than 2 trimmed rows at "
            f"tau0={cfg.tau0}; raise min_len or tau0")

    trace: list[TraceEntry] = []
    found: list[int] = []
    root_proc: CptProcess | None = None

    if n < 2 * min_len:
        trace.append(TraceEntry(s=0, e=n, decision="infeasible",
                                p_value=None, k_hat=None))
        result = SegmentationResult(change_points=(), boundaries=(0, n),
                                    m_hat=0, trace=tuple(trace))
        return (result, None) if capture_root_process else result

    # Conservative per-test level when the Bonferroni switch is on: divide
    # by the largest possible number of disjoint testable intervals.
    alpha_eff = cfg.alpha / max(1, n // min_len) if cfg.bonferroni else cfg.alpha

    queue = deque([(0, n)])
    n_tests = 0
    max_live = 1
    while queue:
        s, e = queue.popleft()
        if e - s < min_len:
            continue
        sub = Dataset(y=data.y[s:e], X=data.X[s:e])
        cfg_i = replace(cfg, alpha=alpha_eff,
                        seed=rng.child_seed(cfg.seed, rng.TAG_SEGMENT, s, e))
        try:
            out = detect(sub, cfg_i, workers=workers,
                         return_process=(s == 0 and e == n
                                         and capture_root_process))
        except RegcptError as err:
            raise type(err)(f"interval ({s}, {e}): {err}") from err
        if isinstance(out, tuple):
            res, root_proc = out
        else:
            res = out
        n_tests += 1
        if res.reject:
            b = s + res.cpt.k_hat
            found.append(b)
            trace.append(TraceEntry(s=s, e=e, decision="reject",
                                    p_value=res.p_value, k_hat=b))
            queue.append((s, b))
            queue.append((b, e))
        else:
            trace.append(TraceEntry(s=s, e=e, decision="accept",
                                    p_value=res.p_value, k_hat=None))
        max_live = max(max_live, len(queue))

    cps = tuple(sorted(found))
    assert n_tests <= 2 * len(cps) + 1
    assert max_live <= 2 * len(cps) + 1
    result = SegmentationResult(change_points=cps,
                                boundaries=(0,) + cps + (n,),
                                m_hat=len(cps), trace=tuple(trace))
    result.validate()
    return (result, root_proc) if capture_root_process else result


def refine_boundaries(result: SegmentationResult, n: int) -> list:
    """Half-open row ranges (lo, hi) for per-segment refitting."""
    result.validate()
    if result.boundaries[-1] != n:
        raise ConfigError(
            f"result covers n={result.boundaries[-1]}, asked for n={n}")
    bs = result.boundaries
    return [(bs[i], bs[i + 1]) for i in range(len(bs) - 1)]
