"""Machine topology probe and thread placement across groups (NUMA nodes).

Probing queries what the host exposes (sysconf cache sizes, node cpu lists, psutil core counts)
and falls back to portable defaults; it never fails. Overrides make every topology-dependent
path reproducible on any machine.
"""
from __future__ import annotations

import glob
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import psutil

from dualkoord.config import topology_overrides_from_env
from dualkoord.decorators import logger
from dualkoord.errors import ConfigError

CACHE_LINE_FALLBACK = 64
VALID_CACHE_LINES = (32, 64, 128, 256)
_NODE_GLOB = "/sys/devices/system/node/node[0-9]*"


@dataclass(frozen=True)
class Group:
    id: int
    cores: int
    cpus: Tuple[int, ...] = ()


@dataclass(frozen=True)
class SystemTopology:
    cache_line_bytes: int = CACHE_LINE_FALLBACK
    llc_bytes: Optional[int] = None
    groups: Tuple[Group, ...] = field(default_factory=lambda: (Group(0, 1),))
    data_group: Optional[int] = None

    def __post_init__(self):
        if self.cache_line_bytes not in VALID_CACHE_LINES:
            raise ConfigError(f"cache line must be one of {VALID_CACHE_LINES}, got {self.cache_line_bytes}")
        if not self.groups:
            raise ConfigError("topology needs at least one group")
        if any(g.cores < 1 for g in self.groups):
            raise ConfigError("every group needs at least one core")
        if self.data_group is not None and self.data_group not in self.group_ids:
            raise ConfigError(f"data group {self.data_group} is not one of {self.group_ids}")

    @property
    def group_ids(self) -> List[int]:
        return [g.id for g in self.groups]

    @property
    def total_cores(self) -> int:
        return sum(g.cores for g in self.groups)

    def group(self, group_id: int) -> Group:
        for g in self.groups:
            if g.id == group_id:
                return g
        raise ConfigError(f"unknown group {group_id}")

    def describe(self) -> Dict[str, Any]:
        return {
            "cache_line_bytes": self.cache_line_bytes,
            "llc_bytes": self.llc_bytes,
            "groups": ",".join(str(g.cores) for g in self.groups),
            "data_group": self.data_group,
        }


@dataclass(frozen=True)
class ThreadPlan:
    assignments: Tuple[Tuple[int, int], ...]

    @property
    def total_threads(self) -> int:
        return sum(count for _, count in self.assignments)

    @property
    def group_ids(self) -> List[int]:
        return [gid for gid, _ in self.assignments]


def _sysconf(name: str) -> Optional[int]:
    try:
        value = os.sysconf(name)
    except (AttributeError, ValueError, OSError):
        return None
    return value if value and value > 0 else None


def _parse_cpulist(text: str) -> Tuple[int, ...]:
    cpus: List[int] = []
    for part in text.strip().split(","):
        if not part:
            continue
        m = re.fullmatch(r"(\d+)(?:-(\d+))?", part.strip())
        if m is None:
            continue
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) else lo
        cpus.extend(range(lo, hi + 1))
    return tuple(cpus)


def _smt_ways() -> int:
    logical = psutil.cpu_count(logical=True) or 1
    physical = psutil.cpu_count(logical=False) or logical
    return max(1, logical // physical)


def _os_groups() -> Optional[Tuple[Group, ...]]:
    nodes = []
    for path in sorted(glob.glob(_NODE_GLOB), key=lambda p: int(re.sub(r"\D", "", os.path.basename(p)))):
        try:
            with open(os.path.join(path, "cpulist"), "r", encoding="utf-8") as f:
                cpus = _parse_cpulist(f.read())
        except OSError:
            continue
        if cpus:
            node_id = int(re.sub(r"\D", "", os.path.basename(path)))
            nodes.append((node_id, cpus))
    if not nodes:
        return None
    smt = _smt_ways()
    return tuple(Group(node_id, max(1, len(cpus) // smt), cpus) for node_id, cpus in nodes)


def _fallback_groups() -> Tuple[Group, ...]:
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or os.cpu_count() or 1
    return (Group(0, cores),)


def _groups_from_override(spec: Sequence[Any]) -> Tuple[Group, ...]:
    groups = []
    for i, item in enumerate(spec):
        if isinstance(item, (tuple, list)):
            gid, cores = int(item[0]), int(item[1])
        else:
            gid, cores = i, int(item)
        groups.append(Group(gid, cores))
    return tuple(groups)


def probe(overrides: Optional[Mapping[str, Any]] = None, *, query_os: bool = True) -> SystemTopology:
    """Return the machine topology.

    Args:
        overrides: optional mapping with keys ``cache_line``, ``llc``, ``groups`` (core counts, or
            (id, cores) pairs) and ``data_group``; these win over the environment and the OS.
        query_os: set to False to skip every OS query (fallbacks and overrides only).
    """
    merged: Dict[str, Any] = dict(topology_overrides_from_env())
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    cache_line = merged.get("cache_line")
    if cache_line is None:
        os_line = _sysconf("SC_LEVEL1_DCACHE_LINESIZE") if query_os else None
        cache_line = os_line if os_line in VALID_CACHE_LINES else CACHE_LINE_FALLBACK

    llc = merged.get("llc")
    if llc is None and query_os:
        llc = _sysconf("SC_LEVEL3_CACHE_SIZE") or _sysconf("SC_LEVEL2_CACHE_SIZE")

    if merged.get("groups"):
        groups = _groups_from_override(merged["groups"])
    else:
        groups = None
        if query_os:
            try:
                groups = _os_groups()
            except Exception as exc:
                logger.debug(f"group probe failed, using a single group: {exc}")
        if groups is None:
            groups = _fallback_groups() if query_os else (Group(0, os.cpu_count() or 1),)

    topo = SystemTopology(int(cache_line), None if llc is None else int(llc), groups, merged.get("data_group"))
    logger.debug(f"probed topology {topo.describe()}")
    return topo


def _spread(total: int, groups: Sequence[Group], cap: bool) -> List[int]:
    """Distribute `total` threads as evenly as possible, capped by each group's cores when `cap`."""
    counts = [0] * len(groups)
    remaining = total
    while remaining > 0:
        open_idx = [i for i, g in enumerate(groups) if not cap or counts[i] < g.cores]
        if not open_idx:
            break
        share, extra = divmod(remaining, len(open_idx))
        for rank, i in enumerate(open_idx):
            give = share + (1 if rank < extra else 0)
            if cap:
                give = min(give, groups[i].cores - counts[i])
            counts[i] += give
            remaining -= give
    return counts


def plan_threads(requested: int, topo: SystemTopology, oversubscribe: bool = False) -> ThreadPlan:
    """Place `requested` threads on the fewest groups that can hold them.

    A request that fits in one group stays in one group (the data group when it fits). Larger
    requests are spread evenly over the minimum number of groups, always including the data group.
    """
    if requested < 1:
        raise ConfigError(f"requested thread count must be >= 1, got {requested}")
    if requested > topo.total_cores and not oversubscribe:
        raise ConfigError(f"{requested} threads requested but only {topo.total_cores} cores available "
                          "(set oversubscribe to allow this)")

    by_size = sorted(topo.groups, key=lambda g: (-g.cores, g.id))
    preferred = [topo.group(topo.data_group)] if topo.data_group is not None else []
    ordered = preferred + [g for g in by_size if g.id != topo.data_group]

    fitting = [g for g in preferred + sorted(topo.groups, key=lambda g: g.id) if g.cores >= requested]
    if fitting:
        return ThreadPlan(((fitting[0].id, requested),))

    if requested > topo.total_cores:
        chosen = sorted(topo.groups, key=lambda g: g.id)
        counts = _spread(requested, chosen, cap=False)
    else:
        chosen = []
        for g in ordered:
            chosen.append(g)
            if sum(c.cores for c in chosen) >= requested:
                break
        chosen.sort(key=lambda g: g.id)
        counts = _spread(requested, chosen, cap=True)
    return ThreadPlan(tuple((g.id, c) for g, c in zip(chosen, counts) if c > 0))


def pin_current_thread(cpus: Sequence[int]) -> bool:
    """Best-effort affinity hint for the calling thread; returns whether it was applied."""
    if not cpus or not hasattr(os, "sched_setaffinity"):
        return False
    try:
        os.sched_setaffinity(0, set(cpus))
    except OSError as exc:
        logger.debug(f"thread pinning to {list(cpus)} failed: {exc}")
        return False
    return True


def thread_cpu_sets(thread_plan: ThreadPlan, topo: SystemTopology,
                    core_level: bool) -> Optional[List[List[int]]]:
    """CPU set per planned thread, in plan order: the thread's group, or one core when `core_level`.

    None when the topology carries no cpu ids or when a single group is used without core pinning.
    """
    groups = [topo.group(gid) for gid in thread_plan.group_ids]
    if not all(g.cpus for g in groups) or (len(topo.groups) == 1 and not core_level):
        return None
    sets: List[List[int]] = []
    for (gid, count), g in zip(thread_plan.assignments, groups):
        for t in range(count):
            sets.append([g.cpus[t % len(g.cpus)]] if core_level else list(g.cpus))
    return sets
