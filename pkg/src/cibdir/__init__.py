"""Content-indexed directory structures over simulated persistent memory."""

from .btree import BTreeIndex
from .cib import CibDir, check_invariants
from .names import Dentry, append_name, hash_name, read_name
from .pm import CrashPlan, PmRegion, WriteStats
from .trad import TradDir
from .workload import WorkloadSpec, gen_workload

__all__ = [
    "BTreeIndex",
    "CibDir",
    "CrashPlan",
    "Dentry",
    "PmRegion",
    "TradDir",
    "WorkloadSpec",
    "WriteStats",
    "append_name",
    "check_invariants",
    "gen_workload",
    "hash_name",
    "read_name",
]
