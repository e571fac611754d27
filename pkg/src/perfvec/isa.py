"""Toy ISA definitions, dynamic instruction traces, and the PVTR trace file format.

A trace is stored column-wise in numpy arrays so that generation, simulation,
and feature extraction can operate on large traces without materializing
millions of Python objects.  ``InstructionRecord`` is a per-instruction view
used at API boundaries and in tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Optional

import numpy as np

PVTR_MAGIC = b"PVTR"
PVTR_VERSION = 1
PVTR_RECORD_BYTES = 40
NUM_REGS = 32

# Flag bits of the packed per-record `flags` byte.
FLAG_TAKEN = 1 << 0
FLAG_HAS_MEM = 1 << 1
FLAG_HAS_BRANCH = 1 << 2
FLAG_FAULTED = 1 << 3
FLAG_HAS_DST = 1 << 4
FLAG_SRC1_VALID = 1 << 5
FLAG_SRC2_VALID = 1 << 6

# Fixed 40-byte record layout.  The enumerated fields cover 36 bytes; the
# record is padded to 40 so arrays of records keep 8-byte alignment for the
# leading u64 fields.
RECORD_DTYPE = np.dtype(
    {
        "names": [
            "pc", "mem_addr", "branch_target",
            "op", "dst", "src1", "src2", "flags", "reserved",
        ],
        "formats": ["<u8", "<u8", "<u8", "u1", "u1", "u1", "u1", "u1", "<u4"],
        "offsets": [0, 8, 16, 24, 25, 26, 27, 28, 32],
        "itemsize": PVTR_RECORD_BYTES,
    }
)


class OpClass(IntEnum):
    """The 11 instruction classes of the toy ISA."""

    IALU = 0
    IMUL = 1
    IDIV = 2
    FADD = 3
    FMUL = 4
    FDIV = 5
    LOAD = 6
    STORE = 7
    CBRANCH = 8
    JUMP = 9
    NOP = 10


NUM_OP_CLASSES = len(OpClass)
MEMORY_OPS = frozenset({OpClass.LOAD, OpClass.STORE})
BRANCH_OPS = frozenset({OpClass.CBRANCH, OpClass.JUMP})


class TraceFormatError(Exception):
    """Raised on malformed or version-incompatible PVTR files."""


@dataclass(frozen=True)
class InstructionRecord:
    """One decoded dynamic instruction."""

    pc: int
    op: OpClass
    dst: Optional[int] = None
    src1: Optional[int] = None
    src2: Optional[int] = None
    mem_addr: Optional[int] = None
    branch_taken: Optional[bool] = None
    branch_target: Optional[int] = None
    faulted: bool = False

    def validate(self) -> None:
        if (self.mem_addr is not None) != (self.op in MEMORY_OPS):
            raise ValueError(f"mem_addr must be present iff op is LOAD/STORE (op={self.op.name})")
        if (self.branch_taken is not None) != (self.op in BRANCH_OPS):
            raise ValueError(f"branch_taken must be present iff op is CBRANCH/JUMP (op={self.op.name})")
        if self.op == OpClass.JUMP and self.branch_taken is not True:
            raise ValueError("JUMP implies branch_taken=True")
        for name in ("dst", "src1", "src2"):
            reg = getattr(self, name)
            if reg is not None and not 0 <= reg < NUM_REGS:
                raise ValueError(f"{name}={reg} out of range [0, {NUM_REGS})")


class Trace:
    """An immutable dynamic instruction trace with column-array storage."""

    __slots__ = ("workload_id", "seed", "pc", "op", "dst", "src1", "src2",
                 "mem_addr", "branch_target", "flags")

    def __init__(self, workload_id: str, seed: int, pc, op, dst, src1, src2,
                 mem_addr, branch_target, flags):
        self.workload_id = workload_id
        self.seed = seed
        self.pc = np.asarray(pc, dtype=np.uint64)
        self.op = np.asarray(op, dtype=np.uint8)
        self.dst = np.asarray(dst, dtype=np.uint8)
        self.src1 = np.asarray(src1, dtype=np.uint8)
        self.src2 = np.asarray(src2, dtype=np.uint8)
        self.mem_addr = np.asarray(mem_addr, dtype=np.uint64)
        self.branch_target = np.asarray(branch_target, dtype=np.uint64)
        self.flags = np.asarray(flags, dtype=np.uint8)
        n = len(self.pc)
        for col in (self.op, self.dst, self.src1, self.src2, self.mem_addr,
                    self.branch_target, self.flags):
            if len(col) != n:
                raise ValueError("trace columns have mismatched lengths")
        for col in self.__slots__[2:]:
            getattr(self, col).setflags(write=False)

    def __len__(self) -> int:
        return len(self.pc)

    def record(self, i: int) -> InstructionRecord:
        f = int(self.flags[i])
        op = OpClass(int(self.op[i]))
        return InstructionRecord(
            pc=int(self.pc[i]),
            op=op,
            dst=int(self.dst[i]) if f & FLAG_HAS_DST else None,
            src1=int(self.src1[i]) if f & FLAG_SRC1_VALID else None,
            src2=int(self.src2[i]) if f & FLAG_SRC2_VALID else None,
            mem_addr=int(self.mem_addr[i]) if f & FLAG_HAS_MEM else None,
            branch_taken=bool(f & FLAG_TAKEN) if f & FLAG_HAS_BRANCH else None,
            branch_target=int(self.branch_target[i]) if f & FLAG_HAS_BRANCH else None,
            faulted=bool(f & FLAG_FAULTED),
        )

    def __iter__(self) -> Iterator[InstructionRecord]:
        return (self.record(i) for i in range(len(self)))

    def to_records_array(self) -> np.ndarray:
        """Pack the trace into the 40-byte PVTR record array."""
        arr = np.zeros(len(self), dtype=RECORD_DTYPE)
        arr["pc"] = self.pc
        arr["mem_addr"] = self.mem_addr
        arr["branch_target"] = self.branch_target
        arr["op"] = self.op
        arr["dst"] = self.dst
        arr["src1"] = self.src1
        arr["src2"] = self.src2
        arr["flags"] = self.flags
        return arr

    def save(self, path) -> None:
        header = PVTR_MAGIC + struct.pack("<IQ", PVTR_VERSION, len(self))
        with open(path, "wb") as f:
            f.write(header)
            f.write(self.to_records_array().tobytes())

    @classmethod
    def load(cls, path, workload_id: str = "", seed: int = 0) -> "Trace":
        with open(path, "rb") as f:
            header = f.read(16)
            if len(header) != 16 or header[:4] != PVTR_MAGIC:
                raise TraceFormatError(f"{path}: not a PVTR file")
            version, count = struct.unpack("<IQ", header[4:])
            if version != PVTR_VERSION:
                raise TraceFormatError(f"{path}: unsupported PVTR version {version}")
            body = f.read(count * PVTR_RECORD_BYTES)
        if len(body) != count * PVTR_RECORD_BYTES:
            raise TraceFormatError(f"{path}: truncated record payload")
        arr = np.frombuffer(body, dtype=RECORD_DTYPE)
        return cls(
            workload_id=workload_id, seed=seed,
            pc=arr["pc"].copy(), op=arr["op"].copy(), dst=arr["dst"].copy(),
            src1=arr["src1"].copy(), src2=arr["src2"].copy(),
            mem_addr=arr["mem_addr"].copy(), branch_target=arr["branch_target"].copy(),
            flags=arr["flags"].copy(),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return len(self) == len(other) and all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("pc", "op", "dst", "src1", "src2", "mem_addr", "branch_target", "flags")
        )

    def __hash__(self):
        return object.__hash__(self)


class TraceBuilder:
    """Accumulates instructions and freezes them into a Trace."""

    def __init__(self):
        self._pc = []
        self._op = []
        self._dst = []
        self._src1 = []
        self._src2 = []
        self._mem = []
        self._tgt = []
        self._flags = []

    def __len__(self) -> int:
        return len(self._pc)

    def emit(self, pc: int, op: OpClass, dst: Optional[int] = None,
             src1: Optional[int] = None, src2: Optional[int] = None,
             mem_addr: Optional[int] = None, taken: Optional[bool] = None,
             target: Optional[int] = None, faulted: bool = False) -> None:
        flags = 0
        if dst is not None:
            flags |= FLAG_HAS_DST
        if src1 is not None:
            flags |= FLAG_SRC1_VALID
        if src2 is not None:
            flags |= FLAG_SRC2_VALID
        if mem_addr is not None:
            flags |= FLAG_HAS_MEM
        if taken is not None:
            flags |= FLAG_HAS_BRANCH
            if taken:
                flags |= FLAG_TAKEN
        if faulted:
            flags |= FLAG_FAULTED
        self._pc.append(pc)
        self._op.append(int(op))
        self._dst.append(dst or 0)
        self._src1.append(src1 or 0)
        self._src2.append(src2 or 0)
        self._mem.append(mem_addr or 0)
        self._tgt.append(target or 0)
        self._flags.append(flags)

    def build(self, workload_id: str, seed: int) -> Trace:
        return Trace(
            workload_id=workload_id, seed=seed,
            pc=self._pc, op=self._op, dst=self._dst, src1=self._src1,
            src2=self._src2, mem_addr=self._mem, branch_target=self._tgt,
            flags=self._flags,
        )


@dataclass
class TraceStats:
    op_counts: dict
    total: int
    unique_data_addrs: int
    branch_count: int
    taken_branches: int

    def count(self, op: OpClass) -> int:
        return self.op_counts.get(op, 0)


def trace_stats(trace: Trace) -> TraceStats:
    """Summarize a trace: per-class counts, unique data addresses, branches."""
    ops, counts = np.unique(trace.op, return_counts=True)
    op_counts = {OpClass(int(o)): int(c) for o, c in zip(ops, counts)}
    has_mem = (trace.flags & FLAG_HAS_MEM) != 0
    has_branch = (trace.flags & FLAG_HAS_BRANCH) != 0
    taken = (trace.flags & FLAG_TAKEN) != 0
    return TraceStats(
        op_counts=op_counts,
        total=len(trace),
        unique_data_addrs=int(np.unique(trace.mem_addr[has_mem]).size),
        branch_count=int(has_branch.sum()),
        taken_branches=int((has_branch & taken).sum()),
    )
