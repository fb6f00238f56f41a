"""Skeleton recycling: pick the best skeleton version per loop, at runtime.

A lightweight loop tracker watches the main thread's commit stream for
backward taken branches (and repeated same-target calls, which behave like
loops for recursive code).  While a loop is hot, the controller cycles the
six skeleton versions, timing each over a measurement unit of at least
10,000 committed instructions, then locks in the version with the best IPC.
Chosen versions are cached in a small loop-configuration table so a loop
that comes back does not pay for re-measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

UNIT_INSTRUCTIONS = 10_000
LCT_CAPACITY = 16
NUM_VERSIONS = 6


@dataclass
class LoopEvent:
    kind: str           # "enter", "iterate", "exit"
    loop_pc: int


class LoopTracker:
    """Commit-stream loop detection; keeps a stack of active loops."""

    def __init__(self):
        self.stack: list[int] = []          # innermost last
        self.iterations: dict[int, int] = {}
        self._last_call_target: int | None = None
        self._call_streak_pc: int | None = None

    @property
    def current(self) -> int | None:
        return self.stack[-1] if self.stack else None

    def iteration_of(self, loop_pc: int) -> int:
        return self.iterations.get(loop_pc, 0)

    def observe(self, pc: int, opcode: str, taken: bool,
                target: int | None) -> list[LoopEvent]:
        events: list[LoopEvent] = []
        if opcode == "BR_COND":
            self._call_streak_pc = None
            if taken and target is not None and target <= pc:
                events.extend(self._instance(pc))
            elif not taken and pc in self.stack:
                # fall-through of a tracked loop branch ends that loop (and
                # any inner loops still on the stack above it)
                while self.stack and self.stack[-1] != pc:
                    events.append(self._pop())
                if self.stack:
                    events.append(self._pop())
        elif opcode == "CALL":
            # repeated calls to the same target look like loop iterations
            if target is not None and target == self._last_call_target:
                if self._call_streak_pc is None:
                    self._call_streak_pc = pc
                events.extend(self._instance(self._call_streak_pc))
            else:
                self._call_streak_pc = None
            self._last_call_target = target
        return events

    def _instance(self, loop_pc: int) -> list[LoopEvent]:
        events = []
        if loop_pc in self.stack:
            # an outer loop iterating means everything inside it finished
            while self.stack[-1] != loop_pc:
                events.append(self._pop())
            self.iterations[loop_pc] += 1
            events.append(LoopEvent("iterate", loop_pc))
        else:
            self.stack.append(loop_pc)
            self.iterations[loop_pc] = 1
            events.append(LoopEvent("enter", loop_pc))
        return events

    def _pop(self) -> LoopEvent:
        pc = self.stack.pop()
        self.iterations.pop(pc, None)
        return LoopEvent("exit", pc)


class LoopConfigTable:
    """loop pc -> chosen skeleton version, LRU over 16 entries."""

    def __init__(self, capacity: int = LCT_CAPACITY):
        self.capacity = capacity
        self._map: dict[int, int] = {}      # insertion order doubles as LRU
        self.evictions = 0

    def get(self, loop_pc: int) -> int | None:
        v = self._map.get(loop_pc)
        if v is not None:
            del self._map[loop_pc]
            self._map[loop_pc] = v
        return v

    def put(self, loop_pc: int, version: int) -> None:
        if loop_pc in self._map:
            del self._map[loop_pc]
        elif len(self._map) >= self.capacity:
            oldest = next(iter(self._map))
            del self._map[oldest]
            self.evictions += 1
        self._map[loop_pc] = version

    def __len__(self):
        return len(self._map)


@dataclass
class _CycleState:
    samples: dict[int, float] = field(default_factory=dict)
    measuring: int | None = None
    unit_start_instr: int = 0
    unit_start_cycle: int = 0
    chosen: int | None = None


@dataclass
class Measurement:
    loop_pc: int
    version: int
    ipc: float
    instructions: int
    cycles: int


class RecycleController:
    """Decides which skeleton version should be active.

    Modes: "off" (stay on default_version), "static" (fixed per-loop map,
    no measurement), "dynamic" (cycle-and-select).  The engine asks
    ``desired_version()`` each time the loop context changes and performs
    the actual swap (which costs a reboot).
    """

    def __init__(self, mode: str = "dynamic", default_version: int = 0,
                 static_map: dict[int, int] | None = None,
                 unit_instructions: int = UNIT_INSTRUCTIONS,
                 num_versions: int = NUM_VERSIONS):
        if mode not in ("off", "static", "dynamic"):
            raise ValueError(f"unknown recycle mode {mode!r}")
        self.mode = mode
        self.default_version = default_version
        self.static_map = dict(static_map or {})
        self.unit_instructions = unit_instructions
        self.num_versions = num_versions
        self.lct = LoopConfigTable()
        self.state: dict[int, _CycleState] = {}
        self.measurements: list[Measurement] = []
        self.swaps_requested = 0

    # -- loop lifecycle ------------------------------------------------------

    def on_enter(self, loop_pc: int, cycle: int, committed: int) -> int:
        if self.mode == "off":
            return self.default_version
        if self.mode == "static":
            return self.static_map.get(loop_pc, self.default_version)
        cached = self.lct.get(loop_pc)
        if cached is not None:
            return cached
        st = self.state.setdefault(loop_pc, _CycleState())
        if st.chosen is not None:
            return st.chosen
        if st.measuring is None:
            st.measuring = self._next_unmeasured(st)
        st.unit_start_instr = committed
        st.unit_start_cycle = cycle
        return st.measuring

    def on_progress(self, loop_pc: int, cycle: int, committed: int) -> int | None:
        """Called while a loop is active; returns a new version on unit close."""
        if self.mode != "dynamic":
            return None
        st = self.state.get(loop_pc)
        if st is None or st.measuring is None or st.chosen is not None:
            return None
        instrs = committed - st.unit_start_instr
        if instrs < self.unit_instructions:
            return None
        cycles = max(1, cycle - st.unit_start_cycle)
        ipc = instrs / cycles
        st.samples[st.measuring] = ipc
        self.measurements.append(Measurement(loop_pc, st.measuring, ipc,
                                             instrs, cycles))
        if len(st.samples) >= self.num_versions:
            # best IPC wins; ties break toward the lowest version id
            best = min(sorted(st.samples),
                       key=lambda v: (-st.samples[v], v))
            st.chosen = best
            st.measuring = None
            self.lct.put(loop_pc, best)
            self.swaps_requested += 1
            return best
        st.measuring = self._next_unmeasured(st)
        st.unit_start_instr = committed
        st.unit_start_cycle = cycle
        self.swaps_requested += 1
        return st.measuring

    def on_exit(self, loop_pc: int) -> None:
        # partial unit abandoned: samples gathered so far survive for the
        # next time the loop turns up
        st = self.state.get(loop_pc)
        if st is not None and st.chosen is None:
            st.measuring = None

    def _next_unmeasured(self, st: _CycleState) -> int:
        for v in range(self.num_versions):
            if v not in st.samples:
                return v
        return 0

    def chosen_versions(self) -> dict[int, int]:
        return {pc: st.chosen for pc, st in self.state.items()
                if st.chosen is not None}
