"""Latency-class model of the memory system.

Tracked state, per 64-byte line, is the residency level: the accelerator's
local cache, the shared LLC, or DRAM. Coherence is abstracted: a line lives
at exactly one level, and a cross-actor access migrates it at the latency
of the level where it was found. DCA-injected packet lines are LLC-resident
until consumed (write-allocate/update), never touching DRAM.

Latency convention:
- CPU accesses resolve at llc_hit_cycles when the line is on-chip; a line
  in DRAM costs the full probe chain l1+l2+llc plus dram_ns.
- Accelerator accesses hit its local cache at accel_cache_hit_cycles
  (accelerator clock); misses fall through to the LLC, then DRAM, and
  install the line locally.
- Accelerator translation is cached in a dedicated TLB. A TLB hit is
  pipelined with the access (no added latency); a miss adds page_walk_ns;
  an unmapped address raises PageFault, driving the fault-retry protocol.
"""

from __future__ import annotations

from dataclasses import dataclass

from .simkern import ClockDomain

LINE = 64

CPU = "cpu"
ACCEL = "accel"

LOAD = "load"
STORE = "store"

# residency levels
IN_ACCEL = 0
IN_LLC = 1
IN_DRAM = 2


class PageFault(Exception):
    def __init__(self, vaddr: int):
        super().__init__(f"unmapped address {vaddr:#x}")
        self.vaddr = vaddr


class BufferFull(Exception):
    pass


@dataclass(frozen=True)
class LatencyConfig:
    """All timing parameters. Cycle-valued fields are in the clock domain
    noted; *_ns fields convert to picoseconds on use."""

    cpu_freq_hz: int = 4_000_000_000
    accel_freq_hz: int = 1_000_000_000
    l1_hit_cycles: int = 4        # cpu
    l2_hit_cycles: int = 14       # cpu
    llc_hit_cycles: int = 40      # cpu
    dram_ns: float = 90.0
    accel_cache_hit_cycles: int = 2   # accel
    uc_interconnect_ns: float = 40.0  # one-way CPU<->accelerator command hop
    tlb_hit_cycles: int = 1       # accel
    page_walk_ns: float = 60.0
    dca_injection_ns: float = 100.0   # NIC -> LLC
    mem_parallelism: int = 4      # overlapped in-flight line accesses (LSQ/ROB)

    def __post_init__(self):
        if min(self.cpu_freq_hz, self.accel_freq_hz) <= 0:
            raise ValueError("clock frequencies must be > 0")
        if not (self.llc_hit_cycles > self.l2_hit_cycles > self.l1_hit_cycles > 0):
            raise ValueError("need llc_hit > l2_hit > l1_hit > 0")
        cpu = ClockDomain("cpu", self.cpu_freq_hz)
        if self.dram_ns * 1000 <= cpu.cycles_to_time(self.llc_hit_cycles):
            raise ValueError("dram_ns must exceed LLC latency")

    @property
    def cpu_clock(self) -> ClockDomain:
        return ClockDomain("cpu", self.cpu_freq_hz)

    @property
    def accel_clock(self) -> ClockDomain:
        return ClockDomain("accel", self.accel_freq_hz)


class AccelCache:
    """Set-associative local cache of the accelerator, LRU per set."""

    def __init__(self, capacity_bytes: int = 512 * 1024, associativity: int = 8):
        if capacity_bytes % (associativity * LINE):
            raise ValueError("capacity must be sets*assoc*64")
        self.capacity_bytes = capacity_bytes
        self.associativity = associativity
        self.sets = capacity_bytes // (associativity * LINE)
        # per-set insertion-ordered dict of line -> None; front is LRU
        self._sets: list[dict[int, None]] = [dict() for _ in range(self.sets)]
        self.hits = 0
        self.misses = 0

    def _set_of(self, line: int) -> dict[int, None]:
        return self._sets[line % self.sets]

    def lookup(self, line: int) -> bool:
        s = self._set_of(line)
        if line in s:
            s.pop(line)
            s[line] = None  # refresh LRU position
            self.hits += 1
            return True
        self.misses += 1
        return False

    def install(self, line: int) -> int | None:
        """Insert a line; returns the evicted line, if any."""
        s = self._set_of(line)
        victim = None
        if line not in s and len(s) >= self.associativity:
            victim = next(iter(s))
            s.pop(victim)
        s.pop(line, None)
        s[line] = None
        return victim

    def invalidate(self, line: int) -> bool:
        return self._set_of(line).pop(line, False) is None


class TlbMmu:
    """Fully associative, LRU TLB over a software page table.

    Supports 4 KiB and 2 MiB pages; the page size is a property of the
    mapping, recorded when the page is mapped.
    """

    PAGE_SMALL = 4 * 1024
    PAGE_LARGE = 2 * 1024 * 1024

    def __init__(self, entries: int = 64):
        self.capacity = entries
        self._tlb: dict[int, None] = {}   # page base -> None, front is LRU
        self.page_table: dict[int, int] = {}   # page base -> page size
        self.hits = 0
        self.misses = 0
        self.faults = 0
        self.invalidations = 0

    def map_page(self, vaddr: int, page_size: int | None = None) -> int:
        size = page_size or self.PAGE_SMALL
        if size not in (self.PAGE_SMALL, self.PAGE_LARGE):
            raise ValueError(f"unsupported page size {size}")
        base = vaddr - (vaddr % size)
        self.page_table[base] = size
        return base

    def unmap_page(self, vaddr: int, page_size: int | None = None) -> None:
        size = page_size or self.PAGE_SMALL
        base = vaddr - (vaddr % size)
        self.page_table.pop(base, None)
        # host TLB shootdown mirrored here at zero cost
        if base in self._tlb:
            self._tlb.pop(base)
            self.invalidations += 1

    def page_base(self, vaddr: int) -> int | None:
        for size in (self.PAGE_SMALL, self.PAGE_LARGE):
            base = vaddr - (vaddr % size)
            if base in self.page_table and self.page_table[base] == size:
                return base
        return None

    def lookup(self, vaddr: int) -> tuple[bool, int]:
        """Returns (tlb_hit, page_base); raises PageFault when unmapped.
        A hit never consults the page table."""
        for size in (self.PAGE_SMALL, self.PAGE_LARGE):
            base = vaddr - (vaddr % size)
            if base in self._tlb and self.page_table.get(base) == size:
                self._tlb.pop(base)
                self._tlb[base] = None
                self.hits += 1
                return True, base
        base = self.page_base(vaddr)
        if base is None:
            self.faults += 1
            raise PageFault(vaddr)
        self.misses += 1
        if len(self._tlb) >= self.capacity:
            self._tlb.pop(next(iter(self._tlb)))
        self._tlb[base] = None
        return False, base


@dataclass
class SharedBuffer:
    """One of the four in-cache communication rings (NetRecv, NetResp,
    AppRecv, AppResp). Allocation walks the ring so consecutive payloads
    land on fresh lines, which is what makes cache capacity observable."""

    name: str
    base: int
    capacity: int = 256 * 1024
    occupancy: int = 0
    _cursor: int = 0
    drops: int = 0

    def alloc(self, nbytes: int) -> int:
        """Reserve nbytes (line-aligned); returns the virtual address."""
        aligned = -(-nbytes // LINE) * LINE
        if self.occupancy + aligned > self.capacity:
            raise BufferFull(self.name)
        if self._cursor + aligned > self.capacity:
            self._cursor = 0  # wrap; ring never straddles the end
        addr = self.base + self._cursor
        self._cursor += aligned
        self.occupancy += aligned
        return addr

    def release(self, nbytes: int) -> None:
        aligned = -(-nbytes // LINE) * LINE
        self.occupancy -= aligned
        assert self.occupancy >= 0, f"{self.name} over-released"


class MemorySystem:
    """Facade owning the residency map, accelerator cache, TLB, and the
    four shared buffers."""

    BUFFER_BASES = {
        "NetRecv": 0x1000_0000,
        "NetResp": 0x2000_0000,
        "AppRecv": 0x3000_0000,
        "AppResp": 0x4000_0000,
    }

    def __init__(self, cfg: LatencyConfig, accel_cache_bytes: int = 512 * 1024,
                 buffer_bytes: int = 256 * 1024, tlb_entries: int = 64,
                 page_size: int = TlbMmu.PAGE_SMALL, premap: bool = True):
        self.cfg = cfg
        self.cpu_clock = cfg.cpu_clock
        self.accel_clock = cfg.accel_clock
        self.cache = AccelCache(accel_cache_bytes)
        self.tlb = TlbMmu(tlb_entries)
        self.residency: dict[int, int] = {}  # line -> level; absent = DRAM
        self.buffers = {name: SharedBuffer(name, base, buffer_bytes)
                        for name, base in self.BUFFER_BASES.items()}
        self.page_size = page_size
        if premap:
            for buf in self.buffers.values():
                for off in range(0, buf.capacity, page_size):
                    self.tlb.map_page(buf.base + off, page_size)
        # event counters
        self.llc_hits = 0
        self.dram_accesses = 0
        self.dca_bytes = 0

        # precomputed latencies (ps)
        self._t_accel_hit = self.accel_clock.cycles_to_time(cfg.accel_cache_hit_cycles)
        self._t_llc = self.cpu_clock.cycles_to_time(cfg.llc_hit_cycles)
        self._t_chain = self.cpu_clock.cycles_to_time(
            cfg.l1_hit_cycles + cfg.l2_hit_cycles + cfg.llc_hit_cycles)
        self._t_dram = self.cpu_clock.ns(cfg.dram_ns)
        self._t_walk = self.cpu_clock.ns(cfg.page_walk_ns)
        self._t_dca = self.cpu_clock.ns(cfg.dca_injection_ns)

    # -- translation ------------------------------------------------------

    def translate(self, actor: str, vaddr: int) -> tuple[int, int]:
        """(paddr, latency_ps). The CPU's own MMU is out of model scope:
        CPU translation is free and never faults (the host maps on touch).
        Accelerator TLB hits are pipelined into the access; misses pay the
        page walk."""
        if actor == CPU:
            base = self.tlb.page_base(vaddr)
            if base is None:
                self.host_touch(vaddr)
            return vaddr, 0
        hit, _ = self.tlb.lookup(vaddr)
        if hit:
            return vaddr, self.accel_clock.cycles_to_time(self.cfg.tlb_hit_cycles)
        return vaddr, self._t_walk

    def host_touch(self, vaddr: int) -> None:
        """OS populates the page on CPU first touch (fault-retry protocol)."""
        self.tlb.map_page(vaddr, self.page_size)

    # -- data access ------------------------------------------------------

    def access(self, actor: str, vaddr: int, size: int, kind: str) -> int:
        """Total latency (ps) of an access, updating residency, cache and
        TLB state. Raises PageFault for an accelerator access to an
        unmapped page."""
        assert size > 0
        latency = 0
        if actor == ACCEL:
            addr = vaddr
            while addr < vaddr + size:
                hit, base = self.tlb.lookup(addr)  # raises PageFault
                if not hit:
                    latency += self._t_walk
                addr = base + self.tlb.page_table[base]
        first = vaddr // LINE
        last = (vaddr + size - 1) // LINE
        line_total = 0
        line_max = 0
        for line in range(first, last + 1):
            t = self._line_access(actor, line)
            line_total += t
            if t > line_max:
                line_max = t
        # load/store queues keep mem_parallelism line accesses in flight
        mlp = self.cfg.mem_parallelism
        return latency + max(line_max, -(-line_total // mlp))

    def _line_access(self, actor: str, line: int) -> int:
        level = self.residency.get(line, IN_DRAM)
        if actor == ACCEL:
            if self.cache.lookup(line):
                return self._t_accel_hit
            if level == IN_ACCEL:
                level = IN_LLC  # unreachable unless maps diverge; stay safe
            if level == IN_LLC:
                self.llc_hits += 1
                t = self._t_llc
            else:
                self.dram_accesses += 1
                t = self._t_llc + self._t_dram
            victim = self.cache.install(line)
            if victim is not None:
                self.residency[victim] = IN_LLC
            self.residency[line] = IN_ACCEL
            return t
        # CPU access
        if level == IN_ACCEL:
            self.cache.invalidate(line)
            self.residency[line] = IN_LLC
            self.llc_hits += 1
            return self._t_llc
        if level == IN_LLC:
            self.llc_hits += 1
            return self._t_llc
        self.dram_accesses += 1
        self.residency[line] = IN_LLC
        return self._t_chain + self._t_dram

    # -- DCA --------------------------------------------------------------

    def dca_inject(self, nbytes: int) -> tuple[int, int]:
        """NIC writes a packet into NetRecv via direct cache access.
        Returns (vaddr, latency_ps); raises BufferFull when out of space
        (the caller counts the drop)."""
        buf = self.buffers["NetRecv"]
        vaddr = buf.alloc(nbytes)  # raises BufferFull
        first = vaddr // LINE
        for line in range(first, first + -(-nbytes // LINE)):
            if self.residency.get(line) == IN_ACCEL:
                self.cache.invalidate(line)  # write-update supersedes copy
            self.residency[line] = IN_LLC
        self.dca_bytes += nbytes
        return vaddr, self._t_dca
