"""Machine assembly: builds one simulation instance from a RunConfig and
runs it to quiescence.

Two machine shapes share all models and differ only in actors:

    arcalis:  client/NIC -> NetCore -> accelerator (Rx/Tx engines) -> AppCore
    baseline: client/NIC -> one CPU core running the whole pipeline

The data plane (actual frame and record contents) lives in a plain address
-> object map beside the timing model, so responses are real bytes and the
two modes can be diffed for semantic equivalence.
"""

from __future__ import annotations

from dataclasses import replace

from . import wirecodec as wc
from .accel import AccelActor, MemAccess, RECORD_OVERHEAD, encode_command
from .config import RunConfig
from .cores import (AppCoreActor, BaselineCoreActor, BusinessLogicModel,
                    ClientNicActor, CpuRpcCostModel, NetCoreActor,
                    payload_bytes)
from .memmodel import ACCEL, CPU, STORE, MemorySystem, PageFault
from .metrics import RunStats, StatsReport, finalize
from .simkern import SimKernel, SimulationError
from .workload import PRNG_ID, generate, offered_load, preset

MODE_ARCALIS = "arcalis"
MODE_BASELINE = "baseline"


def resolve_mix(cfg: RunConfig):
    """Preset plus any workload.* overrides (0 / negative = keep preset)."""
    mix = preset(cfg.get("run.preset"))
    over = {}
    for key, attr in (("workload.key_size", "key_size"),
                      ("workload.value_size", "value_size"),
                      ("workload.text_size", "text_size"),
                      ("workload.list_length", "list_length"),
                      ("workload.keyspace", "keyspace_n")):
        val = cfg.get(key)
        if val:
            over[attr] = val
    if cfg.get("workload.zipf_s") > 0:
        over["zipf_s"] = cfg.get("workload.zipf_s")
    set_ratio = cfg.get("workload.set_ratio")
    if set_ratio >= 0:
        if mix.service != "memcached":
            raise ValueError("set_ratio override only applies to memcached")
        over["ratios"] = {"set": set_ratio, "get": 1.0 - set_ratio}
    over["request_count"] = cfg.get("run.requests")
    over["seed"] = cfg.get("run.seed")
    return replace(mix, **over)


class Machine:
    def __init__(self, cfg: RunConfig, record_trace: bool = False):
        self.cfg = cfg
        self.mode = cfg.get("run.mode")
        if self.mode not in (MODE_ARCALIS, MODE_BASELINE):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.accelerated = self.mode == MODE_ARCALIS

        self.mix = resolve_mix(cfg)
        self.trace = generate(self.mix)
        self.schema = wc.builtin_schema(self.mix.service)
        self.schedule = offered_load(
            self.trace, mode=cfg.get("load.mode"),
            rate_rps=cfg.get("load.rate_rps"),
            window=cfg.get("load.window"),
            stagger_ns=cfg.get("load.stagger_ns"))

        self.kernel = SimKernel(trace=record_trace)
        lat = cfg.latency()
        self.cpu_clock = lat.cpu_clock
        self.accel_clock = lat.accel_clock
        self.mem = MemorySystem(
            lat,
            accel_cache_bytes=cfg.get("accel.cache_bytes"),
            buffer_bytes=cfg.get("buffers.bytes"),
            tlb_entries=cfg.get("accel.tlb_entries"),
            page_size=cfg.get("accel.page_size_bytes"),
            premap=bool(cfg.get("accel.premap")))
        self.stats = RunStats()
        self.engine_cost = cfg.engine_cost()
        self.cpu_cost = CpuRpcCostModel(
            header_parse_base=cfg.get("cpu.header_parse_base"),
            header_parse_per_byte=cfg.get("cpu.header_parse_per_byte"),
            dispatch_cycles=cfg.get("cpu.dispatch_cycles"),
            deserialize_base=cfg.get("cpu.deserialize_base"),
            deserialize_per_byte=cfg.get("cpu.deserialize_per_byte"),
            header_create_base=cfg.get("cpu.header_create_base"),
            serialize_base=cfg.get("cpu.serialize_base"),
            serialize_per_byte=cfg.get("cpu.serialize_per_byte"),
            cpi_rpc_milli=cfg.get("cpu.cpi_rpc_milli"))
        self.logic = BusinessLogicModel(cfg, self.mix)

        self._content: dict[int, object] = {}
        self.arrival_ps: dict[int, int] = {}
        self._uc_ps = self.cpu_clock.ns(lat.uc_interconnect_ns)

        self.client = ClientNicActor(self, self.schedule)
        self.kernel.register("client", self.client)
        if self.accelerated:
            self.netcore = NetCoreActor(self)
            self.appcore = AppCoreActor(self)
            self.accel = AccelActor(self, queue_depth=cfg.get("accel.queue_depth"))
            self.kernel.register("netcore", self.netcore)
            self.kernel.register("appcore", self.appcore)
            self.kernel.register("accel", self.accel)
        else:
            self.cpu0 = BaselineCoreActor(self)
            self.kernel.register("cpu0", self.cpu0)

    # -- unit helpers --------------------------------------------------------

    def ns_cycles(self, t_ns: float) -> int:
        """Nanoseconds expressed as (rounded-up) CPU cycles."""
        ps = self.cpu_clock.ns(t_ns)
        return -(-ps * self.cpu_clock.frequency_hz // 10 ** 12)

    # -- data plane ------------------------------------------------------------

    def put_frame(self, addr: int, frame: bytes) -> None:
        self._content[addr] = frame

    def frame_at(self, addr: int, length: int) -> bytes:
        return self._content[addr]

    def record_at(self, addr: int):
        return self._content[addr]

    def seq_of_frame(self, addr: int) -> int:
        try:
            return wc.parse_header(self._content[addr])[1]
        except wc.CodecError:
            return 0

    def seq_of_record(self, addr: int) -> int:
        return self._content[addr].seq_id

    def respond_frame(self, record: wc.RpcMessage) -> bytes:
        """respFunctionN: encode the application result to wire format."""
        return wc.serialize(record, self.schema)

    # -- buffer writes (timing + content) ---------------------------------------

    def write_app_record(self, request: wc.RpcMessage, body: int):
        size = RECORD_OVERHEAD + body
        return self._write("AppRecv", ACCEL, size, request)

    def write_app_response(self, response: wc.RpcMessage):
        size = RECORD_OVERHEAD + payload_bytes(response)
        return self._write("AppResp", CPU, size, response)

    def write_net_frame(self, frame: bytes, actor: str = ACCEL):
        return self._write("NetResp", actor, len(frame), frame)

    def _write(self, buffer: str, actor: str, size: int, content):
        addr = self.mem.buffers[buffer].alloc(size)
        try:
            t_store = self.mem.access(actor, addr, size, STORE)
        except PageFault:
            self.mem.buffers[buffer].release(size)  # undo on fault-retry
            raise
        self._content[addr] = content
        return addr, size, t_store

    def write_error_frame(self, seq: int, code: int):
        return self.write_net_frame(wc.build_error_frame(seq, code))

    # -- buffer releases ---------------------------------------------------------

    def release_net_recv(self, addr: int, length: int) -> None:
        self._content.pop(addr, None)
        self.mem.buffers["NetRecv"].release(length)

    def release_app_recv(self, addr: int, length: int) -> None:
        self._content.pop(addr, None)
        self.mem.buffers["AppRecv"].release(length)

    def release_app_resp(self, addr: int, length: int) -> None:
        self._content.pop(addr, None)
        self.mem.buffers["AppResp"].release(length)

    # -- command / token plumbing -------------------------------------------------

    def send_command(self, op, payload: int) -> None:
        cmd = encode_command(payload, op)
        access = MemAccess(self.accel.watch.base + 8 * int(op),
                           True, True, cmd.raw)
        self.kernel.schedule(self._uc_ps, "accel", "cmd", access)

    def send_token(self, core: str, batch: list) -> None:
        self.kernel.schedule(self._uc_ps, core, "token", batch)

    def send_fault(self, core: str, vaddr: int, desc) -> None:
        self.kernel.schedule(self._uc_ps, core, "fault", (vaddr, desc))

    # -- completion --------------------------------------------------------------

    def transmit_response(self, addr: int, length: int) -> None:
        frame = self._content.pop(addr)
        self.mem.buffers["NetResp"].release(length)
        seq = wc.parse_header(frame)[1]
        arrived = self.arrival_ps.pop(seq, None)
        if not wc.is_error_frame(frame):
            self.stats.completed += 1
            if arrived is not None:
                self.stats.latencies_ps.append(self.kernel.now - arrived)
            self.stats.responses.append((seq, frame))
        self.notify_completion()

    def abandon(self, seq: int) -> None:
        """A request that can produce no response (overflow drop): recycle
        the client slot so the closed loop keeps running."""
        self.arrival_ps.pop(seq, None)
        self.notify_completion()

    def notify_completion(self) -> None:
        self.kernel.schedule(0, "client", "completion")

    # -- run --------------------------------------------------------------------

    def run(self) -> StatsReport:
        self.client.prime()
        if self.accelerated:
            self.appcore.park()
        end = self.kernel.run_until(None)
        self._check_quiescence()
        return finalize(self.stats,
                        preset=self.cfg.get("run.preset"), mode=self.mode,
                        seed=self.cfg.get("run.seed"), prng=PRNG_ID,
                        fingerprint=self.cfg.fingerprint(),
                        sim_time_ps=end, mem=self.mem)

    def _check_quiescence(self) -> None:
        busy = []
        if self.accelerated:
            if not self.accel.idle():
                busy.append("accel")
            if not self.netcore.idle():
                busy.append("netcore")
            if not self.appcore.idle():
                busy.append("appcore")
        elif not self.cpu0.idle():
            busy.append("cpu0")
        if self.arrival_ps:
            busy.append(f"{len(self.arrival_ps)} in-flight requests")
        if busy:
            raise SimulationError(f"non-quiescent at end of run: {busy}")


def run_simulation(cfg: RunConfig, record_trace: bool = False):
    """One run; returns (StatsReport, event trace or None)."""
    machine = Machine(cfg, record_trace=record_trace)
    report = machine.run()
    return report, machine.kernel.trace


def run_pair(cfg: RunConfig):
    """Baseline and accelerated runs over the identical workload trace."""
    base_cfg = cfg.with_overrides({"run.mode": MODE_BASELINE})
    accel_cfg = cfg.with_overrides({"run.mode": MODE_ARCALIS})
    base_report, _ = run_simulation(base_cfg)
    accel_report, _ = run_simulation(accel_cfg)
    return base_report, accel_report


def trace_to_text(trace) -> str:
    """Event trace as newline-delimited ``time_ps,actor,kind`` records."""
    return "".join(f"{t},{actor},{kind}\n" for t, actor, kind in trace)
