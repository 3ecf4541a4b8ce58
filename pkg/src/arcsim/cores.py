"""CPU-side actors: NetCore and AppCore for the accelerated machine, the
single BaselineCore that runs the whole six-stage pipeline in software,
and the client/NIC pair driving either machine.

Cores are serial: one task at a time, queued FIFO. A task's cost is
computed when it starts (cycles plus any memory latency) and its side
effects run when it completes, so command issue order is deterministic.

Parked completion polls are modeled as posted operations: the core issues
the flag command and keeps running; the accelerator pushes the answer when
data is ready, carrying everything ready at that instant (DPDK-style burst
semantics). Business logic is identical in both modes; acceleration moves
protocol work, never semantics.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from . import wirecodec as wc
from .accel import CommandType, ST_MALFORMED, ST_UNKNOWN_METHOD
from .memmodel import CPU, LOAD, BufferFull
from .workload import deterministic_bytes, splitmix64


@dataclass
class CpuRpcCostModel:
    """Software per-stage costs (CPU cycles); instruction counts derive
    from cycles through the stage CPI."""

    header_parse_base: int = 1400
    header_parse_per_byte: int = 2
    dispatch_cycles: int = 900
    deserialize_base: int = 2200
    deserialize_per_byte: int = 12
    header_create_base: int = 1300
    serialize_base: int = 1500
    serialize_per_byte: int = 8
    cpi_rpc_milli: int = 1500

    def header_parse(self, nbytes: int) -> int:
        return self.header_parse_base + self.header_parse_per_byte * nbytes

    def deserialize(self, nbytes: int) -> int:
        return self.deserialize_base + self.deserialize_per_byte * nbytes

    def serialize(self, nbytes: int) -> int:
        return self.serialize_base + self.serialize_per_byte * nbytes

    def instructions(self, cycles: int) -> int:
        return cycles * 1000 // self.cpi_rpc_milli


class BusinessLogicModel:
    """Application-side handlers: respond() computes the response message
    (pure function of the request), cost() the CPU cycles and instruction
    count it takes. Costs and results are mode-independent."""

    def __init__(self, cfg, mix):
        self.mix = mix
        self.cpi_milli = cfg.get("logic.cpi_milli")
        self._base = {}
        self._milli = {}
        self._value_cache: dict[bytes, bytes] = {}  # hot keys repeat (Zipf)
        for method in ("set", "get", "store_post", "read_post", "read_posts",
                       "compose_unique_id"):
            self._base[method] = cfg.get(f"logic.{method}_base_cycles")
            self._milli[method] = cfg.get(f"logic.{method}_milli_per_byte")

    def respond(self, request: wc.RpcMessage) -> wc.RpcMessage:
        m = request.method
        if m == "set":
            fields = {"ok": True}
        elif m == "get":
            # warm store: value content is a pure function of the key
            key = request.fields["key"]
            value = self._value_cache.get(key)
            if value is None:
                tag = splitmix64(int.from_bytes(key[:8].ljust(8, b"\0"), "big"))
                value = deterministic_bytes(tag, self.mix.value_size)
                self._value_cache[key] = value
            fields = {"value": value}
        elif m == "store_post":
            fields = {"ok": True}
        elif m == "read_post":
            tag = splitmix64(request.fields["post_id"])
            fields = {"text": deterministic_bytes(tag, self.mix.text_size,
                                                  ascii_only=True)}
        elif m == "read_posts":
            uid = request.fields["user_id"]
            fields = {"post_ids": [splitmix64(uid + i) >> 1
                                   for i in range(self.mix.list_length)]}
        elif m == "compose_unique_id":
            fields = {"id": splitmix64(request.seq_id) >> 1}
        else:  # pragma: no cover
            raise wc.UnknownMethod(m)
        return wc.RpcMessage(seq_id=request.seq_id, method=m,
                             direction=wc.DIR_RESPONSE, fields=fields)

    def cost(self, request: wc.RpcMessage,
             response: wc.RpcMessage) -> tuple[int, int]:
        """(cycles, instructions) for one invocation."""
        nbytes = payload_bytes(request) + payload_bytes(response)
        cycles = (self._base[request.method]
                  + -(-nbytes * self._milli[request.method] // 1000))
        return cycles, cycles * 1000 // self.cpi_milli


def payload_bytes(msg: wc.RpcMessage) -> int:
    """Raw value bytes of a message (model of the flattened record size)."""
    total = 0
    for value in msg.fields.values():
        if isinstance(value, (bytes, bytearray)):
            total += len(value)
        elif isinstance(value, bool):
            total += 1
        elif isinstance(value, int):
            total += 8
        elif isinstance(value, (list, tuple)):
            total += 8 * len(value)
    return total


class SerialCore:
    """FIFO one-task-at-a-time actor skeleton."""

    def __init__(self, name: str, machine):
        self.name = name
        self.m = machine
        self.queue: deque = deque()
        self.running = False

    def submit(self, task):
        self.queue.append(task)
        if not self.running:
            self._start_next()

    def _start_next(self):
        if not self.queue:
            self.running = False
            self.on_idle()
            return
        self.running = True
        task = self.queue.popleft()
        duration_ps = self.start_task(task)
        self.m.kernel.schedule(duration_ps, self.name, "done", task)

    def handle(self, kernel, kind, payload):
        if kind == "done":
            self.finish_task(payload)
            self._start_next()
        elif kind == "task":
            self.submit(payload)
        elif kind == "token":
            self.on_token(payload)
        elif kind == "fault":
            self.on_fault(payload)
        else:  # pragma: no cover
            raise RuntimeError(f"{self.name}: unknown event {kind}")

    # hooks
    def start_task(self, task) -> int:
        raise NotImplementedError

    def finish_task(self, task) -> None:
        raise NotImplementedError

    def on_idle(self) -> None:
        pass

    def on_token(self, batch) -> None:
        raise NotImplementedError(self.name)

    def on_fault(self, payload) -> None:
        raise NotImplementedError(self.name)

    def idle(self) -> bool:
        return not self.running and not self.queue

    # accounting helper
    def charge(self, cycles: int, instructions: int | None = None) -> int:
        """Record busy cycles (and instructions) for this core; returns the
        cycles' duration in picoseconds."""
        instr = (self.m.cpu_cost.instructions(cycles)
                 if instructions is None else instructions)
        self.m.stats.add_cpu(self.name, cycles, instr)
        return self.m.cpu_clock.cycles_to_time(cycles)


class NetCoreActor(SerialCore):
    """Packet I/O core: polls ingress frames, hands descriptors to the
    accelerator, and transmits finished responses."""

    def __init__(self, machine):
        super().__init__("netcore", machine)
        self.parked = False
        self.outstanding = 0

    # tasks: ("ingress", (addr, len)) | ("egress", (addr, len)) |
    #        ("touch", (vaddr, desc))
    def start_task(self, task) -> int:
        kind, data = task
        g = self.m.cfg.get
        if kind == "ingress":
            cycles = (self.m.ns_cycles(g("cpu.poll_ns"))
                      + 2 * g("cpu.uc_issue_cycles")
                      + g("cpu.netcore_ingress_cycles"))
            return self.charge(cycles)
        if kind == "egress":
            addr, length = data
            t_mem = self.m.mem.access(CPU, addr, length, LOAD)
            cycles = (self.m.ns_cycles(g("cpu.transmit_ns"))
                      + g("cpu.netcore_egress_cycles"))
            return self.charge(cycles) + t_mem
        if kind == "touch":
            self.m.mem.host_touch(data[0])
            cycles = self.m.ns_cycles(g("latency.page_walk_ns"))
            return self.charge(cycles)
        raise RuntimeError(kind)  # pragma: no cover

    def finish_task(self, task) -> None:
        kind, data = task
        if kind == "ingress":
            addr, length = data
            self.outstanding += 1
            self.m.send_command(CommandType.SEND_NET_BUF, addr)
            self.m.send_command(CommandType.SEND_NET_LEN, length)
            self._ensure_parked()
        elif kind == "egress":
            addr, length = data
            self.m.transmit_response(addr, length)
            self.outstanding -= 1
            self._ensure_parked()
        elif kind == "touch":
            _, (addr, length) = data
            self.m.send_command(CommandType.SEND_NET_BUF, addr)
            self.m.send_command(CommandType.SEND_NET_LEN, length)

    def _ensure_parked(self):
        if not self.parked and self.outstanding > 0:
            self.parked = True
            self.m.send_command(CommandType.DPDK_NET_FLAG, 0)

    def on_token(self, batch) -> None:
        self.parked = False
        for desc in batch:
            self.submit(("egress", desc))
        self._ensure_parked()

    def on_fault(self, payload) -> None:
        self.m.stats.add_cpu(self.name, 0, 0)
        self.submit(("touch", payload))


class AppCoreActor(SerialCore):
    """Business-logic core: consumes flattened request records, runs the
    service handler, and posts response records back."""

    def __init__(self, machine):
        super().__init__("appcore", machine)
        self.parked = False

    def park(self):
        if not self.parked:
            self.parked = True
            self.m.send_command(CommandType.APP_READY_FLAG, 0)

    # tasks: ("record", (addr, len)) | ("touch", (vaddr, desc))
    def start_task(self, task) -> int:
        kind, data = task
        g = self.m.cfg.get
        if kind == "record":
            addr, length = data
            t_mem = self.m.mem.access(CPU, addr, length, LOAD)
            request = self.m.record_at(addr)
            response = self.m.logic.respond(request)
            cycles, instr = self.m.logic.cost(request, response)
            overhead = g("cpu.appcore_loop_cycles") + 2 * g("cpu.uc_issue_cycles")
            self.m.stats.cpu_stage_cycles["logic"] += cycles
            dur = (self.charge(cycles, instr) + self.charge(overhead))
            out_addr, out_len, t_store = self.m.write_app_response(response)
            task_state = (addr, length, out_addr, out_len)
            self._pending = task_state
            return dur + t_mem + t_store
        if kind == "touch":
            self.m.mem.host_touch(data[0])
            return self.charge(self.m.ns_cycles(g("latency.page_walk_ns")))
        raise RuntimeError(kind)  # pragma: no cover

    def finish_task(self, task) -> None:
        kind, data = task
        if kind == "record":
            addr, length, out_addr, out_len = self._pending
            self.m.release_app_recv(addr, length)
            self.m.send_command(CommandType.SEND_APP_RESP, out_len)
            self.m.send_command(CommandType.SEND_APP_BUF, out_addr)
        elif kind == "touch":
            _, (rec_addr, rec_len) = data
            self.m.send_command(CommandType.SEND_APP_RESP, rec_len)
            self.m.send_command(CommandType.SEND_APP_BUF, rec_addr)

    def on_idle(self) -> None:
        self.park()

    def on_token(self, batch) -> None:
        self.parked = False
        for desc in batch:
            self.submit(("record", desc))

    def on_fault(self, payload) -> None:
        self.submit(("touch", payload))


class BaselineCoreActor(SerialCore):
    """CPU-only mode: one core runs poll, header parse, dispatch,
    deserialize, business logic, header create, serialize, transmit."""

    def __init__(self, machine):
        super().__init__("cpu0", machine)

    def start_task(self, task) -> int:
        addr, length = task
        m = self.m
        st = m.stats
        cost = m.cpu_cost
        g = m.cfg.get

        t_mem = m.mem.access(CPU, addr, length, LOAD)
        frame = m.frame_at(addr, length)

        cycles = m.ns_cycles(g("cpu.poll_ns")) + g("cpu.baseline_loop_cycles")
        hdr = cost.header_parse(wc.HEADER_SIZE)
        st.cpu_stage_cycles["header_parse"] += hdr
        cycles += hdr

        response_frame = None
        logic_cycles = logic_instr = 0
        try:
            method_id, seq, _, _ = wc.parse_header(frame)
            st.cpu_stage_cycles["dispatch"] += cost.dispatch_cycles
            cycles += cost.dispatch_cycles
            m.schema.method_by_id(method_id)
            body = len(frame) - wc.HEADER_SIZE
            deser = cost.deserialize(body)
            st.cpu_stage_cycles["deserialize"] += deser
            st.codec_bytes_cpu += body
            cycles += deser
            request = wc.deserialize(frame, m.schema)
        except wc.UnknownMethod:
            st.errors += 1
            response_frame = wc.build_error_frame(self._seq_of(frame),
                                                  ST_UNKNOWN_METHOD)
        except wc.CodecError:
            st.errors += 1
            response_frame = wc.build_error_frame(self._seq_of(frame),
                                                  ST_MALFORMED)

        if response_frame is None:
            response = m.logic.respond(request)
            logic_cycles, logic_instr = m.logic.cost(request, response)
            st.cpu_stage_cycles["logic"] += logic_cycles
            response_frame = wc.serialize(response, m.schema)
            hdrc = cost.header_create_base
            st.cpu_stage_cycles["header_create"] += hdrc
            resp_body = len(response_frame) - wc.HEADER_SIZE
            ser = cost.serialize(resp_body)
            st.cpu_stage_cycles["serialize"] += ser
            st.codec_bytes_cpu += resp_body
            cycles += hdrc + ser
        cycles += m.ns_cycles(g("cpu.transmit_ns"))

        out_addr, out_len, t_store = self.m.write_net_frame(response_frame)
        self._pending = (addr, length, out_addr, out_len)
        dur = self.charge(cycles) + self.charge(logic_cycles, logic_instr)
        return dur + t_mem + t_store

    def _seq_of(self, frame: bytes) -> int:
        try:
            return wc.parse_header(frame)[1]
        except wc.CodecError:
            return 0

    def finish_task(self, task) -> None:
        addr, length, out_addr, out_len = self._pending
        self.m.release_net_recv(addr, length)
        self.m.transmit_response(out_addr, out_len)


class ClientNicActor:
    """Load source plus NIC ingress: injects requests per the arrival
    schedule and DCA-writes each frame into the NetRecv ring."""

    def __init__(self, machine, schedule):
        self.m = machine
        self.schedule = schedule
        self.next_index = 0
        self.total = len(machine.trace.messages)

    def prime(self):
        k = self.m.kernel
        if self.schedule["mode"] == "closed_loop":
            window = min(self.schedule["window"], self.total)
            stagger = self.schedule["stagger_ps"]
            for slot in range(window):
                k.schedule_at(slot * stagger, "client", "arrive", slot)
            self.next_index = window
        elif self.total:
            k.schedule_at(0, "client", "arrive", 0)
            self.next_index = 1

    def handle(self, kernel, kind, payload):
        if kind == "arrive":
            self._inject(payload)
            if (self.schedule["mode"] == "fixed_rate"
                    and self.next_index < self.total):
                kernel.schedule(self.schedule["spacing_ps"], "client",
                                "arrive", self.next_index)
                self.next_index += 1
        elif kind == "completion":
            if (self.schedule["mode"] == "closed_loop"
                    and self.next_index < self.total):
                kernel.schedule(0, "client", "arrive", self.next_index)
                self.next_index += 1
        else:  # pragma: no cover
            raise RuntimeError(kind)

    def _inject(self, seq: int):
        m = self.m
        st = m.stats
        st.injected += 1
        message = m.trace.messages[seq]
        frame = wc.serialize(message, m.schema)
        try:
            addr, t_dca = m.mem.dca_inject(len(frame))
        except BufferFull:
            st.drops += 1
            m.mem.buffers["NetRecv"].drops += 1
            m.notify_completion()
            return
        m.arrival_ps[seq] = m.kernel.now
        m.put_frame(addr, frame)
        target = "netcore" if m.accelerated else "cpu0"
        task = ("ingress", (addr, len(frame))) if m.accelerated \
            else (addr, len(frame))
        m.kernel.schedule(t_dca, target, "task", task)

    def idle(self) -> bool:
        return True
