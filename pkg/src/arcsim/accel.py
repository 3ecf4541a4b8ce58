"""The near-cache RPC accelerator: snooping command interface, central
dispatch, and the RxEngine/TxEngine micro-engine pair.

Command protocol: each command is one 64-bit word, upper 60 bits carrying a
buffer address or length, lower 4 bits the opcode. Commands are recognized
only for uncacheable accesses falling inside the configured watch range.
The six opcodes pair up into three conversations:

    SEND_NET_BUF + SEND_NET_LEN   describe an ingress frame -> RxEngine
    SEND_APP_RESP + SEND_APP_BUF  describe a response record -> TxEngine
    APP_READY_FLAG / DPDK_NET_FLAG  park a completion poll; answered with
        a batch of everything ready at answer time (status metadata)

Each engine runs the five-state FSM IDLE_RECV -> BUSY -> (DRAIN) -> DONE ->
IDLE_RESP/IDLE_RECV. Stores issued while BUSY are tracked in
mem_reqs_in_flight; a transition through DRAIN guarantees no consumer ever
observes output before the stores retired.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

from . import wirecodec as wc
from .memmodel import ACCEL, LOAD, BufferFull, PageFault

PAYLOAD_BITS = 60
PAYLOAD_MASK = (1 << PAYLOAD_BITS) - 1


class CommandError(Exception):
    pass


class PayloadOverflow(CommandError):
    pass


class UnknownOpcode(CommandError):
    pass


class EngineBusyOverflow(CommandError):
    pass


class IllegalTransition(Exception):
    """FSM edge outside the legal set; a model bug, never a workload issue."""


class CommandType(IntEnum):
    SEND_NET_BUF = 1
    SEND_NET_LEN = 2
    APP_READY_FLAG = 3
    SEND_APP_RESP = 4
    SEND_APP_BUF = 5
    DPDK_NET_FLAG = 6


@dataclass(frozen=True)
class Command:
    raw: int

    @property
    def payload(self) -> int:
        return self.raw >> 4

    @property
    def opcode(self) -> int:
        return self.raw & 0xF


def encode_command(payload: int, op: CommandType) -> Command:
    if not 0 <= payload <= PAYLOAD_MASK:
        raise PayloadOverflow(f"payload {payload:#x} exceeds {PAYLOAD_BITS} bits")
    return Command((payload << 4) | int(op))


def decode_command(raw: int) -> tuple[int, CommandType]:
    op = raw & 0xF
    try:
        return raw >> 4, CommandType(op)
    except ValueError as exc:
        raise UnknownOpcode(f"opcode {op}") from exc


@dataclass(frozen=True)
class WatchRange:
    """Physical window the snooping command interface monitors; pinned so
    the OS cannot remap it underneath the accelerator."""

    base: int
    length: int
    pinned: bool = True

    def contains(self, paddr: int) -> bool:
        return self.base <= paddr < self.base + self.length


class MemAccess(NamedTuple):
    """Descriptor of a CPU memory operation as seen by the snooper."""

    paddr: int
    uncacheable: bool
    is_store: bool
    value: int = 0


# engine FSM -----------------------------------------------------------------

IDLE_RECV = "IDLE_RECV"
BUSY = "BUSY"
DRAIN = "DRAIN"
DONE = "DONE"
IDLE_RESP = "IDLE_RESP"

VALID_REQUEST = "valid_request"
WORK_DONE = "work_done"
MEM_DRAINED = "mem_drained"
CLEANUP_DONE = "cleanup_done"
MORE_WORK = "more_work"
NO_WORK = "no_work"

TRIGGERS = (VALID_REQUEST, WORK_DONE, MEM_DRAINED, CLEANUP_DONE,
            MORE_WORK, NO_WORK)

# (state, trigger) -> next state; WORK_DONE resolves on the in-flight count
_EDGES = {
    (IDLE_RECV, VALID_REQUEST): BUSY,
    (IDLE_RESP, VALID_REQUEST): BUSY,
    (DRAIN, MEM_DRAINED): DONE,
    (DONE, MORE_WORK): IDLE_RESP,
    (DONE, NO_WORK): IDLE_RECV,
}

LEGAL_EDGES = frozenset(
    [(IDLE_RECV, BUSY), (IDLE_RESP, BUSY), (BUSY, DRAIN), (BUSY, DONE),
     (DRAIN, DONE), (DONE, IDLE_RESP), (DONE, IDLE_RECV)])


class EngineFsm:
    """Five-state control FSM of one micro-engine.

    Transitions outside the legal edge set raise IllegalTransition. Every
    taken edge is appended to ``transition_log`` so a run can be audited
    against the edge set afterwards.
    """

    def __init__(self, name: str):
        self.name = name
        self.state = IDLE_RECV
        self.mem_reqs_in_flight = 0
        self.transition_log: list[tuple[str, str]] = []

    def step(self, trigger: str) -> str:
        if trigger not in TRIGGERS:
            raise IllegalTransition(f"{self.name}: unknown trigger {trigger!r}")
        if trigger == WORK_DONE:
            if self.state != BUSY:
                raise IllegalTransition(f"{self.name}: {trigger} in {self.state}")
            nxt = DRAIN if self.mem_reqs_in_flight > 0 else DONE
        else:
            nxt = _EDGES.get((self.state, trigger))
            if nxt is None:
                raise IllegalTransition(f"{self.name}: {trigger} in {self.state}")
        self.transition_log.append((self.state, nxt))
        self.state = nxt
        return nxt


@dataclass
class EngineCostModel:
    """Per-stage engine cycle costs (accelerator clock). Per-byte rates are
    kept in millicycles so cycle math stays exact integer arithmetic."""

    header_parse_base: int = 8
    header_parse_milli_per_byte: int = 125   # one cycle per 8 bytes
    dispatch_cycles: int = 4
    deserialize_base: int = 60
    deserialize_milli_per_byte: int = 300
    header_create_base: int = 24
    serialize_base: int = 0
    serialize_milli_per_byte: int = 150

    def header_parse(self, header_bytes: int) -> int:
        return self.header_parse_base + _milli(header_bytes,
                                               self.header_parse_milli_per_byte)

    def deserialize(self, body_bytes: int) -> int:
        return self.deserialize_base + _milli(body_bytes,
                                              self.deserialize_milli_per_byte)

    def header_create(self) -> int:
        return self.header_create_base

    def serialize(self, body_bytes: int) -> int:
        return self.serialize_base + _milli(body_bytes,
                                            self.serialize_milli_per_byte)


def _milli(n: int, rate_milli: int) -> int:
    return -(-n * rate_milli // 1000)


# status codes carried in error frames / fault answers
ST_UNKNOWN_METHOD = 1
ST_MALFORMED = 2
ST_REJECTED = 3
ST_FAULT = 4

RECORD_OVERHEAD = 16  # flattened-record envelope bytes


class AccelActor:
    """Event-loop actor for the whole accelerator (control block plus both
    engines). Owns pairing state, pending queues, parked polls, and drives
    memmodel for every engine memory operation."""

    def __init__(self, machine, queue_depth: int = 16):
        self.m = machine
        self.cost = machine.engine_cost
        self.queue_depth = queue_depth
        self.watch = WatchRange(base=0x7FFF_0000, length=4096)
        self.rx = EngineFsm("rx")
        self.tx = EngineFsm("tx")
        self.rx_queue: deque = deque()
        self.tx_queue: deque = deque()
        # pairing accumulators: addr-half and len-half FIFOs per direction
        self._net_bufs: deque[int] = deque()
        self._net_lens: deque[int] = deque()
        self._app_bufs: deque[int] = deque()
        self._app_lens: deque[int] = deque()
        self.app_ready: deque = deque()   # records awaiting AppCore
        self.net_ready: deque = deque()   # frames awaiting NetCore
        self.app_parked = False
        self.net_parked = False
        self._rx_current = None
        self._tx_current = None
        self._rx_busy_since = 0
        self._tx_busy_since = 0

    # -- snooping command interface ---------------------------------------

    def snoop(self, access: MemAccess) -> Command | None:
        """Filter one memory operation; decode iff UC and inside the watch
        range. Unknown opcodes are counted and rejected; valid commands
        are returned for dispatch."""
        if not access.uncacheable or not self.watch.contains(access.paddr):
            return None
        st = self.m.stats
        st.uc_commands += 1
        try:
            decode_command(access.value)
        except UnknownOpcode:
            st.unknown_opcodes += 1
            raise
        return Command(access.value)

    # -- event entry points -------------------------------------------------

    def handle(self, kernel, kind, payload):
        if kind == "cmd":
            # fast-path snoop: payload is a MemAccess from send_command
            if not payload.uncacheable or not self.watch.contains(payload.paddr):
                return
            self.m.stats.uc_commands += 1
            raw = payload.value
            if not 1 <= raw & 0xF <= 6:
                self.m.stats.unknown_opcodes += 1
                return
            self.dispatch(Command(raw))
        elif kind == "rx_work_done":
            self._rx_work_done()
        elif kind == "rx_stores_done":
            self._rx_stores_done()
        elif kind == "tx_work_done":
            self._tx_work_done()
        elif kind == "tx_stores_done":
            self._tx_stores_done()
        else:  # pragma: no cover
            raise RuntimeError(f"accel: unknown event {kind}")

    # -- central dispatch ----------------------------------------------------

    def dispatch(self, cmd: Command) -> None:
        """Central control FSM: route a decoded command, activating an
        engine once a descriptor pair is complete."""
        op = cmd.raw & 0xF
        if op == 1:      # SEND_NET_BUF
            self._net_bufs.append(cmd.raw >> 4)
            self._pair_rx()
        elif op == 2:    # SEND_NET_LEN
            self._net_lens.append(cmd.raw >> 4)
            self._pair_rx()
        elif op == 5:    # SEND_APP_BUF
            self._app_bufs.append(cmd.raw >> 4)
            self._pair_tx()
        elif op == 4:    # SEND_APP_RESP
            self._app_lens.append(cmd.raw >> 4)
            self._pair_tx()
        elif op == 3:    # APP_READY_FLAG
            if self.app_ready:
                self._answer_app()
            else:
                self.app_parked = True
        elif op == 6:    # DPDK_NET_FLAG
            if self.net_ready:
                self._answer_net()
            else:
                self.net_parked = True
        else:
            raise UnknownOpcode(f"opcode {op}")

    def _pair_rx(self):
        if self._net_bufs and self._net_lens:
            addr, length = self._net_bufs.popleft(), self._net_lens.popleft()
            if len(self.rx_queue) >= self.queue_depth:
                self._reject_rx(addr, length)
                return
            self.rx_queue.append((addr, length))
            if self.rx.state == IDLE_RECV and self._rx_current is None:
                self._rx_start()

    def _pair_tx(self):
        if self._app_bufs and self._app_lens:
            addr, length = self._app_bufs.popleft(), self._app_lens.popleft()
            if len(self.tx_queue) >= self.queue_depth:
                self._reject_tx(addr, length)
                return
            self.tx_queue.append((addr, length))
            if self.tx.state == IDLE_RECV and self._tx_current is None:
                self._tx_start()

    def _reject_rx(self, addr: int, length: int):
        """Pending queue full: refuse the descriptor with an error status;
        the request surfaces to the network as an error frame."""
        st = self.m.stats
        st.rejected_commands += 1
        seq = self.m.seq_of_frame(addr)
        self.m.release_net_recv(addr, length)
        self._error_out(seq, ST_REJECTED)

    def _reject_tx(self, addr: int, length: int):
        st = self.m.stats
        st.rejected_commands += 1
        seq = self.m.seq_of_record(addr)
        self.m.release_app_resp(addr, length)
        self._error_out(seq, ST_REJECTED)

    def _error_out(self, seq: int, code: int):
        """Queue an error status frame for transmission; if even the status
        frame cannot be placed, the request is abandoned as a drop."""
        st = self.m.stats
        try:
            desc = self.m.write_error_frame(seq, code)
        except BufferFull:
            st.drops += 1
            self.m.abandon(seq)
            return
        st.errors += 1
        self._push_net_ready(desc[:2])

    # -- parked-poll answers ---------------------------------------------------

    def _answer_app(self):
        batch = list(self.app_ready)
        self.app_ready.clear()
        self.app_parked = False
        self.m.send_token("appcore", batch)

    def _answer_net(self):
        batch = list(self.net_ready)
        self.net_ready.clear()
        self.net_parked = False
        self.m.send_token("netcore", batch)

    def _push_app_ready(self, desc):
        self.app_ready.append(desc)
        if self.app_parked:
            self._answer_app()

    def _push_net_ready(self, desc):
        self.net_ready.append(desc)
        if self.net_parked:
            self._answer_net()

    # -- RxEngine ------------------------------------------------------------

    def _rx_start(self):
        addr, length = self.rx_queue.popleft()
        k = self.m.kernel
        st = self.m.stats
        self.rx.step(VALID_REQUEST)
        self._rx_busy_since = k.now
        if self.tx.state == BUSY:
            st.rx_tx_overlap_events += 1

        try:
            t_load = self.m.mem.access(ACCEL, addr, length, LOAD)
        except PageFault as fault:
            self._rx_abort_fault(fault, addr, length)
            return
        frame = self.m.frame_at(addr, length)

        cycles = self.cost.header_parse(wc.HEADER_SIZE)
        st.engine_stage_cycles["header_parse"] += cycles
        error = None
        request = None
        body = 0
        try:
            method_id, _, _, _ = wc.parse_header(frame)
            st.engine_stage_cycles["dispatch"] += self.cost.dispatch_cycles
            cycles += self.cost.dispatch_cycles
            self.m.schema.method_by_id(method_id)  # recvFunctionN select
            body = len(frame) - wc.HEADER_SIZE
            deser = self.cost.deserialize(body)
            st.engine_stage_cycles["deserialize"] += deser
            st.codec_bytes_engine += body
            cycles += deser
            request = wc.deserialize(frame, self.m.schema)
        except wc.UnknownMethod:
            error = (_frame_seq(frame), ST_UNKNOWN_METHOD)
        except wc.CodecError:
            error = (_frame_seq(frame), ST_MALFORMED)

        busy_ps = t_load + self.m.accel_clock.cycles_to_time(cycles)
        st.rx_mem_stall_ps += t_load

        outcome = None
        try:
            if error is None:
                try:
                    rec_addr, rec_len, t_store = self.m.write_app_record(
                        request, body)
                    outcome = ("ok", addr, length, rec_addr, rec_len)
                except BufferFull:
                    error = (request.seq_id, ST_REJECTED)  # backpressure
            if outcome is None:
                try:
                    rec_addr, rec_len, t_store = self.m.write_error_frame(*error)
                    st.errors += 1
                    outcome = ("err", addr, length, rec_addr, rec_len)
                except BufferFull:
                    st.drops += 1
                    self.m.abandon(error[0])
                    rec_len, t_store = 0, 0
                    outcome = ("dropped", addr, length, 0, 0)
        except PageFault as fault:
            self._rx_abort_fault(fault, addr, length)
            return

        self._rx_current = outcome
        self.rx.mem_reqs_in_flight = -(-rec_len // 64)
        st.rx_mem_stall_ps += t_store
        k.schedule(busy_ps, "accel", "rx_work_done")
        if self.rx.mem_reqs_in_flight:
            k.schedule(busy_ps + t_store, "accel", "rx_stores_done")

    def _rx_abort_fault(self, fault: PageFault, addr: int, length: int):
        """Translation fault: abort, answer the issuer's pending poll with
        an error code; the host touches the page and reissues the pair."""
        self.m.stats.fault_retries += 1
        self.rx.mem_reqs_in_flight = 0
        self.rx.step(WORK_DONE)   # nothing committed in flight -> DONE
        self._rx_finish_fsm()
        self.m.send_fault("netcore", fault.vaddr, (addr, length))

    def _rx_work_done(self):
        self.rx.step(WORK_DONE)
        if self.rx.state == DONE:
            self._rx_complete()

    def _rx_stores_done(self):
        self.rx.mem_reqs_in_flight = 0
        self.rx.step(MEM_DRAINED)
        self._rx_complete()

    def _rx_complete(self):
        st = self.m.stats
        outcome, addr, length, out_addr, out_len = self._rx_current
        self._rx_current = None
        st.rx_busy_ps += self.m.kernel.now - self._rx_busy_since
        self.m.release_net_recv(addr, length)
        if outcome == "ok":
            self._push_app_ready((out_addr, out_len))
        elif outcome == "err":
            self._push_net_ready((out_addr, out_len))
        st.rx_rpcs += 1
        self._rx_finish_fsm()

    def _rx_finish_fsm(self):
        if self.rx_queue:
            self.rx.step(MORE_WORK)
            self._rx_start()
        else:
            self.rx.step(NO_WORK)

    # -- TxEngine ------------------------------------------------------------

    def _tx_start(self):
        addr, length = self.tx_queue.popleft()
        k = self.m.kernel
        st = self.m.stats
        self.tx.step(VALID_REQUEST)
        self._tx_busy_since = k.now
        if self.rx.state == BUSY:
            st.rx_tx_overlap_events += 1

        try:
            t_load = self.m.mem.access(ACCEL, addr, length, LOAD)
        except PageFault as fault:
            self._tx_abort_fault(fault, addr, length)
            return
        record = self.m.record_at(addr)

        cycles = self.cost.header_create()
        st.engine_stage_cycles["header_create"] += cycles
        try:
            frame = self.m.respond_frame(record)
        except wc.CodecError:
            frame = wc.build_error_frame(record.seq_id, ST_MALFORMED)
            st.errors += 1
        body = len(frame) - wc.HEADER_SIZE
        ser = self.cost.serialize(body)
        st.engine_stage_cycles["serialize"] += ser
        st.codec_bytes_engine += body
        cycles += ser

        busy_ps = t_load + self.m.accel_clock.cycles_to_time(cycles)
        st.tx_mem_stall_ps += t_load

        try:
            out_addr, out_len, t_store = self.m.write_net_frame(frame, ACCEL)
            self._tx_current = ("ok", addr, length, out_addr, out_len)
        except BufferFull:
            st.drops += 1
            self.m.abandon(record.seq_id)
            out_len, t_store = 0, 0
            self._tx_current = ("dropped", addr, length, 0, 0)
        except PageFault as fault:
            self._tx_abort_fault(fault, addr, length)
            return

        self.tx.mem_reqs_in_flight = -(-out_len // 64)
        st.tx_mem_stall_ps += t_store
        k.schedule(busy_ps, "accel", "tx_work_done")
        if self.tx.mem_reqs_in_flight:
            k.schedule(busy_ps + t_store, "accel", "tx_stores_done")

    def _tx_abort_fault(self, fault: PageFault, addr: int, length: int):
        self.m.stats.fault_retries += 1
        self.tx.mem_reqs_in_flight = 0
        self.tx.step(WORK_DONE)
        self._tx_finish_fsm()
        self.m.send_fault("appcore", fault.vaddr, (addr, length))

    def _tx_work_done(self):
        self.tx.step(WORK_DONE)
        if self.tx.state == DONE:
            self._tx_complete()

    def _tx_stores_done(self):
        self.tx.mem_reqs_in_flight = 0
        self.tx.step(MEM_DRAINED)
        self._tx_complete()

    def _tx_complete(self):
        st = self.m.stats
        outcome, addr, length, out_addr, out_len = self._tx_current
        self._tx_current = None
        st.tx_busy_ps += self.m.kernel.now - self._tx_busy_since
        self.m.release_app_resp(addr, length)
        if outcome == "ok":
            self._push_net_ready((out_addr, out_len))
        st.tx_rpcs += 1
        self._tx_finish_fsm()

    def _tx_finish_fsm(self):
        if self.tx_queue:
            self.tx.step(MORE_WORK)
            self._tx_start()
        else:
            self.tx.step(NO_WORK)

    def idle(self) -> bool:
        return (self.rx.state == IDLE_RECV and self.tx.state == IDLE_RECV
                and not self.rx_queue and not self.tx_queue
                and not self.app_ready and not self.net_ready)


def _frame_seq(frame: bytes) -> int:
    try:
        return wc.parse_header(frame)[1]
    except wc.CodecError:
        return 0
