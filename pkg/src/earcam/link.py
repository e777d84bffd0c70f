"""Device-to-host wire formats and deterministic link timing simulation.

Two framing layers, both little-endian:

  device frame:   [magic A5 5A F0 0F][frame_id u16][width u16][height u16][pixels]
  bridge record:  [preamble AA 55 AA 55][mac 6B][length u16, 1..=247][payload]

The device chunks a frame blob into radio packets; the bridge wraps each
packet with the preamble, the originating MAC and a length; the host parser
uses length-prefixed framing and falls back to preamble scanning only after
corruption. Timing is a discrete-event model: SPI acquisition in DMA-bounded
transactions, then transmission draining at the configured goodput in packet
grains, acquisition and transmission strictly sequential per frame.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .imaging import QVGA, FrameSpec, GrayImage

FRAME_MAGIC = b"\xa5\x5a\xf0\x0f"
FRAME_HEADER_LEN = 10
BRIDGE_PREAMBLE = b"\xaa\x55\xaa\x55"
BRIDGE_HEADER_LEN = 12
MAX_BRIDGE_PAYLOAD = 247
MAX_FRAME_PIXELS = 1 << 20  # reassembly sanity bound on width*height


@dataclass(frozen=True)
class LinkConfig:
    """Radio, SPI and trigger parameters.

    goodput_bps is configured, not derived from packets_per_interval times
    payload (which would give 1.317 Mbps): it is the measured effective
    throughput after protocol overhead this model does not itemize. The
    drain rate is still capped by the per-interval packet budget so a config
    cannot outrun the schedule. contention_factor scales each link's drain
    when two devices stream at once (1.0 = fully independent links).
    """

    connection_interval_ms: float = 7.5
    packets_per_interval: int = 5
    packet_payload: int = 247
    goodput_bps: float = 992_000.0
    spi_clock_hz: float = 8_000_000.0
    dma_max_transfer: int = 65_536
    trigger_overhead_ms: float = 98.0
    active_timeout_s: float = 3.0
    dma_gap_ms: float = 0.0
    contention_factor: float = 1.0

    def __post_init__(self) -> None:
        for name in (
            "connection_interval_ms",
            "packets_per_interval",
            "packet_payload",
            "goodput_bps",
            "spi_clock_hz",
            "dma_max_transfer",
            "active_timeout_s",
            "contention_factor",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.trigger_overhead_ms < 0 or self.dma_gap_ms < 0:
            raise ValueError("overheads must be non-negative")
        if self.dma_max_transfer < self.packet_payload:
            raise ValueError("dma_max_transfer must be >= packet_payload")


def device_encode_frame(
    img: GrayImage, frame_id: int, packet_payload: int = 247
) -> list[bytes]:
    """Chunk header+pixels into radio packets; the last one may run short.

    Packet boundaries are byte boundaries only, never aligned to header
    fields. Concatenating the packets reproduces the frame blob exactly.
    """
    if not 0 <= frame_id <= 0xFFFF:
        raise ValueError(f"frame_id must fit u16, got {frame_id}")
    if packet_payload < 1:
        raise ValueError("packet_payload must be positive")
    header = FRAME_MAGIC + struct.pack(
        "<HHH", frame_id, img.spec.width, img.spec.height
    )
    blob = header + img.pixels
    return [blob[i : i + packet_payload] for i in range(0, len(blob), packet_payload)]


@dataclass(frozen=True)
class BridgeRecord:
    mac: bytes
    payload: bytes

    def encode(self) -> bytes:
        return bridge_encode(self.mac, self.payload)


def bridge_encode(mac: bytes, packet: bytes) -> bytes:
    if len(mac) != 6:
        raise ValueError(f"mac must be 6 bytes, got {len(mac)}")
    if not 1 <= len(packet) <= MAX_BRIDGE_PAYLOAD:
        raise ValueError(
            f"packet must be 1..{MAX_BRIDGE_PAYLOAD} bytes, got {len(packet)}"
        )
    return BRIDGE_PREAMBLE + bytes(mac) + struct.pack("<H", len(packet)) + bytes(packet)


@dataclass(frozen=True)
class SyncLoss:
    """Bytes discarded while hunting for the next preamble."""

    offset: int  # absolute stream offset where the discarded run began
    skipped: int

    code = "SYNC_LOSS"


class HostParser:
    """Incremental bridge-stream parser. Single consumer; never aborts.

    In-sync parsing is purely length-prefixed, so payload bytes that happen
    to contain the preamble pattern cannot confuse it. Only after corruption
    does it scan for the next preamble, merging each contiguous discarded run
    into one SyncLoss diagnostic.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self._pos = 0  # absolute offset of _buf[0] within the stream
        self._skip_start: int | None = None
        self._skipped = 0
        self.diagnostics: list[SyncLoss] = []

    def feed(self, data: bytes) -> list[BridgeRecord]:
        self._buf += data
        out: list[BridgeRecord] = []
        while True:
            idx = self._buf.find(BRIDGE_PREAMBLE)
            if idx < 0:
                # keep a short tail in case a preamble straddles this feed
                keep = min(len(self._buf), len(BRIDGE_PREAMBLE) - 1)
                self._drop(len(self._buf) - keep)
                break
            if idx > 0:
                self._drop(idx)
            if len(self._buf) < BRIDGE_HEADER_LEN:
                break
            length = int.from_bytes(self._buf[10:12], "little")
            if not 1 <= length <= MAX_BRIDGE_PAYLOAD:
                self._drop(1)  # bogus preamble; rescan one byte later
                continue
            end = BRIDGE_HEADER_LEN + length
            if len(self._buf) < end:
                break
            self._flush_skip()
            out.append(
                BridgeRecord(mac=bytes(self._buf[4:10]), payload=bytes(self._buf[12:end]))
            )
            del self._buf[:end]
            self._pos += end
        return out

    def close(self) -> None:
        """Declare end of stream: whatever is still buffered was garbage."""
        self._drop(len(self._buf))
        self._flush_skip()

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)

    def _drop(self, n: int) -> None:
        if n <= 0:
            return
        if self._skip_start is None:
            self._skip_start = self._pos
        self._skipped += n
        del self._buf[:n]
        self._pos += n

    def _flush_skip(self) -> None:
        if self._skip_start is not None:
            self.diagnostics.append(SyncLoss(offset=self._skip_start, skipped=self._skipped))
            self._skip_start = None
            self._skipped = 0


def host_parse(stream: bytes) -> tuple[list[BridgeRecord], list[SyncLoss]]:
    """One-shot wrapper over HostParser for complete streams."""
    parser = HostParser()
    records = parser.feed(stream)
    parser.close()
    return records, parser.diagnostics


def demux(records: list[BridgeRecord]) -> dict[bytes, bytes]:
    """Concatenate record payloads per originating MAC."""
    streams: dict[bytes, bytearray] = {}
    for rec in records:
        streams.setdefault(rec.mac, bytearray()).extend(rec.payload)
    return {mac: bytes(buf) for mac, buf in streams.items()}


@dataclass(frozen=True)
class StreamDiagnostic:
    kind: str  # "BAD_MAGIC" or "SIZE_MISMATCH"
    offset: int
    skipped: int


class FrameReassembler:
    """Rebuild (frame_id, image) pairs from one device's byte stream.

    A partial trailing frame is held pending, never an error. A wrong magic
    skips to the next magic; a header whose width*height is zero or beyond
    the 1 MB sanity bound resynchronizes the same way but is tagged
    SIZE_MISMATCH.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self._pos = 0
        self._skip_start: int | None = None
        self._skipped = 0
        self._skip_kind = "BAD_MAGIC"
        self.diagnostics: list[StreamDiagnostic] = []

    def feed(self, data: bytes) -> list[tuple[int, GrayImage]]:
        self._buf += data
        out: list[tuple[int, GrayImage]] = []
        while True:
            if len(self._buf) < FRAME_HEADER_LEN:
                break
            if self._buf[:4] != FRAME_MAGIC:
                idx = self._buf.find(FRAME_MAGIC)
                if idx < 0:
                    keep = min(len(self._buf), len(FRAME_MAGIC) - 1)
                    self._drop(len(self._buf) - keep, "BAD_MAGIC")
                    break
                self._drop(idx, "BAD_MAGIC")
                continue
            frame_id, width, height = struct.unpack_from("<HHH", self._buf, 4)
            if not 1 <= width * height <= MAX_FRAME_PIXELS:
                self._drop(len(FRAME_MAGIC), "SIZE_MISMATCH")
                continue
            need = FRAME_HEADER_LEN + width * height
            if len(self._buf) < need:
                break
            self._flush_skip()
            pixels = bytes(self._buf[FRAME_HEADER_LEN:need])
            out.append((frame_id, GrayImage(FrameSpec(width, height), pixels)))
            del self._buf[:need]
            self._pos += need
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)

    def _drop(self, n: int, kind: str) -> None:
        if n <= 0:
            return
        if self._skip_start is None:
            self._skip_start = self._pos
            self._skip_kind = kind
        self._skipped += n
        del self._buf[:n]
        self._pos += n

    def _flush_skip(self) -> None:
        if self._skip_start is not None:
            self.diagnostics.append(
                StreamDiagnostic(self._skip_kind, self._skip_start, self._skipped)
            )
            self._skip_start = None
            self._skipped = 0


def reassemble(device_stream: bytes) -> list[tuple[int, GrayImage]]:
    """One-shot reassembly of a complete per-device stream."""
    return FrameReassembler().feed(device_stream)


@dataclass(frozen=True)
class TraceEvent:
    t_ms: float
    device: int
    event: str
    nbytes: int


TRACE_CSV_HEADER = "t_ms,device,event,bytes"


@dataclass(frozen=True)
class TimingReport:
    t_acquire_ms: float
    t_transmit_ms: float
    frame_latency_ms: float
    effective_fps: float
    theoretical_fps: float
    devices: int
    n_frames: int
    spec: FrameSpec
    dma_transactions: int
    packets_per_frame: int
    last_packet_bytes: int
    trace: tuple[TraceEvent, ...] = field(repr=False)

    def trace_csv(self) -> str:
        lines = [TRACE_CSV_HEADER]
        for ev in self.trace:
            lines.append(f"{ev.t_ms:.6f},{ev.device},{ev.event},{ev.nbytes}")
        return "\n".join(lines) + "\n"


def _chunk_sizes(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def _drain_rate_bits_per_ms(config: LinkConfig, contended: bool) -> float:
    budget = (
        config.packets_per_interval * config.packet_payload * 8.0
    ) / config.connection_interval_ms
    rate = min(config.goodput_bps / 1000.0, budget)
    if contended:
        rate *= config.contention_factor
    return rate


def simulate_stream(
    config: LinkConfig, spec: FrameSpec, n_frames: int, devices: int = 1
) -> TimingReport:
    """Acquire-then-transmit timing for a run of frames on 1 or 2 devices.

    Acquisition occupies payload_bytes*8/spi_clock, split into DMA-bounded
    transactions; transmission drains header+payload at the (capped) goodput,
    with one trace event per packet at its drain completion time. No
    pipelining: the next acquisition starts only when the previous frame has
    fully left the radio.
    """
    if devices not in (1, 2):
        raise ValueError("devices must be 1 or 2")
    if n_frames < 1:
        raise ValueError("n_frames must be positive")
    payload = spec.payload_bytes
    wire = payload + FRAME_HEADER_LEN
    t_acquire = payload * 8.0 / config.spi_clock_hz * 1000.0
    rate = _drain_rate_bits_per_ms(config, contended=(devices == 2))
    t_transmit = wire * 8.0 / rate
    dma_sizes = _chunk_sizes(payload, config.dma_max_transfer)
    packet_sizes = _chunk_sizes(wire, config.packet_payload)
    acquire_span = t_acquire + config.dma_gap_ms * (len(dma_sizes) - 1)

    events: list[TraceEvent] = []
    for dev in range(devices):
        t = 0.0
        for _ in range(n_frames):
            events.append(TraceEvent(t, dev, "acquire_start", payload))
            tt = t
            for i, size in enumerate(dma_sizes):
                tt += size * 8.0 / config.spi_clock_hz * 1000.0
                events.append(TraceEvent(tt, dev, "dma_done", size))
                if i < len(dma_sizes) - 1:
                    tt += config.dma_gap_ms
            events.append(TraceEvent(tt, dev, "acquire_done", payload))
            sent = 0
            for size in packet_sizes:
                sent += size
                events.append(
                    TraceEvent(tt + sent * 8.0 / rate, dev, "tx_packet", size)
                )
            t = tt + wire * 8.0 / rate
            events.append(TraceEvent(t, dev, "frame_done", wire))
    events.sort(key=lambda ev: (ev.t_ms, ev.device))  # stable: ties keep emit order

    frame_latency = acquire_span + t_transmit
    return TimingReport(
        t_acquire_ms=t_acquire,
        t_transmit_ms=t_transmit,
        frame_latency_ms=frame_latency,
        effective_fps=1000.0 / frame_latency,
        theoretical_fps=rate * 1000.0 / (payload * 8.0),
        devices=devices,
        n_frames=n_frames,
        spec=spec,
        dma_transactions=len(dma_sizes),
        packets_per_frame=len(packet_sizes),
        last_packet_bytes=packet_sizes[-1],
        trace=tuple(events),
    )


def simulate_dual_acquisition(config: LinkConfig, spec: FrameSpec | None = None) -> float:
    """Milliseconds from the host's capture trigger until both frames arrive.

    Trigger overhead (write command plus the IDLE-to-ACTIVE transition)
    precedes one single-frame acquire+transmit on each device; the two links
    run the same schedule, so completion is their common frame latency.
    """
    spec = spec or QVGA
    report = simulate_stream(config, spec, n_frames=1, devices=2)
    return config.trigger_overhead_ms + report.frame_latency_ms
