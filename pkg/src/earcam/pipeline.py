"""End-to-end query latency: wake word, capture, optional stitch, inference.

Times are seconds relative to the moment the spoken query completes (t = 0);
events before that are negative. Three pipeline configurations:

  A  serial: nothing starts until the query is complete.
  B  early trigger: capture starts as soon as the wake phrase is detected
     mid-utterance, so both frames usually arrive before the query ends.
  C  early trigger plus opportunistic stitching; on stitch failure the pair
     is sent as-is, matching configuration B.
"""

from __future__ import annotations

import base64
import json
import random
import time
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .errors import NoWakeWordError
from .geometry import HeadCameraRig
from .imaging import LEFT, RIGHT, FrameSpec, GrayImage, PlanarScene, QVGA
from .imaging import encode_pgm, render_view
from .link import LinkConfig, simulate_dual_acquisition
from .stitch import StitchResult, try_stitch

CONFIG_SERIAL = "A"
CONFIG_EARLY = "B"
CONFIG_STITCH = "C"
CONFIGS = (CONFIG_SERIAL, CONFIG_EARLY, CONFIG_STITCH)

PATH_DUAL = "dual"
PATH_STITCHED = "stitched"
PATH_FALLBACK = "fallback_dual"

DEFAULT_WAKE_PHRASES = ("vuebuds", "hey vue", "hey view", "view buds")

PROMPT_STITCHED = (
    "Describe what the wearer is looking at in this panoramic view."
)
PROMPT_DUAL = (
    "Describe what the wearer is looking at, given these two overlapping"
    " views from the left and right sides of the head."
)


@dataclass(frozen=True)
class WakeWordConfig:
    phrases: tuple[str, ...] = DEFAULT_WAKE_PHRASES
    threshold: float = 0.8
    chunk_secs: float = 2.3  # transcription cadence of the serial pipeline

    def __post_init__(self) -> None:
        if not self.phrases:
            raise ValueError("need at least one wake phrase")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if self.chunk_secs <= 0:
            raise ValueError("chunk_secs must be positive")


@dataclass(frozen=True)
class WakeDetection:
    phrase: str  # the configured phrase that matched
    confidence: float  # 1 - normalized edit distance
    char_span: tuple[int, int]  # half-open span in the original transcript


def _normalize(text: str) -> tuple[str, list[int]]:
    # Lowercase, strip punctuation, collapse whitespace; src maps each
    # normalized character back to its position in the original text.
    chars: list[str] = []
    src: list[int] = []
    for i, ch in enumerate(text):
        if ch.isalnum():
            for c in ch.lower():
                chars.append(c)
                src.append(i)
        elif ch.isspace():
            if chars and chars[-1] != " ":
                chars.append(" ")
                src.append(i)
    if chars and chars[-1] == " ":
        chars.pop()
        src.pop()
    return "".join(chars), src


def _levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(
                min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
            )
        prev = cur
    return prev[-1]


def phrase_similarity(window: str, phrase: str) -> float:
    denom = max(len(window), len(phrase))
    if denom == 0:
        return 0.0
    return 1.0 - _levenshtein(window, phrase) / denom


def wake_word_detect(
    transcript: str, config: WakeWordConfig | None = None
) -> WakeDetection | None:
    """Find the earliest wake-phrase activation in a transcript.

    Scans word-aligned windows left to right; at the first word boundary
    where any configured phrase reaches the similarity threshold, the best
    candidate ending there wins (highest similarity, then earliest start,
    then longest phrase). Returns None when nothing reaches the threshold.
    """
    cfg = config or WakeWordConfig()
    normalized, src = _normalize(transcript)
    if not normalized:
        return None
    words = normalized.split(" ")
    starts: list[int] = []
    pos = 0
    for w in words:
        starts.append(pos)
        pos += len(w) + 1
    phrase_words = [(p, len(p.split(" "))) for p in cfg.phrases]
    for end in range(1, len(words) + 1):
        end_char = starts[end - 1] + len(words[end - 1])
        candidates: list[tuple[float, int, int, str]] = []
        for phrase, plen in phrase_words:
            lo = max(1, plen - 2)
            hi = min(end, plen + 2)
            for wlen in range(lo, hi + 1):
                start_char = starts[end - wlen]
                window = normalized[start_char:end_char]
                sim = phrase_similarity(window, phrase)
                if sim >= cfg.threshold:
                    candidates.append((-sim, start_char, -len(phrase), phrase))
        if candidates:
            neg_sim, start_char, _, phrase = min(candidates)
            span = (src[start_char], src[end_char - 1] + 1)
            return WakeDetection(
                phrase=phrase, confidence=-neg_sim, char_span=span
            )
    return None


@dataclass(frozen=True)
class InferenceResult:
    ttft_s: float  # time from request to first generated token
    reply: str


class InferenceClient(Protocol):
    def infer(
        self, prompt: str, images: Sequence[GrayImage]
    ) -> InferenceResult: ...


@dataclass
class MockInferenceClient:
    """Stand-in for the remote vision-language service.

    First-token latency depends only on how many images ride along: one
    merged view decodes faster than two full frames. Optional jitter is
    seeded so runs stay reproducible.
    """

    ttft_dual_s: float = 2.15
    ttft_stitched_s: float = 1.14
    jitter_s: float = 0.0
    seed: int = 0
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._rng = random.Random(self.seed)

    def infer(self, prompt: str, images: Sequence[GrayImage]) -> InferenceResult:
        if not images:
            raise ValueError("need at least one image")
        ttft = self.ttft_stitched_s if len(images) == 1 else self.ttft_dual_s
        if self.jitter_s:
            ttft += self._rng.uniform(-self.jitter_s, self.jitter_s)
        kind = "a merged panorama" if len(images) == 1 else "a stereo pair"
        return InferenceResult(
            ttft_s=max(0.0, ttft),
            reply=f"Mock description from {kind} ({len(images)} image(s)).",
        )


@dataclass
class RemoteInferenceClient:
    """Minimal HTTP client: POST `{prompt, images}`, read `{reply, ttft_ms}`.

    The socket timeout doubles as the cancellation bound; a request that
    exceeds it raises instead of blocking the caller.
    """

    endpoint: str
    timeout_s: float = 30.0

    def infer(self, prompt: str, images: Sequence[GrayImage]) -> InferenceResult:
        payload = {
            "prompt": prompt,
            "images": [
                base64.b64encode(encode_pgm(im)).decode("ascii") for im in images
            ],
        }
        req = urllib.request.Request(
            self.endpoint,
            data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json"},
        )
        t0 = time.perf_counter()
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            body = json.loads(resp.read().decode("utf-8"))
        elapsed = time.perf_counter() - t0
        ttft_s = (
            float(body["ttft_ms"]) / 1000.0 if "ttft_ms" in body else elapsed
        )
        return InferenceResult(ttft_s=ttft_s, reply=str(body.get("reply", "")))


SHAPE_STITCHED = "STITCHED"
SHAPE_DUAL = "DUAL"


def select_prompt(input_shape: str) -> str:
    if input_shape == SHAPE_STITCHED:
        return PROMPT_STITCHED
    if input_shape == SHAPE_DUAL:
        return PROMPT_DUAL
    raise ValueError(f"unknown input shape {input_shape!r}")


@dataclass(frozen=True)
class TimelineEvent:
    name: str
    t_s: float


@dataclass(frozen=True)
class QueryTimeline:
    config: str
    path: str
    events: tuple[TimelineEvent, ...]
    total_latency_s: float  # query completion to first generated token
    wake: WakeDetection
    reply: str
    stitch: StitchResult | None = None

    def __post_init__(self) -> None:
        ts = [e.t_s for e in self.events]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("timeline events must be time-ordered")
        first_token = [e.t_s for e in self.events if e.name == "vlm_first_token"]
        if first_token and abs(first_token[0] - self.total_latency_s) > 1e-9:
            raise ValueError("total latency must match the first-token event")

    def event(self, name: str) -> float:
        for e in self.events:
            if e.name == name:
                return e.t_s
        raise KeyError(name)

    def to_json(self) -> dict:
        out: dict = {
            "config": self.config,
            "path": self.path,
            "total_latency_s": self.total_latency_s,
            "events": [{"name": e.name, "t_s": e.t_s} for e in self.events],
            "wake": {
                "phrase": self.wake.phrase,
                "confidence": self.wake.confidence,
                "char_span": list(self.wake.char_span),
            },
            "reply": self.reply,
        }
        if self.stitch is not None:
            out["stitch"] = {
                "status": self.stitch.status,
                "reason": self.stitch.reason,
                "inliers": self.stitch.inliers,
                "inlier_ratio": self.stitch.inlier_ratio,
            }
        return out


def run_query(
    config: str,
    transcript: str,
    scene: PlanarScene,
    rig: HeadCameraRig,
    link_cfg: LinkConfig | None = None,
    wake_cfg: WakeWordConfig | None = None,
    client: InferenceClient | None = None,
    *,
    spec: FrameSpec = QVGA,
    stitch_seed: int = 7,
    synthesis_s: float = 0.0,
    speech_wps: float = 2.5,
    wake_latency_s: float = 0.1,
    stitch_cost_s: float = 0.123,
) -> QueryTimeline:
    """Simulate one voice query through a chosen pipeline configuration.

    The transcript is replayed at speech_wps to place the wake phrase in
    time; capture timing comes from the radio link model; configuration C
    actually renders the scene and runs the stitcher, so its outcome (and
    the resulting inference payload) depends on scene content.
    """
    if config not in CONFIGS:
        raise ValueError(f"unknown config {config!r}, expected one of {CONFIGS}")
    link_cfg = link_cfg or LinkConfig()
    client = client or MockInferenceClient()

    detection = wake_word_detect(transcript, wake_cfg)
    if detection is None:
        raise NoWakeWordError("no wake phrase found in transcript")

    speech_s = len(transcript.split()) / speech_wps
    frac_end = detection.char_span[1] / max(1, len(transcript))
    wake_spoken = -speech_s * (1.0 - frac_end)
    dual_s = simulate_dual_acquisition(link_cfg, spec) / 1000.0

    left = render_view(rig, LEFT, scene, spec)
    right = render_view(rig, RIGHT, scene, spec)

    events: list[TimelineEvent] = [
        TimelineEvent("speech_start", -speech_s),
        TimelineEvent("wake_spoken", wake_spoken),
    ]
    stitch_result: StitchResult | None = None

    if config == CONFIG_SERIAL:
        # Whole-utterance transcription: detection waits for the query end.
        events.append(TimelineEvent("query_complete", 0.0))
        events.append(TimelineEvent("asr_chunk_closed", 0.0))
        events.append(TimelineEvent("wake_detected", 0.0))
        events.append(TimelineEvent("camera_triggered", 0.0))
        images_ready = dual_s
        events.append(TimelineEvent("images_ready", images_ready))
        ready = images_ready
        path = PATH_DUAL
        images = [left, right]
    else:
        # Streaming detection: capture starts mid-utterance. Detection is
        # clamped to the query end since that is when it is acted on at the
        # latest.
        wake_detected = min(wake_spoken + wake_latency_s, 0.0)
        events.append(TimelineEvent("wake_detected", wake_detected))
        events.append(TimelineEvent("camera_triggered", wake_detected))
        images_ready = wake_detected + dual_s
        events.append(TimelineEvent("images_ready", images_ready))
        events.append(TimelineEvent("query_complete", 0.0))
        if config == CONFIG_EARLY:
            ready = images_ready
            path = PATH_DUAL
            images = [left, right]
        else:
            stitch_result = try_stitch(left, right, seed=stitch_seed)
            stitch_done = images_ready + stitch_cost_s
            if stitch_result.stitched:
                events.append(TimelineEvent("stitch_done", stitch_done))
                path = PATH_STITCHED
                images = [stitch_result.panorama]
            else:
                events.append(TimelineEvent("stitch_failed", stitch_done))
                path = PATH_FALLBACK
                images = [left, right]
            ready = stitch_done

    shape = SHAPE_STITCHED if path == PATH_STITCHED else SHAPE_DUAL
    outcome = client.infer(select_prompt(shape), images)
    first_token = max(0.0, ready) + outcome.ttft_s
    events.append(TimelineEvent("vlm_first_token", first_token))
    events.append(TimelineEvent("reply_ready", first_token + synthesis_s))

    events.sort(key=lambda e: e.t_s)  # stable: insertion order breaks ties
    return QueryTimeline(
        config=config,
        path=path,
        events=tuple(events),
        total_latency_s=first_token,
        wake=detection,
        reply=outcome.reply,
        stitch=stitch_result,
    )
