#!/usr/bin/env python3
"""Generate the test fixtures under crates/core/tests/fixtures.

Videos are tiny synthetic clips written as 8-bit 4:2:0 YUV4MPEG2, plus one
lossless FFV1 Matroska copy of the golden clip. Golden checksums are the
sha256 of each decoded frame as packed RGB24, computed here with numpy from
the raw planes (independently of the Rust decoder).

Scripted model responses are keyed the way the pipeline tags its requests.

    python3 scripts/make_fixtures.py
"""

import hashlib
import json
import shutil
import subprocess
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "crates" / "core" / "tests" / "fixtures"

W, H = 32, 24

STAGE1_K = 10
MODEL = "vlm-small"
GRID = [(k, t) for k in (2, 5) for t in (1, 2)]


# ---------------------------------------------------------------- video

def synth_planes(n_frames, seed):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:H, 0:W]
    frames = []
    for f in range(n_frames):
        y = (16 + (xx * 6 + yy * 3 + f * 7) % 220).astype(np.uint8)
        y[(yy // 6 + f) % 4 == 0] = 200
        noise = rng.integers(0, 12, size=(H, W), dtype=np.uint8)
        y = np.clip(y.astype(np.int32) + noise, 16, 235).astype(np.uint8)
        cy, cx = np.mgrid[0:H // 2, 0:W // 2]
        u = (64 + (cx * 8 + f * 5) % 128).astype(np.uint8)
        v = (64 + (cy * 10 + f * 3) % 128).astype(np.uint8)
        frames.append((y, u, v))
    return frames


def write_y4m(path, frames, fps=(30, 1)):
    with open(path, "wb") as fh:
        fh.write(f"YUV4MPEG2 W{W} H{H} F{fps[0]}:{fps[1]} Ip A1:1 C420jpeg\n".encode())
        for y, u, v in frames:
            fh.write(b"FRAME\n")
            fh.write(y.tobytes())
            fh.write(u.tobytes())
            fh.write(v.tobytes())


def yuv420_to_rgb(y, u, v):
    """BT.601 limited range, integer arithmetic, nearest chroma sample."""
    u = np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)[:H, :W].astype(np.int64)
    v = np.repeat(np.repeat(v, 2, axis=0), 2, axis=1)[:H, :W].astype(np.int64)
    c = y.astype(np.int64) - 16
    d = u - 128
    e = v - 128
    r = (298 * c + 409 * e + 128) >> 8
    g = (298 * c - 100 * d - 208 * e + 128) >> 8
    b = (298 * c + 516 * d + 128) >> 8
    return np.clip(np.stack([r, g, b], axis=-1), 0, 255).astype(np.uint8)


def write_ffv1(path, rgb_frames):
    ffmpeg = shutil.which("ffmpeg")
    if ffmpeg is None:
        raise SystemExit("ffmpeg is required to write the Matroska fixture")
    raw = b"".join(f.tobytes() for f in rgb_frames)
    subprocess.run(
        [ffmpeg, "-y", "-hide_banner", "-loglevel", "error",
         "-f", "rawvideo", "-pix_fmt", "rgb24", "-s", f"{W}x{H}", "-r", "30",
         "-i", "-", "-c:v", "ffv1", "-pix_fmt", "gbrp", str(path)],
        input=raw, check=True,
    )


def sha(rgb):
    return hashlib.sha256(rgb.tobytes()).hexdigest()


def golden():
    out = FIX / "video"
    out.mkdir(parents=True, exist_ok=True)
    planes = synth_planes(10, seed=7)
    write_y4m(out / "golden.y4m", planes)
    rgb = [yuv420_to_rgb(*p) for p in planes]
    write_ffv1(out / "golden.mkv", rgb)
    sums = {
        "width": W,
        "height": H,
        "frame_count": 10,
        "rgb24_sha256": [sha(f) for f in rgb],
    }
    (out / "golden_checksums.json").write_text(json.dumps(sums, indent=2) + "\n")


# ------------------------------------------------------------ scripted

def ref_frames(n, k):
    out = [s + k - 1 for s in range(0, n - n % k, k)]
    if n % k:
        out.append(n - 1)
    return out


def caption(text, hazards):
    return json.dumps({
        "caption": text,
        "hazards": [{"category": c, "description": d} for c, d in hazards],
    })


def report(event, severity, ego, counts, before, after, ttf=None):
    doc = {
        "event_type": event,
        "crash_severity": severity,
        "ego_involved": ego,
        "entity_counts": dict(zip(
            ["vehicles", "pedestrians", "cyclists_or_scooters", "animals"], counts)),
        "caption_before": before,
        "caption_after": after,
    }
    if ttf is not None:
        doc["time_to_incident_frames"] = ttf
    return doc


def fenced(doc):
    return "Here is the report.\n```json\n" + json.dumps(doc, indent=1) + "\n```"


def entry(stage, vid, text, frame=None, ordinal=0):
    e = {"stage": stage, "video_id": vid, "text": text, "ordinal": ordinal}
    if frame is not None:
        e["frame"] = frame
    return e


def prov(k, t):
    return f"({MODEL},k={k},t={t})"


def scripted_alpha(entries):
    # 30 frames; clean model path everywhere.
    vid, n, i = "alpha", 30, 19
    caps = {
        9: caption("A sedan drives ahead in the right lane.", [("vehicle", "sedan ahead")]),
        19: caption("A pedestrian steps off the curb in front of the sedan.",
                    [("pedestrian", "crossing"), ("vehicle", "sedan braking")]),
        29: caption("The sedan has stopped; the pedestrian reached the far side.",
                    [("vehicle", "stopped sedan")]),
    }
    for f in ref_frames(n, STAGE1_K):
        entries.append(entry("stage1", vid, caps[f], frame=f))
    entries.append(entry("stage2", vid, json.dumps({"incident_frame": i, "rationale": "pedestrian enters lane"})))
    for j, (k, t) in enumerate(GRID):
        sev = 2 if j % 2 == 0 else 3
        doc = report("hazard", sev, False, [1, 1, 0, 0],
                     "A sedan drives ahead while a pedestrian waits at the curb.",
                     "The pedestrian steps out and the sedan brakes hard to avoid them.",
                     ttf=i)
        entries.append(entry("stage3" + prov(k, t), vid, fenced(doc), frame=i))
    ens = report("hazard", 2, False, [1, 1, 0, 0],
                 "A sedan travels ahead as a pedestrian waits at the curb.",
                 "The pedestrian crosses suddenly and the sedan brakes to a stop.",
                 ttf=i)
    entries.append(entry("ensemble", vid, json.dumps(ens)))


def scripted_bravo(entries):
    # 25 frames; one malformed caption, prose-only stage 2 (fallback), one
    # grid point malformed twice, ensemble output disagrees with the majority.
    vid, n = "bravo", 25
    caps = {
        9: "The frame shows a road.",  # no JSON: sentinel caption
        19: caption("A cyclist swerves toward a van at the junction.",
                    [("cyclist", "swerving cyclist"), ("vehicle", "white van")]),
        24: caption("The van has struck the cyclist's rear wheel.",
                    [("vehicle", "van")]),
    }
    for f in ref_frames(n, STAGE1_K):
        entries.append(entry("stage1", vid, caps[f], frame=f))
    entries.append(entry("stage2", vid, "I cannot determine the incident frame from these captions."))
    i = 19  # fallback: most hazards
    for j, (k, t) in enumerate(GRID):
        tag = "stage3" + prov(k, t)
        if j == 3:
            entries.append(entry(tag, vid, "The video shows an accident.", frame=i))
            entries.append(entry(tag, vid, "{\"event_type\": \"crash\"}", frame=i, ordinal=1))
            continue
        event = "hazard" if j == 2 else "accident"
        doc = report(event, 3, False, [1, 0, 1, 0],
                     "A cyclist rides beside a white van approaching the junction.",
                     "The cyclist swerves into the van, which clips the rear wheel.")
        entries.append(entry(tag, vid, json.dumps(doc), frame=i))
    ens = report("hazard", 3, False, [2, 0, 1, 1],
                 "A cyclist rides next to a white van near the junction.",
                 "The cyclist swerves and the van clips the bicycle's rear wheel.",
                 ttf=i)
    entries.append(entry("ensemble", vid, fenced(ens)))


def scripted_charlie(entries):
    # 12 frames; stage 2 answers out of range (clamped), ensemble malformed
    # twice so the fallback picks a candidate.
    vid, n = "charlie", 12
    caps = {
        9: caption("A dog runs onto the road from a driveway.", [("animal", "dog")]),
        11: caption("The ego car swerves and hits a parked car.",
                    [("vehicle", "parked car"), ("animal", "dog")]),
    }
    for f in ref_frames(n, STAGE1_K):
        entries.append(entry("stage1", vid, caps[f], frame=f))
    entries.append(entry("stage2", vid, "```json\n{\"incident_frame\": 9999}\n```"))
    i = n - 1
    sev = [2, 3, 3, 4]
    for j, (k, t) in enumerate(GRID):
        doc = report("accident", sev[j], True, [1, 0, 0, 1],
                     "A dog darts onto the road in front of the ego car.",
                     "The ego car swerves to miss the dog and hits a parked car.",
                     ttf=i - j)
        entries.append(entry("stage3" + prov(k, t), vid, json.dumps(doc), frame=i))
    entries.append(entry("ensemble", vid, "Final report: accident, severe."))
    entries.append(entry("ensemble", vid, "{\"caption_before\": \"\"}", ordinal=1))


def e2e():
    out = FIX / "e2e"
    vids = out / "videos"
    vids.mkdir(parents=True, exist_ok=True)
    for name, n, seed in (("alpha", 30, 1), ("bravo", 25, 2), ("charlie", 12, 3)):
        write_y4m(vids / f"{name}.y4m", synth_planes(n, seed))

    scripted = out / "scripted"
    scripted.mkdir(exist_ok=True)
    for name, fn in (("alpha", scripted_alpha), ("bravo", scripted_bravo), ("charlie", scripted_charlie)):
        entries = []
        fn(entries)
        (scripted / f"{name}.json").write_text(json.dumps(entries, indent=1) + "\n")

    ks = ", ".join(str(k) for k in sorted({k for k, _ in GRID}))
    ts = ", ".join(str(t) for t in sorted({t for _, t in GRID}))
    (out / "config.toml").write_text(f"""# Small grid for offline runs against the scripted backend.
[stage1]
k = {STAGE1_K}
endpoint = {{ base_url = "http://localhost:8000/v1", model_name = "{MODEL}" }}

[stage2]
endpoint = {{ base_url = "http://localhost:8000/v1", model_name = "llm-small" }}

[stage3]
models = [{{ base_url = "http://localhost:8000/v1", model_name = "{MODEL}" }}]
k = [{ks}]
t = [{ts}]

[ensemble]
endpoint = {{ base_url = "http://localhost:8000/v1", model_name = "llm-small" }}
""")

    refs = [
        {"video_id": "alpha", **report("hazard", 2, False, [1, 1, 0, 0],
            "A sedan drives ahead as a pedestrian waits at the curb.",
            "The pedestrian steps into the road and the sedan brakes sharply.", ttf=19)},
        {"video_id": "alpha", **report("hazard", 2, False, [1, 1, 0, 0],
            "A car moves along the lane with a person near the curb.",
            "The person crosses and the car stops in time.", ttf=18)},
        {"video_id": "bravo", **report("accident", 3, False, [1, 0, 1, 0],
            "A cyclist rides beside a van near a junction.",
            "The cyclist swerves and the van hits the rear wheel.", ttf=19)},
        {"video_id": "charlie", **report("accident", 3, True, [1, 0, 0, 1],
            "A dog runs out of a driveway onto the road.",
            "The ego car swerves away from the dog and strikes a parked car.", ttf=11)},
    ]
    (out / "references.jsonl").write_text("".join(json.dumps(r) + "\n" for r in refs))
    (out / "roster.txt").write_text("eval-ann\neval-ben\neval-cat\n")


def sidecars():
    out = FIX / "e2e"
    ids = ["alpha", "bravo", "charlie"]
    # Table row-III corpus scores injected per item (mean equals the value).
    (out / "sidecar_row3.json").write_text(json.dumps({"metrics": {
        "SPICE": {i: 0.1822 for i in ids},
        "METEOR": {i: 0.2605 for i in ids},
        "CIDEr-D": {i: 0.0067 for i in ids},
    }}, indent=1) + "\n")
    (out / "spice.json").write_text(json.dumps({"alpha": 0.21, "bravo": 0.17, "charlie": 0.19}, indent=1) + "\n")


if __name__ == "__main__":
    golden()
    e2e()
    sidecars()
    print(f"fixtures written under {FIX}")
