#!/usr/bin/env python3
"""Smoke test for the erpdiff_py extension module.

Builds the cdylib if needed, imports it, and drives a miniature pipeline:
synthetic data -> container round-trip -> schedule sanity -> short training
run -> count-matched sampling -> metric evaluation.

Usage: python3 python/smoke_test.py
"""

import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_extension() -> Path:
    lib = REPO / "target" / "release" / "liberpdiff_py.so"
    if not lib.exists():
        print("building erpdiff-py (release)...")
        subprocess.run(
            ["cargo", "build", "-p", "erpdiff-py", "--release"],
            cwd=REPO,
            check=True,
        )
    if not lib.exists():
        sys.exit(f"extension library not found at {lib}")
    return lib


def main() -> None:
    lib = build_extension()
    workdir = Path(tempfile.mkdtemp(prefix="erpdiff_smoke_"))
    shutil.copy(lib, workdir / "erpdiff_py.so")
    sys.path.insert(0, str(workdir))
    import erpdiff_py as ed

    print(f"erpdiff_py {ed.__version__}")

    # 1. Synthetic data + container round-trip.
    spec = {
        "n_subjects": 2,
        "sessions_per_subject": 2,
        "epochs_per_condition": 24,
        "n_channels": 4,
        "fs": 64.0,
        "epoch_seconds": 1.0,
        "p300_amp_uv": [10.0, 12.0],
        "p300_latency_s": [0.3, 0.4],
        "p300_width_s": 0.05,
        "session_amp_scale": 0.8,
        "session_latency_offset_s": 0.03125,
        "noise_std_uv": 1.0,
        "noise_ar": 0.5,
        "seed": 13,
    }
    data = ed.synth(json.dumps(spec))
    assert len(data) == 2 * 2 * 2 * 24, len(data)
    assert data.n_channels == 4 and data.epoch_len == 64
    container = workdir / "data"
    data.save(container)
    back = ed.EpochSet.load(container)
    assert back.counts() == data.counts()
    flat, shape = back.epoch(0)
    assert shape == (4, 64) and len(flat) == 256
    print(f"container round-trip ok: {back!r}")

    # 2. Schedule sanity: m(0)=1, m(1)=exp(-5.025) for beta=(0.1, 20).
    sched = ed.VpSchedule(0.1, 20.0)
    m0, s0 = sched.marginal(0.0)
    m1, s1 = sched.marginal(1.0)
    assert m0 == 1.0 and s0 == 0.0
    assert abs(m1 - math.exp(-5.025)) < 1e-12, m1
    assert abs(s1 - 1.0) < 1e-4
    print(f"schedule ok: m(1) = {m1:.6f}")

    # 3. Preprocessing: a 10 Hz sine at 256 Hz survives the bandpass and
    # lands at 128 Hz epochs.
    fs_in, samples = 256.0, 1024
    sine = []
    for _ch in range(2):
        sine.extend(
            20.0 * math.sin(2.0 * math.pi * 10.0 * t / fs_in) for t in range(samples)
        )
    pre = ed.preprocess(
        sine,
        ["c1", "c2"],
        fs_in,
        [(100, "target"), (400, "nontarget")],
        1,
        1,
        json.dumps({"fs_out": 128.0}),
    )
    assert len(pre) == 2 and pre.epoch_len == 128, (len(pre), pre.epoch_len)
    print(f"preprocess ok: {pre!r}")

    # 4. Short training run + count-matched sampling.
    run_dir = workdir / "run"
    model = {
        "n_blocks": 1,
        "residual_channels": 8,
        "skip_channels": 8,
        "kernel_size": 3,
        "dilation_cycle": [1],
        "time_embed_dim": 8,
        "cond_embed_dim": 4,
    }
    train_cfg = {"steps": 40, "batch_size": 8, "eval_every": 40, "seed": 3}
    loss, val_loss = ed.train(
        data, run_dir, json.dumps(model), json.dumps(train_cfg)
    )
    assert math.isfinite(loss) and math.isfinite(val_loss)
    ckpt = run_dir / "ckpt_final.erpd"
    assert ckpt.exists()
    print(f"train ok: loss {loss:.3f}, val {val_loss:.3f}")

    sample_cfg = {"n_steps": 25, "corrector_steps": 0, "guidance_scale": 0.0, "seed": 4}
    gen = ed.sample_matched_set(ckpt, data, json.dumps(sample_cfg))
    assert gen.counts() == data.counts()
    one = ed.sample(ckpt, 1, 1, "target", 5, json.dumps(sample_cfg))
    assert len(one) == 5
    print(f"sampling ok: {gen!r}")

    # 5. Metrics: identity distances vanish; report CSV parses.
    assert ed.swd_distance(data, data, 32, 0) == 0.0
    assert ed.sd_md_distance(data, data) == 0.0
    csv_text = ed.evaluate(data, gen, "swd,pad,pld,sdmd")
    header = csv_text.splitlines()[0]
    assert header == "subject,session,class_scope,metric,value,baseline_value", header
    assert any(line.startswith("ALL,ALL,both,swd") for line in csv_text.splitlines())
    ev, ev_shape = data.evoked(1, 1, "target")
    assert ev_shape == (4, 64)
    peak = max(ev)
    assert 5.0 < peak < 15.0, peak
    print(f"metrics ok: evoked peak {peak:.2f} uV")

    shutil.rmtree(workdir, ignore_errors=True)
    print("SMOKE TEST PASSED")


if __name__ == "__main__":
    main()
