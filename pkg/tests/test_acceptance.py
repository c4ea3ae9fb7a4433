"""Acceptance gate: one test per shipped claim, one report line per claim.

Run with ``pytest -s tests/test_acceptance.py`` to see the [PASS]/[FAIL]
lines; the whole gate takes roughly ten minutes on a desktop CPU (the
overfit and ablation claims really train models). Tolerances and budgets
are pinned in the asserts — loosening one is a release decision, not a
test fix.
"""

import dataclasses
import time

import numpy as np
import pytest
import torch

from fusesep.blocks import SSTransformer, TransformerLayer
from fusesep.chunking import ChunkSpec, overlap_add, segment
from fusesep.config import PRESETS, TrainConfig, preset
from fusesep.fusion import (
    Downsample,
    MaskHead,
    TopologyConfig,
    Upsample,
    build_separator,
)
from fusesep.objective import pit_loss, si_snr
from fusesep.signals import generate_dataset
from fusesep.trainer import PlateauHalving, clip_gradients_, evaluate, train

from oracles import gradient_check, pit_bruteforce, si_snr_reference


def report(ok: bool, name: str, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


@pytest.fixture(scope="module")
def smoke_manifest(tmp_path_factory):
    """Five fixed 1 s two-source mixtures shared by the training claims."""
    out = tmp_path_factory.mktemp("smoke-data")
    generate_dataset(n_examples=5, c_sources=2, snr_range_db=(-5.0, 5.0),
                     seed=11, out_dir=out, duration_s=1.0)
    return out / "manifest.jsonl"


def test_full_scale_results_are_out_of_scope():
    # The paper-scale configurations exist (msfft2p-paper / msfft3p-paper)
    # but their published-benchmark numbers (~21 dB SI-SNRi two-speaker,
    # ~18.1 dB three-speaker) need a licensed speech corpus and GPU-weeks.
    # This suite deliberately substitutes desk-scale property checks; the
    # claim here is only that the full-scale configs are real and buildable.
    from fusesep.network import SeparationModel, count_parameters

    n2 = count_parameters(SeparationModel(preset("msfft2p-paper")))
    n3 = count_parameters(SeparationModel(preset("msfft3p-paper")))
    ok = n2 > 10**6 and n3 > 10**6
    assert report(
        ok, "full-scale scope",
        f"published-benchmark accuracy not desk-reproducible by design; "
        f"full-scale models instantiate ({n2 / 1e6:.1f}M / {n3 / 1e6:.1f}M "
        f"params) and the property gates below stand in",
    )


def test_chunk_round_trip_suite():
    started = time.monotonic()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        k = 2 * int(rng.integers(1, 33))
        divisors = [p for p in range(1, k + 1) if k % p == 0]
        p = int(divisors[rng.integers(0, len(divisors))])
        d = int(rng.integers(1, 9))
        length = int(rng.integers(1, 400))
        x = torch.tensor(
            rng.standard_normal((d, length)), dtype=torch.float32
        )
        back = overlap_add(segment(x, ChunkSpec(k, p)))
        worst = max(worst, float((back - x).abs().max()))
    took = time.monotonic() - started
    ok = worst < 1e-6 and took < 10.0
    assert report(
        ok, "chunk round trip",
        f"100 random (D,K,P,L) combos, max abs err {worst:.2e} "
        f"(target < 1e-6 f32) in {took:.1f}s (budget 10s)",
    )


def test_scale_and_permutation_suite():
    started = time.monotonic()
    rng = np.random.default_rng(77)

    worst_scale = 0.0
    for _ in range(50):
        est = torch.tensor(rng.standard_normal(300))
        ref = torch.tensor(rng.standard_normal(300))
        alpha = float(rng.uniform(0.1, 10.0))
        drift = abs(float(si_snr(alpha * est, ref) - si_snr(est, ref)))
        worst_scale = max(worst_scale, drift)

    perm_ok = True
    oracle_ok = True
    checked = 0
    for c in (2, 3):
        for _ in range(25):
            ests = rng.standard_normal((c, 150))
            refs = rng.standard_normal((c, 150))
            result = pit_loss(torch.tensor(ests), torch.tensor(refs))
            # feeding the estimates in any order must not change the loss
            order = rng.permutation(c)
            shuffled = pit_loss(torch.tensor(ests[order]), torch.tensor(refs))
            if abs(float(result.loss) - float(shuffled.loss)) > 1e-6:
                perm_ok = False
            want_loss, want_perm = pit_bruteforce(
                ests, refs, lambda e, r: -si_snr_reference(e, r)
            )
            if abs(float(result.loss) - want_loss) > 1e-6:
                oracle_ok = False
            if tuple(result.best_perm.tolist()) != want_perm:
                oracle_ok = False
            checked += 1

    took = time.monotonic() - started
    ok = worst_scale < 1e-6 and perm_ok and oracle_ok and took < 30.0
    assert report(
        ok, "scale/permutation",
        f"SI-SNR scale drift {worst_scale:.2e} dB over alpha in [0.1,10] "
        f"(target < 1e-6); PIT permutation-invariant and equal to the "
        f"brute-force oracle on {checked} instances, C in {{2,3}}; "
        f"{took:.1f}s (budget 30s)",
    )


def test_gradient_suite():
    started = time.monotonic()
    torch.manual_seed(2027)
    results = {}

    def check(name, module, x_shape):
        x = torch.randn(*x_shape, dtype=torch.float64)
        module = module.double()
        with torch.no_grad():
            w = torch.randn_like(module(x))
        results[name] = gradient_check(
            lambda: (module(x) * w).sum(), list(module.parameters())
        )

    check("transformer_layer", TransformerLayer(8, 2, 16), (1, 4, 8))
    check("ss_transformer", SSTransformer(4, 2, 8, 1, 1), (1, 4, 6, 3))
    check("downsample", Downsample(4), (4, 8, 3))
    check("upsample", Upsample(4), (4, 8, 3))

    head = MaskHead(4, 2).double()
    feats = torch.randn(1, 4, 21, dtype=torch.float64)
    z = segment(feats, ChunkSpec(8, 4))
    with torch.no_grad():
        w = torch.randn_like(head(z).masks)
    results["mask_head"] = gradient_check(
        lambda: (head(z).masks * w).sum(), list(head.parameters())
    )

    topo = TopologyConfig(variant="msfft2p", n_stages=2)
    sep = build_separator(topo, 4, 2, 8).double()
    x = torch.randn(1, 4, 8, 3, dtype=torch.float64)
    with torch.no_grad():
        w = torch.randn_like(sep(x))
    results["msfft2p_forward"] = gradient_check(
        lambda: (sep(x) * w).sum(), list(sep.parameters())
    )

    took = time.monotonic() - started
    worst = max(results.values())
    ok = worst < 1e-4 and took < 300.0
    detail = ", ".join(f"{k}={v:.1e}" for k, v in results.items())
    assert report(
        ok, "gradients",
        f"finite differences vs autograd (64-bit): {detail}; worst "
        f"{worst:.1e} (target < 1e-4) in {took:.0f}s (budget 300s)",
    )


def test_topology_suite():
    started = time.monotonic()
    ladders_ok = True
    details = []

    for n in (2, 4, 6):
        sep = build_separator(
            TopologyConfig(variant="msfft2p", n_stages=n), 4, 2, 8
        )
        trace = []
        sep(torch.randn(1, 4, 8, 3), trace=trace)
        want = [(8, 4)] * n
        details.append(f"2p N={n}: {trace == want}")
        ladders_ok &= trace == want

    sep = build_separator(
        TopologyConfig(variant="msfft3p", n_stages=6, exchange_stage=4),
        4, 2, 8,
    )
    trace = []
    sep(torch.randn(1, 4, 8, 3), trace=trace)
    want = [(8, 4)] * 4 + [(8, 4, 2)] * 2
    details.append(f"3p N=6 e=4: {trace == want}")
    ladders_ok &= trace == want

    single = build_separator(
        TopologyConfig(variant="single_path", n_stages=2), 4, 2, 8
    ).eval()
    x = torch.randn(1, 4, 8, 3)
    with torch.no_grad():
        got = single(x)
        manual = x
        for block in single.blocks:
            manual = block(manual)
    composed_ok = torch.equal(got, manual)

    took = time.monotonic() - started
    ok = ladders_ok and composed_ok and took < 60.0
    assert report(
        ok, "topology",
        f"K/2^(p-1) ladders hold ({'; '.join(details)}); single path "
        f"bitwise-equals sequential composition: {composed_ok}; "
        f"{took:.1f}s (budget 60s)",
    )


def test_overfit_smoke(smoke_manifest, tmp_path):
    # Recipe frozen after calibration: lr 5e-3, full-batch (5), 500 steps,
    # no LR decay. Calibration finals at seeds 0/1/2 were 14.0/11.5/13.7 dB.
    started = time.monotonic()
    cfg = TrainConfig(lr0=5e-3, epochs=500, batch_size=5, seed=0,
                      crop_seconds=1.0, decay_start_epoch=10**9)
    result = train(preset("msfft2p-tiny"), cfg, smoke_manifest,
                   smoke_manifest, tmp_path, max_steps=500,
                   validate_every=100)
    score = evaluate(result.final_checkpoint, smoke_manifest).mean_si_snri
    took = time.monotonic() - started
    ok = score >= 10.0 and took < 600.0
    assert report(
        ok, "overfit smoke",
        f"tiny two-path model reaches {score:.2f} dB mean training SI-SNRi "
        f"on 5 fixed mixtures in {result.steps_run} steps (target >= 10 dB "
        f"within 500) in {took:.0f}s (budget 600s)",
    )


def test_fusion_ablation_direction(smoke_manifest, tmp_path):
    # Property, not magnitude: concat fusion should not lose to the
    # sum-everywhere ablation. Report-only when within noise; hard-fail
    # only when every seed reverses the ordering.
    seeds = (0, 1, 2)
    finals = {}
    for mode in ("concat", "sum"):
        sep = dataclasses.replace(preset("msfft2p-tiny"), fusion_mode=mode)
        finals[mode] = []
        for seed in seeds:
            cfg = TrainConfig(lr0=5e-3, epochs=300, batch_size=5, seed=seed,
                              crop_seconds=1.0, decay_start_epoch=10**9)
            result = train(sep, cfg, smoke_manifest, smoke_manifest,
                           tmp_path / f"{mode}{seed}", max_steps=300,
                           validate_every=10**9)
            finals[mode].append(
                evaluate(result.final_checkpoint, smoke_manifest).mean_si_snri
            )

    mean_concat = float(np.mean(finals["concat"]))
    mean_sum = float(np.mean(finals["sum"]))
    per_seed = [
        f"seed {s}: {c:.2f} vs {m:.2f}"
        for s, c, m in zip(seeds, finals["concat"], finals["sum"])
    ]
    reversed_everywhere = all(
        c < m for c, m in zip(finals["concat"], finals["sum"])
    )
    if mean_concat >= mean_sum:
        verdict = f"concat {mean_concat:.2f} dB >= sum {mean_sum:.2f} dB"
        ok = True
    elif not reversed_everywhere:
        verdict = (
            f"concat {mean_concat:.2f} dB < sum {mean_sum:.2f} dB on the "
            f"mean but not on every seed -- within noise, report only"
        )
        ok = True
    else:
        verdict = (
            f"ordering strictly reversed on all seeds "
            f"(concat {mean_concat:.2f} dB < sum {mean_sum:.2f} dB)"
        )
        ok = False
    assert report(ok, "fusion ablation", f"{verdict} [{'; '.join(per_seed)}]")


def test_schedule_and_clipping():
    # LR halves after exactly 3 stagnant validation epochs past the start
    # epoch, under both the full-scale start (85) and a scaled-down one.
    schedule_ok = True
    for start in (85, 3):
        sched = PlateauHalving(start_epoch=start, patience=3, factor=0.5)
        lr = 4e-4
        lrs = []
        for epoch in range(1, start + 4):
            score = 5.0  # flat from the first epoch; best is set pre-start
            lr = sched.update(epoch, score, lr)
            lrs.append(lr)
        # stagnant epochs are start, start+1, start+2; the halving lands on
        # the third one. lrs[i] is the lr coming out of epoch i+1.
        schedule_ok &= lrs[: start + 1] == [4e-4] * (start + 1)
        schedule_ok &= lrs[start + 1] == 2e-4
        schedule_ok &= lrs[start + 2] == 2e-4  # counter reset: no double halve

    p = torch.nn.Parameter(torch.zeros(25))
    p.grad = torch.full((25,), 10.0)  # exactly norm 50
    pre_norm = clip_gradients_([p], 5.0)
    post_norm = float(p.grad.norm())
    clip_ok = pre_norm == 50.0 and post_norm == 5.0

    ok = schedule_ok and clip_ok
    assert report(
        ok, "schedule/clipping",
        f"halving lands exactly on the 3rd stagnant epoch for start epochs "
        f"85 and 3: {schedule_ok}; norm-50 gradient clipped to norm "
        f"{post_norm} exactly: {clip_ok}",
    )


def test_preset_fidelity():
    want = {
        "msfft2p-paper": dict(
            n_filters=512, feature_dim=128, window=16, stride=8, n_heads=16,
            chunk_len=256, chunk_hop=128, ffn_dim=2048, n_intra=4, n_inter=4,
            n_stages=2, variant="msfft2p",
        ),
        "msfft3p-paper": dict(
            n_filters=512, feature_dim=128, window=16, stride=8, n_heads=16,
            chunk_len=256, chunk_hop=128, ffn_dim=2048, n_intra=2, n_inter=2,
            n_stages=6, variant="msfft3p", exchange_stage=4,
        ),
    }
    bad = []
    for name, fields in want.items():
        cfg = preset(name)
        for key, value in fields.items():
            if getattr(cfg, key) != value:
                bad.append(f"{name}.{key}={getattr(cfg, key)} (want {value})")
    ok = not bad and set(want) <= set(PRESETS)
    assert report(
        ok, "preset fidelity",
        "full-scale presets match the published architecture table "
        "field-for-field" if ok else "; ".join(bad),
    )
