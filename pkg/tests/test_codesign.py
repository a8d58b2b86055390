import numpy as np
import pytest

from comorph.codesign import (
    DecompositionTable,
    RunConfig,
    config_to_yaml,
    contribution_report,
    decompose,
    default_config,
    load_artifacts,
    pretrained_vs_finetuned_ratio,
    run,
)
from comorph.codesign.config import PolicyTrainConfig, config_from_dict
from comorph.errors import CheckpointCorrupt, ConfigError, IncompleteTable


def tiny_config(out, **kw):
    base = dict(
        iterations=1,
        rounds=1,
        samples_per_round=3,
        buffer_capacity=2,
        evaluation_episodes=2,
        pretrain_budget=8,
        finetune_budget=0,
        master_seed=9,
        designs=("alpha",),
        output_dir=str(out),
        jobs=2,
        # small CEM population so the tiny budgets are enough
        policy=PolicyTrainConfig(population=8),
    )
    base.update(kw)
    return RunConfig(**base)


# --- configuration -----------------------------------------------------------

def test_default_config_matches_protocol_values():
    c = default_config()
    assert (c.iterations, c.rounds, c.samples_per_round) == (100, 3, 10)
    assert c.buffer_capacity == 5
    assert c.evaluation_episodes == 10
    assert c.optimizer.kind == "evolutionary"


def test_config_yaml_roundtrip():
    import yaml

    c = default_config()
    doc = yaml.safe_load(config_to_yaml(c))
    c2 = config_from_dict(doc)
    assert c2 == c


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_dict({"run": {"iterations": 2, "bogus": 1}})


def test_config_rejects_bad_counts():
    with pytest.raises(ConfigError):
        RunConfig(iterations=0)


# --- decomposition math ------------------------------------------------------

def test_decompose_hand_example():
    table = DecompositionTable(
        n_iterations=1,
        values={(0, 0): 1.0, (1, 0): 2.0, (0, 1): 3.0, (1, 1): 5.0},
    )
    policy_c, morph_c = decompose(table, 1)
    assert policy_c == 1.5
    assert morph_c == 2.5
    assert policy_c + morph_c == 4.0


def test_decompose_constant_table_is_zero():
    values = {(i, j): 7.0 for i in (0, 1, 2) for j in (0, 1, 2)}
    policy_c, morph_c = decompose(DecompositionTable(2, values), 1)
    assert policy_c == 0.0 and morph_c == 0.0


def test_decompose_morph_independent_table():
    values = {(i, j): float(i) for i in (0, 1, 2) for j in (0, 1, 2)}
    policy_c, morph_c = decompose(DecompositionTable(2, values), 1)
    assert morph_c == 0.0
    assert policy_c == 2.0


def test_decompose_identity_randomized():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.choice([2, 4, 6, 10]))
        d = int(rng.choice([dd for dd in (1, 2, 5, n) if n % dd == 0]))
        lattice = range(0, n + 1, d)
        values = {
            (i, j): float(rng.normal(0, 10)) for i in lattice for j in lattice
        }
        table = DecompositionTable(n, values)
        policy_c, morph_c = decompose(table, d)
        delta = values[(n, n)] - values[(0, 0)]
        assert policy_c + morph_c == pytest.approx(delta, abs=1e-12)


def test_decompose_validates_step_and_lattice():
    table = DecompositionTable(3, {(0, 0): 1.0})
    with pytest.raises(IncompleteTable):
        decompose(table, 2)  # 2 does not divide 3
    with pytest.raises(IncompleteTable):
        decompose(DecompositionTable(1, {(0, 0): 1.0}), 1)  # missing entries


def test_shares_normalization_and_degenerate():
    from comorph.codesign.analysis import _shares

    policy_share, morph_share = _shares(1.5, 2.5, 4.0)
    assert policy_share == 0.375
    assert morph_share == 0.625
    assert policy_share + morph_share == 1.0
    assert _shares(1.0, -1.0, 0.0) == (None, None)
    assert _shares(-1.0, 0.5, -0.5) == (None, None)


def test_ratio():
    assert pretrained_vs_finetuned_ratio(27.36, 45.54, 66.89) == pytest.approx(
        0.46, abs=5e-3
    )
    assert pretrained_vs_finetuned_ratio(1.0, 5.0, 5.0) == 1.0
    assert pretrained_vs_finetuned_ratio(1.0, 1.0, 5.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        pretrained_vs_finetuned_ratio(2.0, 3.0, 2.0)


# --- the loop ----------------------------------------------------------------

def test_tiny_run_accounting(tmp_path):
    import time

    config = tiny_config(tmp_path / "run")
    started = time.time()
    artifacts = run(config)
    assert time.time() - started < 60.0  # single-iteration runs are quick
    design = artifacts.designs["alpha"]
    assert len(design.checkpoints) == config.iterations + 1
    assert len(design.buffer.entries) <= config.buffer_capacity
    assert len(design.buffer.entries) > 0
    assert len(design.records) == config.iterations
    assert len(design.sample_rows) == config.rounds * config.samples_per_round
    # every buffer member came from the evaluated samples
    sample_ids = {r["id"] for r in design.sample_rows}
    assert set(design.buffer.ids()) <= sample_ids
    # morphology files exist with sidecars
    for entry in design.buffer.entries:
        xml = artifacts.out_dir / "designs/alpha/morphologies" / f"{entry.morphology.id_hex}.xml"
        assert xml.exists()
        assert xml.with_suffix(".json").exists()


def test_run_is_deterministic(tmp_path):
    a = run(tiny_config(tmp_path / "a"))
    b = run(tiny_config(tmp_path / "b"))
    ra = (a.out_dir / "designs/alpha/scores.csv").read_bytes()
    rb = (b.out_dir / "designs/alpha/scores.csv").read_bytes()
    assert ra == rb
    sa = (a.out_dir / "designs/alpha/samples.csv").read_bytes()
    sb = (b.out_dir / "designs/alpha/samples.csv").read_bytes()
    assert sa == sb


def test_run_refuses_mixed_config_dir(tmp_path):
    out = tmp_path / "run"
    run(tiny_config(out))
    with pytest.raises(ConfigError):
        run(tiny_config(out, master_seed=10))


def test_resume_on_complete_run_is_noop(tmp_path):
    out = tmp_path / "run"
    run(tiny_config(out))
    before = (out / "designs/alpha/scores.csv").read_bytes()
    run(tiny_config(out), resume=True)
    assert (out / "designs/alpha/scores.csv").read_bytes() == before


def test_kill_and_resume_reproduces_logs(tmp_path):
    config_full = tiny_config(tmp_path / "full", iterations=3)
    run(config_full)

    class Stop(Exception):
        pass

    def killer(design, iteration):
        if iteration == 1:
            raise Stop

    config_killed = tiny_config(tmp_path / "killed", iterations=3)
    with pytest.raises(Stop):
        run(config_killed, iteration_callback=killer)
    run(config_killed, resume=True)
    for rel in ("designs/alpha/scores.csv", "designs/alpha/samples.csv",
                "designs/alpha/buffer.jsonl", "summary.csv"):
        assert (tmp_path / "full" / rel).read_bytes() == (
            tmp_path / "killed" / rel
        ).read_bytes()


def test_corrupt_state_raises(tmp_path):
    out = tmp_path / "run"
    run(tiny_config(out))
    state_path = out / "state" / "alpha.pkl"
    state_path.write_bytes(b"not a pickle")
    with pytest.raises(CheckpointCorrupt):
        run(tiny_config(out), resume=True)


def test_monotone_training_metric(tmp_path):
    config = tiny_config(
        tmp_path / "run", iterations=3, finetune_budget=9, samples_per_round=4
    )
    artifacts = run(config)
    best = [rec["best_score"] for rec in artifacts.designs["alpha"].records]
    assert all(b >= a - 1e-12 for a, b in zip(best, best[1:]))


def test_summary_improvement_consistent(tmp_path):
    config = tiny_config(tmp_path / "run", iterations=2, finetune_budget=9)
    artifacts = run(config)
    lines = (artifacts.out_dir / "summary.csv").read_text().strip().splitlines()
    assert lines[0] == "design,base_return,final_return,improvement_pct"
    for line in lines[1:]:
        name, base, final, pct = line.split(",")
        assert abs(float(pct) - (float(final) - float(base)) / float(base) * 100.0) < 1e-9


def test_events_log_has_timestamp_field(tmp_path):
    config = tiny_config(tmp_path / "run")
    artifacts = run(config)
    import json

    lines = (artifacts.out_dir / "events.jsonl").read_text().strip().splitlines()
    events = [json.loads(line) for line in lines]
    assert all("ts" in e and "event" in e for e in events)
    assert {"pretrain", "iteration"} <= {e["event"] for e in events}


def test_load_artifacts_roundtrip(tmp_path):
    out = tmp_path / "run"
    run(tiny_config(out))
    loaded = load_artifacts(out)
    assert "alpha" in loaded.designs
    assert loaded.designs["alpha"].records
    assert loaded.config.master_seed == 9


def test_contribution_report_on_tiny_run(tmp_path):
    config = tiny_config(tmp_path / "run", iterations=2, finetune_budget=9)
    artifacts = run(config)
    results = contribution_report(artifacts, episodes=2)
    r = results["alpha"]
    total = r.policy_contribution + r.morph_contribution
    assert total == pytest.approx(r.delta_j, abs=1e-12)
    if not r.degenerate:
        assert r.policy_share + r.morph_share == 1.0
