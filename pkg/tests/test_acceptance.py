"""Acceptance suite: one test per criterion, one printed PASS line each.

Criteria 6-8 share a seeded two-design co-design fixture (30 iterations)
executed once per session; criterion 8 additionally reruns it from scratch
and replays a kill-plus-resume at iteration 15.
"""

import math
import time

import numpy as np
import pytest

from comorph.buffer import PriorityBuffer, merge_topk
from comorph.codesign import (
    DecompositionTable,
    RunConfig,
    contribution_report,
    decompose,
    run,
)
from comorph.codesign.config import OptimizerConfig
from comorph.mjcf import (
    apply_factors,
    apply_morphology,
    canonical_serialize,
    content_hash,
    parse_file,
)
from comorph.morphology import materialize
from comorph.morphspace import from_normalized, identity_params, sample_uniform
from comorph.optim import make_optimizer
from comorph.sim2d import step_reward
from comorph.sim2d.robot import builtin_design_dir

from test_buffer import entry as buffer_entry
from test_sim2d import _state_with

ALPHA_GOLDEN_HASH = "58034f865039e658"

# Golden values recorded from the reference run of the toy fixture below
# (first run on the shipped code; asserted within 1% thereafter).
TOY_GOLDEN = {
    "alpha": {"base": 43.89556430175256, "final": 216.97989265069378},
    "beta": {"base": 33.196957335115336, "final": 45.59077101374269},
}


def toy_config(out_dir) -> RunConfig:
    return RunConfig(
        iterations=30,
        rounds=3,
        samples_per_round=10,
        buffer_capacity=5,
        evaluation_episodes=10,
        pretrain_budget=128,
        finetune_budget=65,
        master_seed=2024,
        designs=("alpha", "beta"),
        output_dir=str(out_dir),
        jobs=None,
        optimizer=OptimizerConfig(kind="evolutionary"),
    )


def report(criterion: int, ok: bool, detail: str):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy") / "reference"
    started = time.time()
    artifacts = run(toy_config(out))
    artifacts.elapsed = time.time() - started
    return artifacts


# -- criterion 1: decomposition identity --------------------------------------

def test_criterion_1_decomposition_identity():
    started = time.time()
    table = DecompositionTable(
        n_iterations=1,
        values={(0, 0): 1.0, (1, 0): 2.0, (0, 1): 3.0, (1, 1): 5.0},
    )
    policy_c, morph_c = decompose(table, 1)
    exact = policy_c == 1.5 and morph_c == 2.5 and policy_c + morph_c == 4.0

    rng = np.random.default_rng(20240001)
    worst = 0.0
    for _ in range(1000):
        n = 10
        d = int(rng.choice([1, 2, 5, 10]))
        lattice = range(0, n + 1, d)
        values = {
            (i, j): float(rng.normal(0.0, 50.0))
            for i in lattice
            for j in lattice
        }
        pc, mc = decompose(DecompositionTable(n, values), d)
        delta = values[(n, n)] - values[(0, 0)]
        worst = max(worst, abs(pc + mc - delta))
    elapsed = time.time() - started
    report(
        1,
        exact and worst < 1e-12 and elapsed < 1.0,
        f"hand example exact, 1000 tables max residual {worst:.2e}, "
        f"{elapsed:.2f}s",
    )


# -- criterion 2: buffer law ---------------------------------------------------

def test_criterion_2_buffer_law():
    started = time.time()
    rng = np.random.default_rng(20240002)
    cases = 0
    ok = True
    while cases < 10_000:
        capacity = int(rng.integers(1, 7))
        ids = rng.permutation(64)[: rng.integers(8, 64)]
        score_of = {int(i): float(rng.uniform(-50, 50)) for i in ids}
        buf = PriorityBuffer(capacity=capacity)
        seen = {}
        prev_min = -math.inf
        order = rng.permutation(list(score_of))
        for start in range(0, len(order), 5):
            batch_ids = [int(i) for i in order[start : start + 5]]
            batch = [buffer_entry(i, score_of[i]) for i in batch_ids]
            buf = merge_topk(buf, batch)
            cases += 1
            for e in batch:
                seen[e.morphology.id_hex] = e
            brute = sorted(
                seen.values(), key=lambda e: (-e.score, e.morphology.id_hex)
            )[:capacity]
            ok = ok and list(buf.entries) == brute
            if len(buf.entries) == capacity:
                ok = ok and buf.min_score >= prev_min - 1e-15
                prev_min = buf.min_score
    elapsed = time.time() - started
    report(2, ok and elapsed < 5.0,
           f"{cases} merge events match brute force, min monotone, {elapsed:.2f}s")


# -- criterion 3: optimizer convergence ----------------------------------------

def test_criterion_3_optimizer_convergence():
    started = time.time()
    sphere = lambda x: -float(np.sum((x - 0.7) ** 2))

    cma = make_optimizer("cmaes", dim=6, seed=33)
    evals = 0
    while evals < 5000:
        pts = cma.ask(9)
        cma.tell(pts, [sphere(x) for x in pts])
        evals += len(pts)
    cma_dist = float(np.linalg.norm(cma.best_so_far[0] - 0.7))

    bayes = make_optimizer("bayesopt", dim=1, seed=44)
    for _ in range(50):
        pts = bayes.ask(1)
        bayes.tell(pts, [sphere(x) for x in pts])
    bayes_dist = abs(float(bayes.best_so_far[0][0]) - 0.7)

    from comorph.benchfns import get_function

    rastrigin = get_function("rastrigin").fn
    evo = make_optimizer("evolutionary", dim=6, seed=55)
    curve = []
    for _ in range(100):
        pts = evo.ask(50)
        evo.tell(pts, [rastrigin(x) for x in pts])
        curve.append(evo.best_so_far[1])
    evo_monotone = all(b >= a for a, b in zip(curve, curve[1:]))
    evo_improved = curve[-1] > curve[0]

    elapsed = time.time() - started
    report(
        3,
        cma_dist < 1e-3 and bayes_dist < 1e-2 and evo_monotone and evo_improved
        and elapsed < 120.0,
        f"CMA-ES sphere dist {cma_dist:.2e} (<=5000 evals), BayesOpt 1-D dist "
        f"{bayes_dist:.2e} (<=50 evals), evolutionary best-so-far monotone "
        f"over 100 generations, {elapsed:.1f}s",
    )


# -- criterion 4: reward conformance -------------------------------------------

def test_criterion_4_reward_conformance():
    model_dir = builtin_design_dir("alpha")
    from comorph.sim2d import load_robot

    model = load_robot(model_dir / "robot.yaml")
    zero5 = np.zeros(5)

    perfect = step_reward(model, _state_with(model, 1.0, 0.0, zero5), zero5, zero5, 0)
    ok = abs(perfect.total - 2.25) < 1e-12

    at_threshold = step_reward(
        model, _state_with(model, 0.4, 0.0, zero5), zero5, zero5, 0
    )
    ok = ok and at_threshold.r_pitch == 0.0

    up_09 = step_reward(model, _state_with(model, 0.9, 0.0, zero5), zero5, zero5, 0)
    ok = ok and abs(up_09.r_up - math.exp(-0.1)) < 1e-12

    report(
        4,
        ok,
        "perfect stand total 2.25, pitch indicator strict at 0.4, "
        "upright term exp(-0.1) at 0.9 (all to 1e-12)",
    )


# -- criterion 5: MJCF laws ----------------------------------------------------

def test_criterion_5_mjcf_laws(space, link_map):
    started = time.time()
    doc = parse_file(builtin_design_dir("alpha") / "model.xml")

    identity = apply_morphology(doc, identity_params(space), link_map)
    identity_ok = canonical_serialize(identity) == canonical_serialize(doc)

    rng = np.random.default_rng(20240005)
    comp_ok = True
    for _ in range(5):
        p1 = from_normalized(rng.uniform(0.1, 0.9, space.free_dim_count), space)
        p2 = from_normalized(rng.uniform(0.1, 0.9, space.free_dim_count), space)
        seq = apply_morphology(apply_morphology(doc, p1, link_map), p2, link_map)
        prod = apply_factors(
            doc,
            {
                link: {
                    cat: p1.factors_for(link)[cat] * p2.factors_for(link)[cat]
                    for cat in p1.factors_for(link)
                }
                for link in space.link_names
            },
            link_map,
        )
        comp_ok = comp_ok and _numeric_tree_equal(seq.root, prod.root, 1e-9)

    ids = {
        materialize(doc, sample_uniform(space, rng), link_map).id_hex
        for _ in range(100)
    }
    golden_ok = content_hash(doc).hash_hex == ALPHA_GOLDEN_HASH
    elapsed = time.time() - started
    report(
        5,
        identity_ok and comp_ok and len(ids) == 100 and golden_ok
        and elapsed < 5.0,
        f"identity byte-exact, composition to 1e-9, 100/100 distinct ids, "
        f"golden hash {ALPHA_GOLDEN_HASH}, {elapsed:.2f}s",
    )


def _numeric_tree_equal(a, b, rel):
    if a.tag != b.tag or list(a.attrs) != list(b.attrs):
        return False
    for key in a.attrs:
        va, vb = a.attrs[key], b.attrs[key]
        try:
            fa = [float(t) for t in va.split()]
            fb = [float(t) for t in vb.split()]
        except ValueError:
            if va != vb:
                return False
            continue
        for x, y in zip(fa, fb):
            scale = max(abs(x), abs(y), 1e-12)
            if abs(x - y) / scale > rel:
                return False
    if len(a.children) != len(b.children):
        return False
    return all(
        _numeric_tree_equal(ca, cb, rel) for ca, cb in zip(a.children, b.children)
    )


# -- criterion 6: monotone bi-update -------------------------------------------

def test_criterion_6_monotone_biupdate(toy_run):
    ok = True
    details = []
    for name, design in toy_run.designs.items():
        best = [rec["best_score"] for rec in design.records]
        monotone = all(b >= a for a, b in zip(best, best[1:]))
        improvement = (design.final_heldout - design.base_heldout) / design.base_heldout
        golden = TOY_GOLDEN[name]
        golden_ok = (
            golden["base"] is not None
            and abs(design.base_heldout - golden["base"]) <= 0.01 * abs(golden["base"])
            and abs(design.final_heldout - golden["final"]) <= 0.01 * abs(golden["final"])
        )
        ok = ok and monotone and improvement >= 0.20 and golden_ok
        details.append(
            f"{name}: train metric monotone={monotone}, held-out "
            f"{design.base_heldout:.2f}->{design.final_heldout:.2f} "
            f"({improvement:+.1%}), golden within 1%={golden_ok}"
        )
    elapsed = getattr(toy_run, "elapsed", float("nan"))
    report(6, ok and elapsed < 1800.0, "; ".join(details) + f"; run {elapsed:.0f}s")


# -- criterion 7: contribution report sanity -------------------------------------

def test_criterion_7_contribution_sanity(toy_run):
    started = time.time()
    results = contribution_report(toy_run)
    ok = True
    details = []
    for name, r in results.items():
        finite = math.isfinite(r.policy_contribution) and math.isfinite(
            r.morph_contribution
        )
        shares_ok = (
            not r.degenerate
            and r.policy_share + r.morph_share == 1.0
            and r.morph_share > 0.0
        )
        ok = ok and finite and shares_ok
        details.append(
            f"{name}: policy {r.policy_share:.3f} + morphology {r.morph_share:.3f} "
            f"of delta {r.delta_j:.2f}"
        )
    elapsed = time.time() - started
    report(7, ok and elapsed < 300.0, "; ".join(details) + f"; {elapsed:.0f}s")


# -- criterion 8: determinism and resume -----------------------------------------

def test_criterion_8_determinism_and_resume(toy_run, tmp_path_factory):
    started = time.time()
    log_files = (
        "designs/alpha/scores.csv",
        "designs/alpha/samples.csv",
        "designs/alpha/buffer.jsonl",
        "designs/beta/scores.csv",
        "designs/beta/samples.csv",
        "designs/beta/buffer.jsonl",
        "summary.csv",
    )

    rerun_dir = tmp_path_factory.mktemp("toy-rerun") / "out"
    run(toy_config(rerun_dir))
    rerun_ok = all(
        (toy_run.out_dir / rel).read_bytes() == (rerun_dir / rel).read_bytes()
        for rel in log_files
    )

    class Killed(Exception):
        pass

    def kill_at_15(design, iteration):
        if design == "beta" and iteration == 15:
            raise Killed

    resume_dir = tmp_path_factory.mktemp("toy-resume") / "out"
    with pytest.raises(Killed):
        run(toy_config(resume_dir), iteration_callback=kill_at_15)
    run(toy_config(resume_dir), resume=True)
    resume_ok = all(
        (toy_run.out_dir / rel).read_bytes() == (resume_dir / rel).read_bytes()
        for rel in log_files
    )
    elapsed = time.time() - started
    report(
        8,
        rerun_ok and resume_ok and elapsed < 2100.0,
        f"rerun bit-identical={rerun_ok}, kill@15+resume bit-identical="
        f"{resume_ok}, {elapsed:.0f}s",
    )
