"""Acceptance gate: every primary criterion at its stated tolerance.

Each criterion prints one PASS/FAIL line (run with -s to see them).  The
grounded-counterfactual criteria are timed (< 1 s each); the whole module is
sized to keep the full suite under a minute on a laptop.
"""

import random
import time
from contextlib import contextmanager

import pytest

from causalatlas.atlas import diff_worlds
from causalatlas.core import (
    Context,
    ContextRule,
    ROOT_CONTEXT_ID,
    assign_contexts,
    build_site,
    ingest_episodes,
    ingest_evidence,
    load_cover_spec,
)
from causalatlas.intervene import (
    InterventionSpec,
    group_mean_substitution,
    index_substitution,
    load_grid_csv,
    load_panel_csv,
    rebuild_world,
    run_grounded_intervention,
    scale_map_counterfactual,
)
from causalatlas.pipeline import BuildInputs, RunConfig, build_world
from causalatlas.psr import SmoothingConfig, estimate_cell
from causalatlas.sheaf import (
    ToleranceConfig,
    gluing_tension,
    restriction_check,
    try_glue,
)
from causalatlas.synthlab import (
    ClaimTemplate,
    DriftPlanEntry,
    OverlapPlan,
    Regime,
    RegimeSpec,
    generate_corpus,
    score_recovery,
)

import fixtures
from test_sheaf import make_section


@contextmanager
def criterion(name):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"FAIL {name}")
        raise
    print(f"PASS {name} ({time.perf_counter() - start:.2f}s)")


@contextmanager
def under_one_second(name):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"{name} took {elapsed:.2f}s (limit 1s)"


# ---------------------------------------------------------------------------
# Grounded-counterfactual arithmetic
# ---------------------------------------------------------------------------


def test_microplastics_arithmetic(tmp_path):
    with criterion("microplastics: factor/suppression/weighted means"):
        with under_one_second("microplastics"):
            grid = load_grid_csv(fixtures.microplastics_grid(tmp_path))
            result = scale_map_counterfactual(grid, fixtures.MICRO_M_BASE, fixtures.MICRO_M_CF)
            assert result.extra["factor"] == pytest.approx(0.0940, abs=1e-4)
            assert 100 * result.extra["suppressed_fraction"] == pytest.approx(90.60, abs=0.05)
            assert result.baseline == pytest.approx(0.03914, abs=1e-9)
            assert result.counterfactual == pytest.approx(0.00368, abs=1e-5)
            assert result.baseline - result.counterfactual == pytest.approx(0.03546, abs=1e-5)


def test_indus_arithmetic():
    with criterion("indus: station index 91.51 / +8.49 / 9.28%"):
        with under_one_second("indus"):
            result = index_substitution(fixtures.INDUS_ANOMALIES)
            assert len(fixtures.INDUS_ANOMALIES) == 18
            assert result.baseline == pytest.approx(91.51, abs=1e-9)
            assert result.effect == pytest.approx(8.49, abs=1e-9)
            assert 100 * result.relative_effect == pytest.approx(9.28, abs=0.02)


def test_signaling_panel_arithmetic(tmp_path):
    with criterion("signaling panel: shift +1.025 / 25.8% / co-shift order"):
        with under_one_second("signaling"):
            panel = load_panel_csv(fixtures.signaling_panel(tmp_path))
            result = group_mean_substitution(panel, "e2", "e0", fixtures.FOCUS_MARKERS, "log1p")
            assert result.effect == pytest.approx(1.025, abs=1e-3)
            assert 100 * result.relative_effect == pytest.approx(25.8, abs=0.1)
            co = result.extra["co_shift"]
            assert co["PKA->Akt"] > co["PKA->Erk"]
            assert co["PKA->Akt"] == pytest.approx(1.25, abs=1e-6)
            assert co["PKA->Erk"] == pytest.approx(1.06, abs=1e-6)


def test_projection_panel_arithmetic(tmp_path):
    with criterion("projection panel: 0.210 vs 0.059, attenuation in [71.2%, 72.2%]"):
        with under_one_second("projection"):
            panel = load_panel_csv(fixtures.projection_panel(tmp_path))
            result = group_mean_substitution(
                panel, "STeg", "MMus", ["AUD", "PAG"], "fraction", group_column="species"
            )
            assert result.baseline == pytest.approx(0.210, abs=1e-12)
            assert result.counterfactual == pytest.approx(0.059, abs=1e-12)
            assert result.baseline - result.counterfactual == pytest.approx(0.151, abs=1e-12)
            relative = 100 * abs(result.effect) / result.baseline
            assert 71.2 <= relative <= 72.2


# ---------------------------------------------------------------------------
# Rebuild bookkeeping
# ---------------------------------------------------------------------------


def test_rebuild_bookkeeping(tmp_path):
    with criterion("rebuild bookkeeping: indus 3 modified / 5 events / 6 PSRs / 5 checks"):
        store, _ = ingest_episodes(fixtures.indus_episodes(tmp_path))
        spec = InterventionSpec.from_file(
            fixtures.indus_spec(tmp_path, fixtures.indus_stations(tmp_path))
        )
        bundle, _, modified = run_grounded_intervention(store, {}, RunConfig(), spec, base_dir=tmp_path)
        assert modified == 3
        assert bundle.event_count == 5
        assert len(bundle.psrs) == 6
        assert len(bundle.diagnostics.restrictions) == 5

    with criterion("rebuild bookkeeping: microplastics 6 modified + counterfactual contexts"):
        store, _ = ingest_episodes(fixtures.microplastics_episodes(tmp_path))
        spec = InterventionSpec.from_file(
            fixtures.microplastics_spec(tmp_path, fixtures.microplastics_grid(tmp_path))
        )
        bundle, _, modified = run_grounded_intervention(store, {}, RunConfig(), spec, base_dir=tmp_path)
        assert modified == 6
        contexts = {p.context_id for p in bundle.psrs}
        assert "counterfactual_white_mnp_optics" in contexts
        assert "counterfactual_mnp_direct_radiative_forcing" in contexts
        assert "counterfactual_regional_mnp_forcing_hotspots" in contexts


# ---------------------------------------------------------------------------
# Structural shape checks
# ---------------------------------------------------------------------------


def _shape_restriction(tmp_path, name, unique, total, max_tests=None):
    path = fixtures.shape_fixture(tmp_path, name, unique, total)
    store, _ = ingest_episodes(path)
    assignment = assign_contexts(
        store,
        [ContextRule(context=name, field="relation", equals="affects")],
        [Context(name, name)],
    )
    site = build_site(assignment)
    from causalatlas.pipeline import _build_psrs
    from causalatlas.sheaf import section_of

    psrs, _ = _build_psrs(store, site, SmoothingConfig(max_tests=max_tests))
    by_id = {p.context_id: p for p in psrs}
    root = section_of(by_id[ROOT_CONTEXT_ID], store)
    local = section_of(by_id[name], store)
    return restriction_check(root, local), by_id[name]


def test_structural_shape_checks(tmp_path):
    with criterion("shape: 45x45 -> 2,025 shared cells"):
        diag, psr = _shape_restriction(tmp_path, "larval", unique=45, total=46)
        assert psr.shape == (45, 45)
        assert diag.shared_cells == 2025
    with criterion("shape: 41x40 -> 1,640 shared cells"):
        diag, psr = _shape_restriction(tmp_path, "subpolar", unique=41, total=44, max_tests=40)
        assert psr.shape == (41, 40)
        assert diag.shared_cells == 1640
    with criterion("shape: 30x30 -> 900 shared cells"):
        diag, psr = _shape_restriction(tmp_path, "focus", unique=30, total=38)
        assert psr.shape == (30, 30)
        assert diag.shared_cells == 900


# ---------------------------------------------------------------------------
# Property suites (substituting for the paper's LLM-run statistics)
# ---------------------------------------------------------------------------


def test_estimator_properties():
    rng = random.Random(20240814)
    with criterion("estimator: backoff limit (1,000 randomized cases)"):
        for _ in range(1000):
            n = rng.randint(0, 500)
            total = n + rng.randint(0, 500)
            p0 = rng.random()
            assert abs(estimate_cell(n, total, 1e9, p0) - p0) < 1e-6
    with criterion("estimator: support monotonicity (1,000 randomized cases)"):
        for _ in range(1000):
            n = rng.randint(0, 500)
            total = n + rng.randint(0, 500)
            alpha = 10 ** rng.uniform(-6, 6)
            p0 = rng.random()
            assert estimate_cell(n + 1, total + 1, alpha, p0) >= estimate_cell(n, total, alpha, p0) - 1e-12
    with criterion("estimator: row sub-normalization (1,000 randomized cases)"):
        for _ in range(1000):
            width = rng.randint(1, 9)
            row = [rng.randint(0, 30) for _ in range(width)]
            alpha = 10 ** rng.uniform(-3, 2)
            total = sum(row)
            values = [estimate_cell(c, total, alpha, 1.0 / width) for c in row]
            assert sum(values) <= 1.0 + 1e-9
            assert sum(values) == pytest.approx(1.0, abs=1e-9)


def test_sheaf_properties():
    rng = random.Random(77)
    with criterion("sheaf: self-restriction gap is zero"):
        for trial in range(50):
            cells = {
                (f"h{i}", f"t{j}"): (rng.random(), rng.randint(0, 8))
                for i in range(rng.randint(1, 5))
                for j in range(rng.randint(1, 5))
            }
            sec = make_section("u", cells)
            diag = restriction_check(sec, sec)
            assert diag.mean_gap == 0.0 and diag.max_gap == 0.0
    with criterion("sheaf: zero tension iff equal overlaps, and then no obstruction"):
        for trial in range(50):
            shared = {(f"h{i}", f"t{i}"): (rng.random(), 5.0) for i in range(rng.randint(1, 6))}
            a = make_section("a", shared)
            b = make_section("b", dict(shared))
            overlaps, total = gluing_tension([a, b])
            assert total == 0.0
            assert try_glue([a, b], "cover").obstruction is None
            # perturb one shared cell: tension must become positive
            key = next(iter(shared))
            bumped = dict(shared)
            value, support = bumped[key]
            bumped[key] = (min(1.0, value + 0.5) if value < 0.5 else value - 0.5, support)
            _, total2 = gluing_tension([a, make_section("b", bumped)])
            assert total2 > 0.0
    with criterion("sheaf: glue-then-restrict within eps"):
        tol = ToleranceConfig()
        for trial in range(50):
            base = {(f"h{i}", f"t{i}"): (rng.random(), float(rng.randint(2, 9))) for i in range(4)}
            wiggled = {
                k: (min(1.0, max(0.0, v + rng.uniform(-tol.eps_glue, tol.eps_glue) / 2)), s)
                for k, (v, s) in base.items()
            }
            a, b = make_section("a", base), make_section("b", wiggled)
            outcome = try_glue([a, b], "cover", tol)
            glued = outcome.section
            for sec in (a, b):
                for key, cell in sec.cells.items():
                    if key in glued.cells:
                        assert abs(glued.cells[key].value - cell.value) <= tol.eps_glue + 1e-12
    with criterion("sheaf: cell accounting on randomized covers"):
        for trial in range(100):
            sections = []
            for s in range(rng.randint(1, 4)):
                cells = {
                    (f"h{rng.randint(0, 6)}", f"t{rng.randint(0, 6)}"): (
                        rng.random(),
                        float(rng.randint(0, 6)),
                    )
                    for _ in range(rng.randint(1, 12))
                }
                sections.append(make_section(f"s{s}", cells))
            outcome = try_glue(sections, "cover")
            assert outcome.accounting_ok()


def _synth_bundle(tmp_path, spec, epoch2=False):
    corpus = generate_corpus(spec, tmp_path)
    if epoch2:
        evidence = ingest_evidence(tmp_path / "evidence_epoch2.jsonl")
        store, _ = ingest_episodes(corpus.epoch2_path, evidence=evidence)
    else:
        evidence = ingest_evidence(corpus.evidence_path)
        store, _ = ingest_episodes(corpus.episodes_path, evidence=evidence)
    cover = load_cover_spec(corpus.cover_path)
    return build_world(BuildInputs(store=store, cover_data=cover), RunConfig())


def test_end_to_end_soundness(tmp_path):
    regimes = [
        Regime("regime_a", [ClaimTemplate("x", "y", "positive", 4)], {"regime_id": "regime_a"}),
        Regime("regime_b", [ClaimTemplate("p", "q", "positive", 4)], {"regime_id": "regime_b"}),
    ]
    with criterion("end-to-end: agreement plan yields zero obstructions"):
        spec = RegimeSpec(
            seed=5,
            regimes=regimes,
            overlap_plan=[OverlapPlan(("x", "shared"), ("regime_a", "regime_b"), conflict=False)],
        )
        bundle = _synth_bundle(tmp_path / "agree", spec)
        assert bundle.diagnostics.obstructions == []

    with criterion("end-to-end: planted conflict recalled at 1.0 as contradiction"):
        spec = RegimeSpec(
            seed=5,
            regimes=regimes,
            overlap_plan=[OverlapPlan(("x", "shared"), ("regime_a", "regime_b"), conflict=True)],
        )
        bundle = _synth_bundle(tmp_path / "conflict", spec)
        score = score_recovery(bundle, spec)
        assert score.obstruction_recall == 1.0
        found = [
            cell
            for ob in bundle.diagnostics.obstructions
            for cell in ob.cells
            if tuple(cell.cell) == ("x", "shared")
        ]
        assert found and all(c.classification == "contradiction" for c in found)

    with criterion("end-to-end: planted epoch drift recalled at 1.0"):
        spec = RegimeSpec(
            seed=5,
            regimes=regimes,
            drift_plan=[DriftPlanEntry(("x", "y"), "polarity_flip")],
        )
        bundle_1 = _synth_bundle(tmp_path / "drift", spec)
        bundle_2 = _synth_bundle(tmp_path / "drift", spec, epoch2=True)
        diff = diff_worlds(bundle_1, bundle_2)
        score = score_recovery(bundle_2, spec, diff=diff)
        assert score.drift_recall == 1.0


def test_rerun_consistency(tmp_path):
    with criterion("rerun consistency: bitwise-identical builds, empty diff"):
        store, _ = ingest_episodes(fixtures.ocean_corpus(tmp_path))
        a = build_world(BuildInputs(store=store, cover_data={}), RunConfig())
        store2, _ = ingest_episodes(tmp_path / "ocean_episodes.jsonl")
        b = build_world(BuildInputs(store=store2, cover_data={}), RunConfig())
        assert a.to_json() == b.to_json()
        assert diff_worlds(a, b).empty


def test_identity_interventions_are_noops(tmp_path):
    with criterion("identity interventions: end-to-end no-ops"):
        store, _ = ingest_episodes(fixtures.ocean_corpus(tmp_path))
        config = RunConfig()
        baseline = build_world(BuildInputs(store=store, cover_data={}), config)
        rebuilt = rebuild_world(store, {}, config)
        assert rebuilt.to_json() == baseline.to_json()
        identity = InterventionSpec(kind="grounded", rewrites=[])
        bundle, substrate, modified = run_grounded_intervention(store, {}, config, identity)
        assert modified == 0 and substrate is None
        assert bundle.to_json() == baseline.to_json()
        assert diff_worlds(baseline, bundle).empty
