"""CLI exit-code contracts, run-directory layout, rerun determinism, and the
HTTP service surface."""

import json
import threading
import urllib.error
import urllib.parse
import urllib.request
from pathlib import Path

import pytest

from causalatlas.cli import main
from causalatlas.service import make_server

import fixtures


def write_config(tmp_path, episodes, out, **extra) -> Path:
    config = {"episodes": str(episodes), "output": str(out)}
    config.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------


def test_build_minimal_fixture(tmp_path, capsys):
    episodes = fixtures.write_jsonl(
        tmp_path / "one.jsonl",
        [{"id": "ep1", "source_doc": "d", "events": [fixtures.event("a", "m", "b", "causes", "e1")]}],
    )
    rc = main(["build", "--config", str(write_config(tmp_path, episodes, tmp_path / "run"))])
    assert rc == 0
    out = capsys.readouterr().out
    assert "1 episodes" in out
    run = tmp_path / "run"
    files = sorted(p.name for p in run.iterdir() if p.is_file())
    assert files == ["atlas.html", "atlas.json", "bundle.json", "diagnostics.json", "state.json"]


def test_build_summary_matches_bundle(tmp_path, capsys):
    episodes = fixtures.ocean_corpus(tmp_path)
    rc = main(["build", "--config", str(write_config(tmp_path, episodes, tmp_path / "run"))])
    assert rc == 0
    bundle = json.loads((tmp_path / "run" / "bundle.json").read_text())
    summary = bundle["summary"]
    assert summary["episodes"] == 11
    n = summary["contexts"]
    checks = summary["compatible_restrictions"] + summary["divergent_restrictions"]
    assert checks == n - 1
    out = capsys.readouterr().out
    assert f"{summary['episodes']} episodes" in out
    assert f"{n} contexts" in out
    assert f"{checks} restriction checks" in out


def test_build_rerun_identical_contents(tmp_path):
    episodes = fixtures.ocean_corpus(tmp_path)
    rc1 = main(["build", "--config", str(write_config(tmp_path, episodes, tmp_path / "run_a"))])
    rc2 = main(["build", "--config", str(write_config(tmp_path, episodes, tmp_path / "run_b"))])
    assert rc1 == rc2 == 0
    for name in ("bundle.json", "atlas.json", "diagnostics.json", "state.json", "atlas.html"):
        assert (tmp_path / "run_a" / name).read_bytes() == (tmp_path / "run_b" / name).read_bytes(), name
    for sub in ("tables", "figures"):
        names_a = sorted(p.name for p in (tmp_path / "run_a" / sub).iterdir())
        names_b = sorted(p.name for p in (tmp_path / "run_b" / sub).iterdir())
        assert names_a == names_b
        for name in names_a:
            assert (tmp_path / "run_a" / sub / name).read_bytes() == (
                tmp_path / "run_b" / sub / name
            ).read_bytes(), name


def test_build_missing_episodes_usage_error(tmp_path, capsys):
    rc = main(["build", "--config", str(write_config(tmp_path, tmp_path / "ghost.jsonl", tmp_path / "run"))])
    assert rc == 2


def test_build_pipeline_failure_removes_partial_output(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("")  # empty input fails in the ingest stage
    rc = main(["build", "--config", str(write_config(tmp_path, bad, tmp_path / "run"))])
    assert rc == 3
    assert not (tmp_path / "run").exists()
    assert "stage ingest" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# intervene + diff
# ---------------------------------------------------------------------------


def _built_run(tmp_path, episodes) -> Path:
    out = tmp_path / "base"
    assert main(["build", "--config", str(write_config(tmp_path, episodes, out))]) == 0
    return out


def test_intervene_identity_empty_diff(tmp_path):
    base = _built_run(tmp_path, fixtures.ocean_corpus(tmp_path))
    spec = tmp_path / "identity.json"
    spec.write_text(json.dumps({"kind": "grounded", "rewrites": []}))
    out = tmp_path / "cf"
    assert main(["intervene", "--base", str(base), "--spec", str(spec), "--out", str(out)]) == 0
    diff = json.loads((out / "diff.json").read_text())
    assert diff["empty"]
    assert main(["diff", str(base), str(out)]) == 0


def test_intervene_microplastics_counterfactual_contexts(tmp_path, capsys):
    base = _built_run(tmp_path, fixtures.microplastics_episodes(tmp_path))
    grid = fixtures.microplastics_grid(tmp_path)
    spec = fixtures.microplastics_spec(tmp_path, grid)
    out = tmp_path / "cf"
    assert main(["intervene", "--base", str(base), "--spec", str(spec), "--out", str(out)]) == 0
    bundle = json.loads((out / "bundle.json").read_text())
    contexts = {p["context_id"] for p in bundle["psrs"]}
    assert "counterfactual_white_mnp_optics" in contexts
    diff = json.loads((out / "diff.json").read_text())
    added = {t["context"] for t in diff["topological"] if t["change"] == "context_added"}
    assert "counterfactual_white_mnp_optics" in added
    assert bundle["intervention"]["modified_events"] == 6
    assert main(["diff", str(base), str(out)]) == 1  # drift found


def test_intervene_indus_substrate_output(tmp_path, capsys):
    base = _built_run(tmp_path, fixtures.indus_episodes(tmp_path))
    spec = fixtures.indus_spec(tmp_path, fixtures.indus_stations(tmp_path))
    out = tmp_path / "cf"
    assert main(["intervene", "--base", str(base), "--spec", str(spec), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "91.51" in stdout
    bundle = json.loads((out / "bundle.json").read_text())
    assert bundle["substrate_results"][0]["baseline"] == pytest.approx(91.51)
    assert (out / "figures" / "substrate_0.png").exists()


def test_diff_missing_file_usage_error(tmp_path, capsys):
    assert main(["diff", str(tmp_path / "nope_a"), str(tmp_path / "nope_b")]) == 2


def test_diff_planted_flip_exit_one(tmp_path):
    episodes = fixtures.ocean_corpus(tmp_path)
    base = _built_run(tmp_path, episodes)
    flipped_records = []
    for line in episodes.read_text().splitlines():
        record = json.loads(line)
        for ev in record["events"]:
            if ev["actor"] == "warming" and ev["observation"] == "thermal_stress":
                ev["relation"] = "reduces"
        flipped_records.append(record)
    flipped = fixtures.write_jsonl(tmp_path / "flipped.jsonl", flipped_records)
    out_b = tmp_path / "flip_run"
    assert main(["build", "--config", str(write_config(tmp_path, flipped, out_b))]) == 0
    report_path = tmp_path / "drift.json"
    rc = main(["diff", str(base), str(out_b), "--out", str(report_path)])
    assert rc == 1
    report = json.loads(report_path.read_text())
    assert len(report["causal"]) == 1


# ---------------------------------------------------------------------------
# synth + score
# ---------------------------------------------------------------------------


def test_synth_score_cycle(tmp_path, capsys):
    spec_path = tmp_path / "regimes.json"
    spec_path.write_text(
        json.dumps(
            {
                "seed": 3,
                "regimes": [
                    {
                        "context_id": "regime_a",
                        "templates": [{"cause": "x", "effect": "y", "polarity": "positive", "support": 4}],
                        "metadata": {"regime_id": "regime_a"},
                    },
                    {
                        "context_id": "regime_b",
                        "templates": [{"cause": "p", "effect": "q", "polarity": "positive", "support": 4}],
                        "metadata": {"regime_id": "regime_b"},
                    },
                ],
                "overlap_plan": [
                    {"pair": ["x", "shared"], "regimes": ["regime_a", "regime_b"], "conflict": True}
                ],
            }
        )
    )
    corpus_dir = tmp_path / "corpus"
    assert main(["synth", "--spec", str(spec_path), "--out", str(corpus_dir)]) == 0
    run_dir = tmp_path / "run"
    cfg = write_config(
        tmp_path,
        corpus_dir / "episodes.jsonl",
        run_dir,
        evidence=str(corpus_dir / "evidence.jsonl"),
        cover=str(corpus_dir / "cover.json"),
    )
    assert main(["build", "--config", str(cfg)]) == 0
    capsys.readouterr()
    assert main(["score", "--run", str(run_dir), "--spec", str(spec_path)]) == 0
    score = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert score["obstruction_recall"] == 1.0
    assert score["obstruction_precision"] == 1.0


# ---------------------------------------------------------------------------
# service
# ---------------------------------------------------------------------------


@pytest.fixture()
def served_runs(tmp_path):
    episodes = fixtures.ocean_corpus(tmp_path)
    runs = tmp_path / "runs"
    runs.mkdir()
    assert main(["build", "--config", str(write_config(tmp_path, episodes, runs / "base"))]) == 0
    server = make_server(runs, 0)
    port = server.server_address[1]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield runs, port
    server.shutdown()


def _get(port, path):
    with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}") as response:
        return response.status, response.read()


def test_service_atlas_snapshot_identity(served_runs):
    runs, port = served_runs
    status, body = _get(port, "/runs/base/atlas")
    assert status == 200
    assert body == (runs / "base" / "atlas.json").read_bytes()


def test_service_run_listing(served_runs):
    _, port = served_runs
    status, body = _get(port, "/runs")
    assert status == 200
    listing = json.loads(body)
    assert [r["id"] for r in listing["runs"]] == ["base"]
    assert "events" in listing["runs"][0]["summary"]


def test_service_context_detail_schema(served_runs):
    runs, port = served_runs
    bundle = json.loads((runs / "base" / "bundle.json").read_text())
    cid = bundle["psrs"][1]["context_id"]
    status, body = _get(port, f"/runs/base/contexts/{urllib.parse.quote(cid)}")
    assert status == 200
    detail = json.loads(body)
    assert detail["psr"]["context_id"] == cid
    assert "table" in detail["psr"] and "support" in detail["psr"] and "provenance" in detail["psr"]
    assert "restrictions" in detail["diagnostics"]


def test_service_unknown_run_404(served_runs):
    _, port = served_runs
    with pytest.raises(urllib.error.HTTPError) as err:
        _get(port, "/runs/ghost/atlas")
    assert err.value.code == 404


def test_service_unknown_context_404(served_runs):
    _, port = served_runs
    with pytest.raises(urllib.error.HTTPError) as err:
        _get(port, "/runs/base/contexts/ghost")
    assert err.value.code == 404


def test_service_malformed_spec_400(served_runs):
    _, port = served_runs
    request = urllib.request.Request(
        f"http://127.0.0.1:{port}/runs/base/interventions", data=b"{not json", method="POST"
    )
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(request)
    assert err.value.code == 400
    assert "stage" in json.loads(err.value.read())


def test_service_identity_intervention_roundtrip(served_runs):
    runs, port = served_runs
    request = urllib.request.Request(
        f"http://127.0.0.1:{port}/runs/base/interventions",
        data=json.dumps({"kind": "grounded", "rewrites": []}).encode(),
        method="POST",
    )
    with urllib.request.urlopen(request) as response:
        new_id = json.loads(response.read())["new_run_id"]
    assert (runs / new_id / "bundle.json").exists()
    # baseline untouched, diff between the two runs is empty
    status, body = _get(port, f"/runs/base/diff/{new_id}")
    assert status == 200
    assert json.loads(body)["empty"]
