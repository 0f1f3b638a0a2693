"""Run-directory export: versioned JSON artifacts, a self-contained HTML
atlas, delimited tables, and matplotlib figures.

A run directory holds exactly five top-level files (bundle.json, atlas.json,
diagnostics.json, state.json, atlas.html) plus inputs/, tables/, and figures/
subdirectories.  JSON exports round-trip losslessly.
"""

from __future__ import annotations

import csv
import html
import json
import shutil
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .atlas import ClaimsAtlas, PersistentState, WorldModelBundle
from .core import ROOT_CONTEXT_ID, canonical_json


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(canonical_json(payload), encoding="utf-8")


def export_bundle(
    bundle: WorldModelBundle,
    atlas: ClaimsAtlas,
    state: PersistentState,
    out_dir: str | Path,
    diff: Optional[dict] = None,
    input_files: Optional[dict[str, Path]] = None,
    figures: bool = True,
) -> Path:
    """Write the complete run directory; returns its path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    _write_json(out / "bundle.json", bundle.to_dict())
    _write_json(out / "atlas.json", atlas.to_dict())
    _write_json(out / "diagnostics.json", {"schema_version": 1, **bundle.diagnostics.to_dict()})
    _write_json(out / "state.json", state.to_dict())
    (out / "atlas.html").write_text(render_html(bundle, atlas, state), encoding="utf-8")
    if diff is not None:
        _write_json(out / "diff.json", diff)

    if input_files:
        inputs_dir = out / "inputs"
        inputs_dir.mkdir(exist_ok=True)
        for name, src in input_files.items():
            shutil.copyfile(src, inputs_dir / name)

    tables_dir = out / "tables"
    tables_dir.mkdir(exist_ok=True)
    write_tables(bundle, atlas, tables_dir)

    if figures:
        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        render_figures(bundle, atlas, fig_dir)
    return out


def import_bundle(run_dir: str | Path) -> WorldModelBundle:
    with open(Path(run_dir) / "bundle.json", "r", encoding="utf-8") as f:
        return WorldModelBundle.from_dict(json.load(f))


def import_atlas(run_dir: str | Path) -> ClaimsAtlas:
    with open(Path(run_dir) / "atlas.json", "r", encoding="utf-8") as f:
        return ClaimsAtlas.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# Delimited tables
# ---------------------------------------------------------------------------


def write_tables(bundle: WorldModelBundle, atlas: ClaimsAtlas, tables_dir: Path) -> None:
    restrictions = {r.target: r for r in bundle.diagnostics.restrictions}
    overlaps = {o.pair[1]: o for o in bundle.diagnostics.overlaps if o.pair[0] == ROOT_CONTEXT_ID}

    with open(tables_dir / "contexts.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["context", "events", "rank", "histories", "tests", "shared", "mean_gap", "cell_loss"]
        )
        for psr in bundle.psrs:
            r = restrictions.get(psr.context_id)
            o = overlaps.get(psr.context_id)
            writer.writerow(
                [
                    psr.context_id,
                    psr.diagnostics.event_count,
                    psr.diagnostics.rank,
                    len(psr.histories),
                    len(psr.tests),
                    r.shared_cells if r else "",
                    f"{r.mean_gap:.6f}" if r else "",
                    f"{o.cell_loss:.6f}" if o else "",
                ]
            )

    with open(tables_dir / "families.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["cause", "effect", "claims", "surface_variants", "regime_aliases", "tension_candidate"]
        )
        for fam in atlas.families:
            writer.writerow(
                [
                    fam["cause"],
                    fam["effect"],
                    fam["claims"],
                    fam["surface_variants"],
                    fam["regime_aliases"],
                    int(fam["tension_candidate"]),
                ]
            )

    with open(tables_dir / "restrictions.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["source", "target", "shared_cells", "mean_gap", "max_gap", "status"])
        for r in bundle.diagnostics.restrictions:
            writer.writerow(
                [r.source, r.target, r.shared_cells, f"{r.mean_gap:.6f}", f"{r.max_gap:.6f}", r.status]
            )


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def render_figures(bundle: WorldModelBundle, atlas: ClaimsAtlas, fig_dir: Path) -> list[Path]:
    paths = []

    regions = [r for r in atlas.regions if r["context_count"] > 0]
    if regions:
        fig, ax = plt.subplots(figsize=(7, max(2.0, 0.45 * len(regions))))
        names = [r["name"] for r in regions]
        events = [r["event_count"] for r in regions]
        ax.barh(names, events, color="#3b7ea1")
        ax.set_xlabel("events")
        ax.set_title("events per atlas region")
        ax.invert_yaxis()
        fig.tight_layout()
        path = fig_dir / "regions.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)

    gaps = [(r.target, r.mean_gap, r.status) for r in bundle.diagnostics.restrictions]
    if gaps:
        gaps.sort(key=lambda g: -g[1])
        shown = gaps[:24]
        fig, ax = plt.subplots(figsize=(7, max(2.0, 0.35 * len(shown))))
        colors = ["#b03a2e" if s == "divergent" else "#2e7d32" for _, _, s in shown]
        ax.barh([t for t, _, _ in shown], [g for _, g, _ in shown], color=colors)
        ax.set_xlabel("mean restriction gap")
        ax.set_title("root-to-context restriction gaps")
        ax.invert_yaxis()
        fig.tight_layout()
        path = fig_dir / "restriction_gaps.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)

    for i, result in enumerate(bundle.substrate_results):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        labels = ["baseline", "counterfactual", "effect"]
        values = [result["baseline"], result["counterfactual"], abs(result["effect"])]
        ax.bar(labels, values, color=["#35506b", "#3b8ea1", "#b03a2e"])
        ax.set_title(f"substrate: {result['kind']} ({result['grounding']})")
        ax.set_ylabel(result.get("units", ""))
        fig.tight_layout()
        path = fig_dir / f"substrate_{i}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# HTML atlas
# ---------------------------------------------------------------------------

_CSS = """
body { font-family: Georgia, serif; margin: 2rem auto; max-width: 1080px; color: #222; }
h1, h2 { color: #35506b; }
table { border-collapse: collapse; margin: 0.8rem 0; width: 100%; font-size: 0.9rem; }
th, td { border: 1px solid #c8cfd6; padding: 0.3rem 0.55rem; text-align: left; }
th { background: #eef2f5; }
.summary span { display: inline-block; background: #eef2f5; border-radius: 4px;
  padding: 0.25rem 0.6rem; margin: 0.15rem; font-size: 0.9rem; }
.tense { color: #b03a2e; font-weight: bold; }
.aligned { color: #2e7d32; }
.flow { background: #f7f4ec; border: 1px solid #d8d2c0; padding: 0.7rem 1rem;
  margin: 0.6rem 0; font-size: 0.95rem; }
.mono { font-family: "Courier New", monospace; font-size: 0.85rem; }
details { margin: 0.4rem 0; }
"""


def _esc(x) -> str:
    return html.escape(str(x))


def render_html(bundle: WorldModelBundle, atlas: ClaimsAtlas, state: PersistentState) -> str:
    """Static, self-contained atlas page: spine, regions, tensions, claim
    families, per-context tables, and the grounded-counterfactual panel."""
    s = bundle.summary()
    parts = [
        "<!DOCTYPE html>",
        '<html><head><meta charset="utf-8"><title>Claims Atlas</title>',
        f"<style>{_CSS}</style></head><body>",
        f"<h1>Claims Atlas <span class='mono'>run {_esc(bundle.run_id)}</span></h1>",
        "<div class='summary'>"
        + "".join(
            f"<span>{_esc(k)}: {_esc(round(v, 6) if isinstance(v, float) else v)}</span>"
            for k, v in s.items()
        )
        + "</div>",
    ]

    if bundle.substrate_results:
        parts.append("<h2>Grounded counterfactual layer</h2>")
        for result in bundle.substrate_results:
            parts.append(
                "<div class='flow'>original sections &rarr; source tables "
                f"({_esc(result['kind'])}, {_esc(result['grounding'])}) &rarr; modified sections"
                "</div>"
            )
            parts.append(
                "<table><tr><th>baseline</th><th>counterfactual</th><th>effect</th>"
                "<th>relative</th></tr>"
                f"<tr><td>{result['baseline']:.6g}</td><td>{result['counterfactual']:.6g}</td>"
                f"<td>{result['effect']:.6g}</td><td>{100 * result['relative_effect']:.4g}%</td></tr>"
                "</table>"
            )
        if bundle.intervention:
            parts.append(
                f"<p>modified causal events: {bundle.intervention.get('modified_events', 0)}</p>"
            )

    parts.append("<h2>Main causal spine</h2>")
    if atlas.spine:
        parts.append("<table><tr><th>path</th><th>support</th></tr>")
        for path in atlas.spine:
            chain = " &rarr; ".join(_esc(n) for n in path["nodes"])
            parts.append(f"<tr><td>{chain}</td><td>{path['support']}</td></tr>")
        parts.append("</table>")
    else:
        parts.append("<p>No spine paths above the support threshold.</p>")

    parts.append("<h2>Local context regions</h2>")
    parts.append("<table><tr><th>region</th><th>events</th><th>contexts</th></tr>")
    for region in atlas.regions:
        parts.append(
            f"<tr><td>{_esc(region['name'])}</td><td>{region['event_count']}</td>"
            f"<td>{region['context_count']}</td></tr>"
        )
    parts.append("</table>")

    parts.append("<h2>Regime tensions</h2>")
    if atlas.tensions:
        parts.append("<table><tr><th>cover</th><th>classification</th><th>cells</th><th>rationale</th></tr>")
        for t in atlas.tensions:
            labels = ", ".join(_esc("->".join(c["cell"])) for c in t["cells"][:4])
            parts.append(
                f"<tr><td>{_esc(t['cover'])}</td><td class='tense'>{_esc(t['classification'])}</td>"
                f"<td>{labels}</td><td>{_esc(t['rationale'])}</td></tr>"
            )
        parts.append("</table>")
    else:
        parts.append("<p>No obstructions recorded.</p>")

    parts.append("<h2>Claim families</h2>")
    parts.append(
        "<table><tr><th>cause</th><th>effect</th><th>claims</th>"
        "<th>surfaces</th><th>regime aliases</th><th>evidence</th></tr>"
    )
    for fam in atlas.families[:40]:
        surfaces = ", ".join(f"{k} ({v})" for k, v in fam["surfaces"].items())
        evidence = ", ".join(_esc(p) for p in fam["provenance"][:6])
        parts.append(
            f"<tr><td>{_esc(fam['cause'])}</td><td>{_esc(fam['effect'])}</td>"
            f"<td>{fam['claims']}</td><td>{_esc(surfaces)}</td>"
            f"<td>{fam['regime_aliases']}</td><td class='mono'>{evidence}</td></tr>"
        )
    parts.append("</table>")

    parts.append("<h2>Local tables</h2>")
    for psr in bundle.psrs:
        d = psr.diagnostics
        parts.append(
            f"<details><summary>{_esc(psr.context_id)} "
            f"({d.event_count} events, rank {d.rank}, {len(psr.histories)}x{len(psr.tests)})"
            "</summary>"
        )
        max_dim = 12
        hs = psr.histories[:max_dim]
        ts = psr.tests[:max_dim]
        parts.append("<table><tr><th></th>" + "".join(f"<th>{_esc(t)}</th>" for t in ts) + "</tr>")
        for h in hs:
            cells = "".join(f"<td>{psr.value(h, t):.4f}</td>" for t in ts)
            parts.append(f"<tr><th>{_esc(h)}</th>{cells}</tr>")
        parts.append("</table></details>")

    parts.append("<h2>Persistent world state</h2>")
    parts.append(
        f"<p>focus <b>{_esc(state.focus)}</b>: recommendation "
        f"<b class='{'aligned' if state.recommendation == 'accept' else 'tense'}'>"
        f"{_esc(state.recommendation)}</b></p>"
    )
    parts.append("</body></html>")
    return "\n".join(parts)
