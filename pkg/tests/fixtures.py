"""Deterministic fixture builders shared by the test suite.

Each grounded-counterfactual fixture mirrors the corresponding published
source-table shape (gridded forcing map, station anomalies, measurement
panels) closely enough to pin the engine's arithmetic, without pretending to
be the original data.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

# ---------------------------------------------------------------------------
# Episode file helpers
# ---------------------------------------------------------------------------


def write_jsonl(path: Path, records: list[dict]) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


def event(actor, action, observation, relation, provenance, **extra) -> dict:
    out = {
        "actor": actor,
        "action": action,
        "observation": observation,
        "relation": relation,
        "provenance": provenance,
    }
    out.update(extra)
    return out


# ---------------------------------------------------------------------------
# Microplastics: optical-forcing scale-map fixture
# ---------------------------------------------------------------------------

MICRO_M_BASE = 0.039
MICRO_M_CF = 0.0036667
MICRO_TARGET_MEAN = 0.03914


def microplastics_episodes(tmp: Path) -> Path:
    events = [
        event("colored_mnp_light_absorption", "particle_optics", "light_absorption", "increase", "mnp_ev1"),
        event("colored_mnp_light_absorption", "particle_optics", "shortwave_absorption", "increase", "mnp_ev2"),
        event("mnp_direct_radiative_forcing", "forcing_estimate", "mean_direct_radiative_forcing", "produces", "mnp_ev3"),
        event("mnp_direct_radiative_forcing", "forcing_estimate", "warming_contribution", "increases", "mnp_ev4"),
        event("regional_mnp_forcing_hotspots", "regional_pattern", "east_asia_forcing", "increases", "mnp_ev5"),
        event("regional_mnp_forcing_hotspots", "regional_pattern", "south_asia_forcing", "increases", "mnp_ev6"),
        event("atmospheric_ageing_optics", "ageing", "absorption_enhancement", "influences", "mnp_ev7"),
        event("atmospheric_ageing_optics", "ageing", "optical_properties", "influences", "mnp_ev8"),
        event("radiative_transfer_estimation", "modeling", "allsky_forcing_map", "produces", "mnp_ev9"),
        event("mnp_climate_forcing_agents", "interpretation", "unrecognized_forcing_agent", "leads_to", "mnp_ev10"),
        event("mnp_spatial_distribution", "transport", "atmospheric_burden", "influences", "mnp_ev11"),
    ]
    record = {"id": "microplastics_paper", "source_doc": "mnp_forcing_study", "events": events}
    return write_jsonl(tmp / "micro_episodes.jsonl", [record])


def microplastics_grid(tmp: Path) -> Path:
    """Gridded value map whose cos(latitude)-weighted mean is calibrated to
    the published area-weighted baseline."""
    lats = [-60 + 15 * i for i in range(10)]  # -60 .. 75
    lons = [-180 + 30 * j for j in range(12)]
    raw = []
    for lat in lats:
        for lon in lons:
            # northern-hemisphere-heavy pattern with longitudinal hotspots
            value = (
                0.02
                + 0.04 * math.exp(-(((lat - 30) / 40.0) ** 2))
                + 0.015 * math.cos(math.radians(lon)) ** 2
            )
            raw.append((lat, lon, value))
    wsum = sum(math.cos(math.radians(lat)) for lat, _, _ in raw)
    vsum = sum(math.cos(math.radians(lat)) * v for lat, _, v in raw)
    scale = MICRO_TARGET_MEAN / (vsum / wsum)
    lines = ["lat,lon,value"]
    lines += [f"{lat},{lon},{value * scale!r}" for lat, lon, value in raw]
    path = tmp / "micro_grid.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def microplastics_spec(tmp: Path, grid_path: Path) -> Path:
    spec = {
        "kind": "grounded",
        "cover": "root",
        "parameters": {},
        "rewrites": [
            {
                "match": "colored_mnp_light_absorption|increase|*",
                "replacement": "counterfactual_white_mnp_optics|sets_to|white_pristine_absorption",
                "note": "white/pristine optical substitution",
            },
            {
                "match": "mnp_direct_radiative_forcing|*|*",
                "replacement": "counterfactual_mnp_direct_radiative_forcing|produces|white_equivalent_mean_direct_radiative_forcing",
                "note": "scaled forcing",
            },
            {
                "match": "regional_mnp_forcing_hotspots|*|*",
                "replacement": "counterfactual_regional_mnp_forcing_hotspots|reduced_by|0.906_forcing_fraction",
                "note": "hotspot suppression",
            },
        ],
        "substrate": {
            "kind": "scale_map",
            "path": str(grid_path),
            "m_base": MICRO_M_BASE,
            "m_cf": MICRO_M_CF,
        },
    }
    path = tmp / "micro_spec.json"
    path.write_text(json.dumps(spec, indent=1), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Indus: station discharge-anomaly fixture
# ---------------------------------------------------------------------------

INDUS_ANOMALIES = [-15.37, -5.22] + [round(-6.2 - 0.3 * i, 2) for i in range(15)] + [-7.73]


def indus_episodes(tmp: Path) -> Path:
    events = [
        event("transient_climate_forcings", "simulation", "vic_hydrological_reconstruction", "leads_to", "indus_ev1"),
        event("d3_rainfall_deficit", "drought_forcing", "river_flow", "reduces", "indus_ev2"),
        event("persistent_river_drought", "hydrology", "freshwater_availability", "reduces", "indus_ev3"),
        event("reduced_water_availability", "settlement_pressure", "population_dispersal", "influences", "indus_ev4"),
        event("social_economic_pressures", "society", "settlement_transformation", "influences", "indus_ev5"),
    ]
    record = {"id": "indus_paper", "source_doc": "harappan_hydrology_study", "events": events}
    return write_jsonl(tmp / "indus_episodes.jsonl", [record])


def indus_stations(tmp: Path) -> Path:
    lines = ["station,anomaly_pct"]
    lines += [f"station_{i + 1:02d},{a}" for i, a in enumerate(INDUS_ANOMALIES)]
    path = tmp / "indus_stations.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def indus_spec(tmp: Path, stations_path: Path) -> Path:
    spec = {
        "kind": "grounded",
        "cover": "root",
        "rewrites": [
            {
                "match": "d3_rainfall_deficit|reduces|river_flow",
                "replacement": "counterfactual_restored_monsoon_forcing|increases|vic_water_availability_proxy",
                "note": "drought restoration",
            },
            {
                "match": "persistent_river_drought|reduces|freshwater_availability",
                "replacement": "counterfactual_freshwater_availability|increases|water_security_proxy",
                "note": "restored discharge index",
            },
            {
                "match": "reduced_water_availability|influences|population_dispersal",
                "replacement": "counterfactual_hydrology_support|weakens|drought_driven_dispersal_support",
                "note": "weakened hydrology-only support",
            },
        ],
        "substrate": {
            "kind": "stations",
            "path": str(stations_path),
            "grounding": "figure_data_proxy",
        },
    }
    path = tmp / "indus_spec.json"
    path.write_text(json.dumps(spec, indent=1), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Protein-signaling panel fixture (single-cell environment substitution)
# ---------------------------------------------------------------------------

PANEL_MARKERS = ["Raf", "Mek", "Plcg", "PIP2", "PIP3", "Erk", "Akt", "PKA", "PKC", "P38", "Jnk"]
PANEL_GROUP_SIZES = {"e0": 88, "e1": 218, "e2": 467, "e3": 80}
FOCUS_MARKERS = ["PKA", "Akt", "Erk"]

# planted log1p means: e2 is the baseline regime, e0 the substitution target
_BASE_MEANS = {"PKA": 4.4, "Akt": 3.9, "Erk": 3.604}
_TOTAL_SHIFT = 3 * 1.025
_CO_SHIFTS = (1.25, 1.06)  # PKA->Akt, PKA->Erk products


def panel_planted_shifts() -> dict[str, float]:
    c1, c2 = _CO_SHIFTS
    p = (_TOTAL_SHIFT + math.sqrt(_TOTAL_SHIFT**2 - 4 * (c1 + c2))) / 2
    return {"PKA": p, "Akt": c1 / p, "Erk": c2 / p}


def signaling_panel(tmp: Path) -> Path:
    shifts = panel_planted_shifts()
    means = {
        "e2": dict(_BASE_MEANS),
        "e0": {m: _BASE_MEANS[m] + shifts[m] for m in FOCUS_MARKERS},
        "e1": {"PKA": 4.1, "Akt": 3.7, "Erk": 3.5},
        "e3": {"PKA": 4.0, "Akt": 3.6, "Erk": 3.45},
    }
    lines = ["group," + ",".join(PANEL_MARKERS)]
    for group in ("e0", "e1", "e2", "e3"):
        for _ in range(PANEL_GROUP_SIZES[group]):
            row = []
            for i, marker in enumerate(PANEL_MARKERS):
                if marker in FOCUS_MARKERS:
                    row.append(repr(math.expm1(means[group][marker])))
                else:
                    row.append(repr(math.expm1(2.0 + 0.1 * i)))
            lines.append(group + "," + ",".join(row))
    path = tmp / "signaling_panel.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def signaling_episodes(tmp: Path) -> Path:
    events = []
    for marker, actor in (("pka", "pka_signaling"), ("akt", "akt_pathway"), ("erk", "erk_cascade")):
        for i in range(10):
            events.append(
                event(actor, "phosphorylation", f"{marker}_downstream_target_{i}", "influences", f"sachs_{marker}_{i}")
            )
    events.append(event("tcr_stimulation", "receptor", "signaling_cascade", "leads_to", "sachs_tcr"))
    events.append(event("bayesian_network_inference", "analysis", "causal_edges", "produces", "sachs_bn"))
    record = {"id": "signaling_paper", "source_doc": "protein_signaling_study", "events": events}
    return write_jsonl(tmp / "signaling_episodes.jsonl", [record])


def signaling_spec(tmp: Path, panel_path: Path) -> Path:
    spec = {
        "kind": "grounded",
        "cover": "root",
        "parameters": {"append_grounded_episode": True},
        "rewrites": [
            {
                "match": "pka_signaling|*|*",
                "replacement": "counterfactual_environment_shift|sets_to|e0_regime_pka_profile",
                "note": "environment substitution",
            },
            {
                "match": "akt_pathway|*|*",
                "replacement": "counterfactual_environment_shift|sets_to|e0_regime_akt_profile",
                "note": "environment substitution",
            },
            {
                "match": "erk_cascade|*|*",
                "replacement": "counterfactual_environment_shift|sets_to|e0_regime_erk_profile",
                "note": "environment substitution",
            },
        ],
        "substrate": {
            "kind": "panel",
            "path": str(panel_path),
            "base_group": "e2",
            "target_group": "e0",
            "focus_markers": FOCUS_MARKERS,
            "transform": "log1p",
        },
    }
    path = tmp / "signaling_spec.json"
    path.write_text(json.dumps(spec, indent=1), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Projection-attenuation fixture (binarized projection panel)
# ---------------------------------------------------------------------------

PROJECTION_TARGETS = ["AUD", "PAG", "STR", "TH", "SC"]
PROJECTION_POSITIVES = {
    "MMus": {"AUD": 42, "PAG": 17, "STR": 200, "TH": 150, "SC": 100},
    "STeg": {"AUD": 131, "PAG": 79, "STR": 210, "TH": 140, "SC": 90},
}
PROJECTION_ROWS = 1000


def projection_panel(tmp: Path) -> Path:
    lines = ["species," + ",".join(PROJECTION_TARGETS)]
    for species in ("MMus", "STeg"):
        for row in range(PROJECTION_ROWS):
            values = [
                "1" if row < PROJECTION_POSITIVES[species][t] else "0"
                for t in PROJECTION_TARGETS
            ]
            lines.append(species + "," + ",".join(values))
    path = tmp / "projection_panel.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def mice_episodes(tmp: Path) -> Path:
    events = [
        event("mapseq_barcodes", "measurement", "target_region_projections", "produces", "mice_ev1"),
        event("steg_motor_cortex_pathway", "projection", "auditory_region", "expands_to", "mice_ev2"),
        event("steg_motor_cortex_pathway", "projection", "periaqueductal_gray", "expands_to", "mice_ev3"),
        event("species_projection_difference", "comparison", "motor_cortical_projection_structure", "influences", "mice_ev4"),
        event("motor_cortex_pathway_expansion", "behavior_bridge", "vocal_repertoire", "expands_to", "mice_ev5"),
    ]
    record = {"id": "mice_paper", "source_doc": "singing_mouse_study", "events": events}
    return write_jsonl(tmp / "mice_episodes.jsonl", [record])


def mice_spec(tmp: Path, panel_path: Path) -> Path:
    spec = {
        "kind": "grounded",
        "cover": "root",
        "rewrites": [
            {
                "match": "steg_motor_cortex_pathway|expands_to|auditory_region",
                "replacement": "counterfactual_auditory_projection_expansion|sets_to|mmus_level_auditory_projection",
                "note": "species-mean attenuation",
            },
            {
                "match": "steg_motor_cortex_pathway|expands_to|periaqueductal_gray",
                "replacement": "counterfactual_pag_vocal_motor_projection|sets_to|mmus_level_pag_projection",
                "note": "species-mean attenuation",
            },
            {
                "match": "motor_cortex_pathway_expansion|expands_to|vocal_repertoire",
                "replacement": "counterfactual_projection_attenuation|weakens|vocal_repertoire_claim_support",
                "note": "weakened behavior bridge",
            },
        ],
        "substrate": {
            "kind": "panel",
            "path": str(panel_path),
            "base_group": "STeg",
            "target_group": "MMus",
            "focus_markers": ["AUD", "PAG"],
            "transform": "fraction",
            "group_column": "species",
        },
    }
    path = tmp / "mice_spec.json"
    path.write_text(json.dumps(spec, indent=1), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Shape fixtures mirroring published local-table dimensions
# ---------------------------------------------------------------------------


def shape_fixture(tmp: Path, name: str, unique_triples: int, total_events: int) -> Path:
    """A single context of ``total_events`` events over ``unique_triples``
    distinct triples (extras duplicate the first triples), plus a handful of
    corpus-only events so the root is a strict super-grid."""
    events = []
    for i in range(total_events):
        k = i if i < unique_triples else i - unique_triples
        events.append(
            event(f"{name}_actor_{k:03d}", "mechanism", f"{name}_outcome_{k:03d}", "affects", f"{name}_ev{i}")
        )
    extras = [
        event(f"corpusonly_actor_{j}", "background", f"corpusonly_outcome_{j}", "influences", f"{name}_bg{j}")
        for j in range(4)
    ]
    records = [
        {"id": f"{name}_doc", "source_doc": f"{name}_doc", "events": events},
        {"id": f"{name}_background", "source_doc": "background_doc", "events": extras},
    ]
    return write_jsonl(tmp / f"{name}_episodes.jsonl", records)


def shape_cover(tmp: Path, name: str) -> Path:
    cover = {
        "contexts": [{"id": name, "label": name, "level": "topic"}],
        "rules": [{"context": name, "field": "relation", "equals": "affects"}],
        "covers": [],
    }
    path = tmp / f"{name}_cover.json"
    path.write_text(json.dumps(cover), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Corpus-scale counting fixture and a small multi-topic corpus
# ---------------------------------------------------------------------------


def counting_fixture(tmp: Path, episodes: int = 11, total_events: int = 3065) -> Path:
    base = total_events // episodes
    counts = [base + (1 if i < total_events - base * episodes else 0) for i in range(episodes)]
    records = []
    for e, count in enumerate(counts):
        events = [
            event(f"actor_{e}_{i % 37}", "act", f"outcome_{e}_{i % 53}", "leads_to", f"ev_{e}_{i}")
            for i in range(count)
        ]
        records.append({"id": f"study_{e:02d}", "source_doc": f"study_{e}", "events": events})
    return write_jsonl(tmp / "counting_episodes.jsonl", records)


def ocean_corpus(tmp: Path) -> Path:
    """11 short episodes over a pool of marine-flavored mechanisms."""
    chains = [
        ["warming", "stratification", "oxygen_loss", "prey_availability"],
        ["warming", "thermal_stress", "larval_survival"],
        ["food_limitation", "thermal_tolerance", "larval_survival"],
        ["subpolar_gyre_weakening", "warm_inflow", "north_atlantic_temperature"],
        ["surface_temperature", "grazing_rates", "prey_abundance"],
        ["surface_temperature", "photosynthetic_reliance", "mixotroph_balance"],
        ["warming", "parasite_transmission", "host_feeding_behavior"],
        ["fisheries_output", "secondary_activities", "regional_economy"],
        ["argo_corrections", "temperature_records", "warming_signal"],
        ["sedimentation", "coral_stress", "coral_mortality"],
        ["warming", "vibrio_growth", "disease_progression"],
    ]
    records = []
    for i, chain in enumerate(chains):
        events = [
            event(a, "mechanism", b, "leads_to" if i % 2 == 0 else "increases", f"ocean_ev_{i}_{j}")
            for j, (a, b) in enumerate(zip(chain, chain[1:]))
        ]
        records.append({"id": f"ocean_study_{i:02d}", "source_doc": f"ocean_doc_{i}", "events": events})
    return write_jsonl(tmp / "ocean_episodes.jsonl", records)
