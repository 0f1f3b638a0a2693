// Provenance drill-down: every evidence id listed, stub units flagged, alias
// chips for every asserting context.

import { describe, expect, it } from "vitest";

import { renderFamilyView } from "../src/views.js";
import type { EvidenceUnit } from "../src/types.js";
import { baseAtlas, baseBundle } from "./helpers.js";

function familyFixture() {
  const atlas = baseAtlas();
  const bundle = baseBundle();
  const family = atlas.families.find((f) => f.key === "food_limitation->thermal_tolerance")!;
  const evidence = new Map<string, EvidenceUnit>(bundle.evidence.map((u) => [u.id, u]));
  return { family, evidence };
}

describe("family drill-down", () => {
  it("lists every evidence id behind the family", () => {
    const { family, evidence } = familyFixture();
    const view = renderFamilyView(family, evidence);
    const rows = [...view.querySelectorAll(".evidence-row")].map((r) =>
      r.getAttribute("data-evidence"),
    );
    expect(rows).toEqual(family.provenance);
    expect(rows.length).toBeGreaterThanOrEqual(2);
  });

  it("marks synthesized stub units", () => {
    const { family, evidence } = familyFixture();
    expect(evidence.get("ev_missing")!.synthesized).toBe(true);
    const view = renderFamilyView(family, evidence);
    const stub = view.querySelector('[data-evidence="ev_missing"]')!;
    expect(stub.classList.contains("synthesized")).toBe(true);
    expect(stub.textContent).toContain("synthesized");
    const real = view.querySelector('[data-evidence="ev_a"]')!;
    expect(real.classList.contains("synthesized")).toBe(false);
  });

  it("shows confidences and locators from the evidence units", () => {
    const { family, evidence } = familyFixture();
    const view = renderFamilyView(family, evidence);
    const row = view.querySelector('[data-evidence="ev_a"]')!;
    expect(row.querySelector(".num")!.getAttribute("data-value")).toBe(
      String(evidence.get("ev_a")!.extraction_confidence),
    );
    expect(row.textContent).toContain(evidence.get("ev_a")!.locator!);
  });

  it("renders one alias chip per asserting context", () => {
    const { family, evidence } = familyFixture();
    expect(family.regime_aliases).toBe(3);
    const view = renderFamilyView(family, evidence);
    const chips = [...view.querySelectorAll(".alias-chip")].map((c) =>
      c.getAttribute("data-context"),
    );
    expect(chips).toEqual(family.contexts);
    expect(view.querySelector(".alias-count .num")!.getAttribute("data-value")).toBe(
      String(family.regime_aliases),
    );
  });

  it("flags dangling ids that resolve to no unit", () => {
    const { family } = familyFixture();
    const view = renderFamilyView(family, new Map());
    const rows = [...view.querySelectorAll(".evidence-row.dangling")];
    expect(rows.length).toBe(family.provenance.length);
    expect(rows[0].textContent).toContain("dangling");
  });
});
