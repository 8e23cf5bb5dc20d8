import * as path from "path";

import { describe, expect, it } from "vitest";

import { inputsFigure, rcbfFigure, trajectoriesFigure } from "../src/figures";
import { parseScenario } from "../src/scenario";
import { TraceTable, column, parseTrace } from "../src/trace";

const FIXTURES = path.join(__dirname, "..", "fixtures");
const trace = parseTrace(path.join(FIXTURES, "team_trace.csv"));
const emptyTrace = parseTrace(path.join(FIXTURES, "header_only.csv"));
const scenario = parseScenario(path.join(FIXTURES, "four_robot_team.yaml"));

function seriesOf(fig: { option: any }): any[] {
  return fig.option.series as any[];
}

describe("trajectoriesFigure", () => {
  it("draws one path per robot plus the workspace geometry", () => {
    const fig = trajectoriesFigure(trace, scenario);
    const named = seriesOf(fig).filter((s) => typeof s.name === "string");
    expect(named.map((s) => s.name)).toEqual(["robot 1", "robot 2", "robot 3", "robot 4"]);
    for (const s of named) {
      expect(s.data.length).toBe(trace.rows);
    }
    const outlines = seriesOf(fig).filter((s) => s.type === "line" && s.name === undefined);
    expect(outlines.length).toBe(scenario.obstacles.length + 2);
  });

  it("keeps the axes on a common scale", () => {
    const fig = trajectoriesFigure(trace, scenario);
    const x = fig.option.xAxis as any;
    const y = fig.option.yAxis as any;
    expect(x.max - x.min).toBeCloseTo(y.max - y.min, 9);
    expect(fig.width).toBe(fig.height);
  });

  it("renders the workspace alone when the trace has no rows", () => {
    const fig = trajectoriesFigure(emptyTrace, scenario);
    const named = seriesOf(fig).filter((s) => typeof s.name === "string");
    expect(named.length).toBe(4);
    for (const s of named) {
      expect(s.data.length).toBe(0);
    }
    expect(seriesOf(fig).some((s) => s.type === "line" && s.name === undefined)).toBe(true);
  });

  it("names the first trace column it cannot find", () => {
    const bare: TraceTable = { columns: ["t"], rows: 0, data: new Map([["t", new Float64Array(0)]]) };
    expect(() => trajectoriesFigure(bare, scenario)).toThrow(/p1_x/);
  });
});

describe("rcbfFigure", () => {
  it("stacks one panel per controlled robot", () => {
    const fig = rcbfFigure(trace, scenario);
    expect((fig.option.grid as any[]).length).toBe(3);
    const overlays = seriesOf(fig).filter((s) => s.name === "corridor rho");
    expect(overlays.length).toBe(3);
    const hats = seriesOf(fig).filter((s) => s.name === "reconstructed h");
    expect(hats.length).toBe(3);
  });

  it("recomputes the corridor that the simulator recorded", () => {
    // The overlay is derived from the scenario's funnel parameters alone;
    // it must land on the rho column the simulator wrote into the trace.
    const fig = rcbfFigure(trace, scenario);
    for (let i = 1; i <= 3; i++) {
      const overlay = seriesOf(fig).find(
        (s) => s.name === "corridor rho" && s.xAxisIndex === i - 1,
      );
      expect(overlay).toBeDefined();
      const recorded = column(trace, `rho${i}`);
      expect(overlay.data.length).toBe(recorded.length);
      let worst = 0;
      for (let k = 0; k < recorded.length; k++) {
        const [, value] = overlay.data[k];
        worst = Math.max(worst, Math.abs(value - recorded[k]) / Math.abs(recorded[k]));
      }
      expect(worst).toBeLessThanOrEqual(1e-6);
    }
  });

  it("draws a zero reference in every panel", () => {
    const fig = rcbfFigure(trace, scenario);
    const zeros = seriesOf(fig).filter((s) => s.name === "zero");
    expect(zeros.length).toBe(3);
    for (const s of zeros) {
      expect(s.lineStyle.type).toBe("dashed");
      for (const [, value] of s.data) {
        expect(value).toBe(0);
      }
    }
  });

  it("names the first trace column it cannot find", () => {
    const bare: TraceTable = { columns: ["t"], rows: 0, data: new Map([["t", new Float64Array(0)]]) };
    expect(() => rcbfFigure(bare, scenario)).toThrow(/h1_hat/);
  });
});

describe("inputsFigure", () => {
  it("plots both channels for every robot", () => {
    const fig = inputsFigure(trace, scenario);
    const named = seriesOf(fig).filter((s) => typeof s.name === "string");
    expect(named.length).toBe(8);
    const panels = new Set(named.map((s) => s.xAxisIndex));
    expect(panels).toEqual(new Set([0, 1]));
  });

  it("marks the declared actuator bounds with dashed guides", () => {
    const fig = inputsFigure(trace, scenario);
    const guides = seriesOf(fig).filter((s) => s.name === undefined);
    expect(guides.length).toBe(4);
    const levels = (panel: number) =>
      guides
        .filter((s) => s.xAxisIndex === panel)
        .map((s) => s.data[0][1])
        .sort((a: number, b: number) => a - b);
    expect(levels(0)).toEqual([-0.22, 0.22]);
    expect(levels(1)).toEqual([-2.84, 2.84]);
    for (const s of guides) {
      expect(s.lineStyle.type).toBe("dashed");
    }
  });

  it("keeps the recorded inputs inside those bounds", () => {
    for (let i = 1; i <= 3; i++) {
      const v = column(trace, `v${i}`);
      const w = column(trace, `w${i}`);
      for (let k = 0; k < trace.rows; k++) {
        expect(Math.abs(v[k])).toBeLessThanOrEqual(0.22 + 1e-9);
        expect(Math.abs(w[k])).toBeLessThanOrEqual(2.84 + 1e-9);
      }
    }
  });
});
