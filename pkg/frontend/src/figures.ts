import type { EChartsOption, SeriesOption } from "echarts";

import { ScenarioInfo, funnelWidth } from "./scenario";
import { TraceTable, column, requireColumns } from "./trace";

/** An option plus the canvas size it was laid out for. */
export interface Figure {
  option: EChartsOption;
  width: number;
  height: number;
}

const ROBOT_COLORS = ["#5470c6", "#ee6666", "#91cc75", "#fac858", "#73c0de", "#9a60b4"];

function pairs(xs: ArrayLike<number>, ys: ArrayLike<number>): [number, number][] {
  const out: [number, number][] = [];
  for (let k = 0; k < xs.length; k++) {
    out.push([xs[k], ys[k]]);
  }
  return out;
}

function circlePoints(center: [number, number], radius: number, n = 72): [number, number][] {
  const pts: [number, number][] = [];
  for (let k = 0; k <= n; k++) {
    const a = (2 * Math.PI * k) / n;
    pts.push([center[0] + radius * Math.cos(a), center[1] + radius * Math.sin(a)]);
  }
  return pts;
}

/** All robot paths over obstacle outlines and goal discs, on equal-scale
 *  axes. An empty trace still shows the workspace geometry. */
export function trajectoriesFigure(trace: TraceTable, scenario: ScenarioInfo): Figure {
  const needed: string[] = [];
  for (let i = 1; i <= scenario.nTotal; i++) {
    needed.push(`p${i}_x`, `p${i}_y`);
  }
  requireColumns(trace, needed);

  const series: SeriesOption[] = [];
  const legend: string[] = [];
  let xs: number[] = [];
  let ys: number[] = [];

  for (const obs of scenario.obstacles) {
    series.push({
      type: "line",
      silent: true,
      data: circlePoints(obs.center, obs.radius),
      showSymbol: false,
      lineStyle: { color: "#666", width: 2 },
      z: 1,
    });
    xs.push(obs.center[0] - obs.radius, obs.center[0] + obs.radius);
    ys.push(obs.center[1] - obs.radius, obs.center[1] + obs.radius);
  }

  const seen = new Set<string>();
  for (const goal of scenario.goals) {
    if (goal === null) continue;
    const key = `${goal.center[0]},${goal.center[1]},${goal.radius}`;
    if (seen.has(key)) continue;
    seen.add(key);
    series.push({
      type: "line",
      silent: true,
      data: circlePoints(goal.center, goal.radius),
      showSymbol: false,
      lineStyle: { color: "#3a3", width: 1.5, type: "dashed" },
      z: 1,
    });
    series.push({
      type: "scatter",
      silent: true,
      data: [goal.center],
      symbol: "diamond",
      symbolSize: 9,
      itemStyle: { color: "#3a3" },
      z: 2,
    });
    xs.push(goal.center[0] - goal.radius, goal.center[0] + goal.radius);
    ys.push(goal.center[1] - goal.radius, goal.center[1] + goal.radius);
  }

  for (let i = 1; i <= scenario.nTotal; i++) {
    const px = column(trace, `p${i}_x`);
    const py = column(trace, `p${i}_y`);
    const name = `robot ${i}`;
    const color = ROBOT_COLORS[(i - 1) % ROBOT_COLORS.length];
    legend.push(name);
    series.push({
      name,
      type: "line",
      data: pairs(px, py),
      showSymbol: false,
      lineStyle: { color, width: 1.8 },
      z: 3,
    });
    series.push({
      type: "scatter",
      silent: true,
      data: [scenario.starts[i - 1]],
      symbol: "circle",
      symbolSize: 7,
      itemStyle: { color },
      z: 4,
    });
    xs = xs.concat(Array.from(px));
    ys = ys.concat(Array.from(py));
    xs.push(scenario.starts[i - 1][0]);
    ys.push(scenario.starts[i - 1][1]);
  }

  // Equal-scale square axes: grow the narrower extent to match the wider.
  const pad = 0.4;
  const xLo = Math.min(...xs) - pad;
  const xHi = Math.max(...xs) + pad;
  const yLo = Math.min(...ys) - pad;
  const yHi = Math.max(...ys) + pad;
  const round = (v: number) => Number(v.toFixed(3));
  const half = round(Math.max(xHi - xLo, yHi - yLo)) / 2;
  const xMid = round((xLo + xHi) / 2);
  const yMid = round((yLo + yHi) / 2);

  const option: EChartsOption = {
    animation: false,
    title: { text: `${scenario.name}: trajectories`, left: "center" },
    legend: { data: legend, bottom: 4 },
    grid: { left: 60, right: 30, top: 48, bottom: 64, containLabel: false },
    xAxis: { type: "value", name: "x [m]", min: xMid - half, max: xMid + half },
    yAxis: { type: "value", name: "y [m]", min: yMid - half, max: yMid + half },
    series,
  };
  return { option, width: 840, height: 840 };
}

/** One panel per controlled robot: reconstructed safety value, the
 *  reconstruction gap, the corridor computed from the scenario's funnel
 *  parameters (dashed), and the zero level. */
export function rcbfFigure(trace: TraceTable, scenario: ScenarioInfo): Figure {
  const n = scenario.nControllable;
  const needed = ["t"];
  for (let i = 1; i <= n; i++) {
    needed.push(`h${i}_hat`, `e${i}`);
  }
  requireColumns(trace, needed);
  const t = column(trace, "t");
  const rhoOverlay = Array.from(t, (tk) => funnelWidth(scenario.funnel, tk));

  const grids: any[] = [];
  const xAxes: any[] = [];
  const yAxes: any[] = [];
  const series: SeriesOption[] = [];
  const titles: any[] = [{ text: `${scenario.name}: safety reconstruction`, left: "center" }];
  const topPad = 7;
  const bottomPad = 8;
  const panel = (100 - topPad - bottomPad) / n;

  for (let idx = 0; idx < n; idx++) {
    const i = idx + 1;
    const top = topPad + idx * panel;
    grids.push({
      left: 70,
      right: 30,
      top: `${top + 1.5}%`,
      height: `${panel - 4}%`,
    });
    xAxes.push({
      type: "value",
      gridIndex: idx,
      min: 0,
      max: t.length ? t[t.length - 1] : 1,
      name: idx === n - 1 ? "t [s]" : "",
      axisLabel: { show: idx === n - 1 },
    });
    yAxes.push({ type: "value", gridIndex: idx, name: `robot ${i}` });
    series.push(
      {
        name: "reconstructed h",
        type: "line",
        xAxisIndex: idx,
        yAxisIndex: idx,
        data: pairs(t, column(trace, `h${i}_hat`)),
        showSymbol: false,
        lineStyle: { color: "#5470c6", width: 1.6 },
      },
      {
        name: "gap e",
        type: "line",
        xAxisIndex: idx,
        yAxisIndex: idx,
        data: pairs(t, column(trace, `e${i}`)),
        showSymbol: false,
        lineStyle: { color: "#ee6666", width: 1.6 },
      },
      {
        name: "corridor rho",
        type: "line",
        xAxisIndex: idx,
        yAxisIndex: idx,
        data: pairs(t, rhoOverlay),
        showSymbol: false,
        lineStyle: { color: "#000", width: 1.4, type: "dashed" },
      },
      {
        name: "zero",
        type: "line",
        xAxisIndex: idx,
        yAxisIndex: idx,
        data: pairs(t, new Float64Array(t.length)),
        showSymbol: false,
        silent: true,
        lineStyle: { color: "#999", width: 1, type: "dashed" },
      },
    );
  }

  const option: EChartsOption = {
    animation: false,
    title: titles,
    legend: { data: ["reconstructed h", "gap e", "corridor rho"], bottom: 2 },
    grid: grids,
    xAxis: xAxes,
    yAxis: yAxes,
    series,
  };
  return { option, width: 900, height: 170 * n + 130 };
}

/** Linear and angular inputs for every robot with dashed lines at the
 *  tightest declared bounds. */
export function inputsFigure(trace: TraceTable, scenario: ScenarioInfo): Figure {
  const needed = ["t"];
  for (let i = 1; i <= scenario.nTotal; i++) {
    needed.push(`v${i}`, `w${i}`);
  }
  requireColumns(trace, needed);
  const t = column(trace, "t");
  const vBound = Math.max(...scenario.vMax);
  const wBound = Math.max(...scenario.wMax);

  const series: SeriesOption[] = [];
  const legend: string[] = [];
  (["v", "w"] as const).forEach((channel, panel) => {
    for (let i = 1; i <= scenario.nTotal; i++) {
      const name = `robot ${i}`;
      if (panel === 0) legend.push(name);
      series.push({
        name,
        type: "line",
        xAxisIndex: panel,
        yAxisIndex: panel,
        data: pairs(t, column(trace, `${channel}${i}`)),
        showSymbol: false,
        lineStyle: { color: ROBOT_COLORS[(i - 1) % ROBOT_COLORS.length], width: 1.5 },
      });
    }
    const bound = panel === 0 ? vBound : wBound;
    for (const sign of [1, -1]) {
      series.push({
        type: "line",
        xAxisIndex: panel,
        yAxisIndex: panel,
        silent: true,
        data: t.length ? [[0, sign * bound], [t[t.length - 1], sign * bound]] : [],
        showSymbol: false,
        lineStyle: { color: "#c00", width: 1, type: "dashed" },
      });
    }
  });

  const option: EChartsOption = {
    animation: false,
    title: { text: `${scenario.name}: control inputs`, left: "center" },
    legend: { data: legend, bottom: 2 },
    grid: [
      { left: 70, right: 30, top: "9%", height: "34%" },
      { left: 70, right: 30, top: "54%", height: "34%" },
    ],
    xAxis: [
      { type: "value", gridIndex: 0, min: 0, max: t.length ? t[t.length - 1] : 1, axisLabel: { show: false } },
      { type: "value", gridIndex: 1, min: 0, max: t.length ? t[t.length - 1] : 1, name: "t [s]" },
    ],
    yAxis: [
      { type: "value", gridIndex: 0, name: "v [m/s]" },
      { type: "value", gridIndex: 1, name: "w [rad/s]" },
    ],
    series,
  };
  return { option, width: 900, height: 640 };
}
