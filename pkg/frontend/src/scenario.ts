import { readFileSync } from "fs";
import { load } from "js-yaml";

export interface Disc {
  center: [number, number];
  radius: number;
}

export interface FunnelParams {
  rho0: number;
  rhoInf: number;
  decay: number;
}

/** The slice of a scenario file the figures need: geometry, input bounds,
 *  and the error-corridor parameters. Everything else is ignored. */
export interface ScenarioInfo {
  name: string;
  nTotal: number;
  nControllable: number;
  starts: [number, number][];
  goals: (Disc | null)[];
  obstacles: Disc[];
  vMax: number[];
  wMax: number[];
  funnel: FunnelParams;
}

function asNumber(value: unknown, field: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new Error(`scenario field ${field} must be a finite number`);
  }
  return value;
}

function asPair(value: unknown, field: string): [number, number] {
  if (!Array.isArray(value) || value.length < 2) {
    throw new Error(`scenario field ${field} must be a coordinate pair`);
  }
  return [asNumber(value[0], field), asNumber(value[1], field)];
}

export function parseScenario(path: string): ScenarioInfo {
  let raw: any;
  try {
    raw = load(readFileSync(path, "utf8"));
  } catch (err: any) {
    throw new Error(`scenario ${path} does not parse: ${err.message}`);
  }
  if (typeof raw !== "object" || raw === null) {
    throw new Error(`scenario ${path} is not a mapping`);
  }
  const topo = raw.topology ?? {};
  const nControllable = asNumber(topo.n_controllable, "topology.n_controllable");
  const nTotal = nControllable + asNumber(topo.n_uncontrollable ?? 0, "topology.n_uncontrollable");
  const agents = raw.agents;
  if (!Array.isArray(agents) || agents.length !== nTotal) {
    throw new Error("scenario agents list must match the declared agent count");
  }
  const starts: [number, number][] = [];
  const goals: (Disc | null)[] = [];
  const vMax: number[] = [];
  const wMax: number[] = [];
  agents.forEach((agent: any, i: number) => {
    starts.push(asPair(agent.start, `agents[${i}].start`));
    if (agent.goal === null || agent.goal === undefined) {
      goals.push(null);
    } else {
      goals.push({
        center: asPair(agent.goal.point, `agents[${i}].goal.point`),
        radius: asNumber(agent.goal.radius, `agents[${i}].goal.radius`),
      });
    }
    const bounds = agent.bounds ?? {};
    vMax.push(asNumber(bounds.v_max, `agents[${i}].bounds.v_max`));
    wMax.push(asNumber(bounds.w_max, `agents[${i}].bounds.w_max`));
  });
  const obstacles: Disc[] = (raw.obstacles ?? []).map((obs: any, k: number) => ({
    center: asPair(obs.center, `obstacles[${k}].center`),
    radius: asNumber(obs.radius, `obstacles[${k}].radius`),
  }));
  const rcbf = raw.rcbf ?? {};
  const funnel = {
    rho0: asNumber(rcbf.rho0, "rcbf.rho0"),
    rhoInf: asNumber(rcbf.rho_inf, "rcbf.rho_inf"),
    decay: asNumber(rcbf.varrho, "rcbf.varrho"),
  };
  return {
    name: typeof raw.name === "string" ? raw.name : "scenario",
    nTotal,
    nControllable,
    starts,
    goals,
    obstacles,
    vMax,
    wMax,
    funnel,
  };
}

/** Corridor width rho(t) = (rho0 - rhoInf) e^(-decay t) + rhoInf. */
export function funnelWidth(funnel: FunnelParams, t: number): number {
  return (funnel.rho0 - funnel.rhoInf) * Math.exp(-funnel.decay * t) + funnel.rhoInf;
}
