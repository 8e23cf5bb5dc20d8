import { spawnSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { describe, expect, it } from "vitest";

const ROOT = path.join(__dirname, "..");
const CLI = path.join(ROOT, "dist", "cli.js");
const TRACE = path.join(ROOT, "fixtures", "team_trace.csv");
const SCENARIO = path.join(ROOT, "fixtures", "four_robot_team.yaml");

function run(args: string[]) {
  return spawnSync("node", [CLI, ...args], { encoding: "utf8" });
}

function freshDir(tag: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), `rcbfplot-${tag}-`));
}

describe("rcbfplot command line", () => {
  it("writes all three figures from a trace and its scenario", () => {
    const out = freshDir("all");
    const res = run(["--trace", TRACE, "--scenario", SCENARIO, "--out", out]);
    expect(res.status).toBe(0);
    for (const name of ["trajectories.svg", "rcbf.svg", "inputs.svg"]) {
      const svg = fs.readFileSync(path.join(out, name), "utf8");
      expect(svg.length).toBeGreaterThan(0);
      expect(svg).toContain("<svg");
    }
  });

  it("writes only the requested subset", () => {
    const out = freshDir("subset");
    const res = run(["--trace", TRACE, "--scenario", SCENARIO, "--out", out, "--figures", "inputs"]);
    expect(res.status).toBe(0);
    expect(fs.readdirSync(out)).toEqual(["inputs.svg"]);
  });

  it("fails with a prefixed message when the trace is missing", () => {
    const res = run(["--trace", "/no/such/trace.csv", "--scenario", SCENARIO, "--out", freshDir("gone")]);
    expect(res.status).toBe(1);
    expect(res.stderr).toMatch(/^rcbfplot: /);
  });

  it("refuses an empty figure selection", () => {
    const res = run(["--trace", TRACE, "--scenario", SCENARIO, "--out", freshDir("none"), "--figures", ""]);
    expect(res.status).toBe(1);
    expect(res.stderr).toMatch(/^rcbfplot: /);
  });

  it("rejects an unknown figure name", () => {
    const res = run(["--trace", TRACE, "--scenario", SCENARIO, "--out", freshDir("bad"), "--figures", "pie"]);
    expect(res.status).toBe(1);
    expect(res.stderr).toMatch(/^rcbfplot: /);
  });
});
