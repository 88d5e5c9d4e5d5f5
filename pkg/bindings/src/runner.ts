/**
 * Invocation of the core toolbox CLI. The binding talks to the core only
 * through its public surface: the `geom4d` command and its file formats.
 */
import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { BindingError } from "./tensor.js";

/** Override with GEOM4D_CLI, e.g. "geom4d" for an installed entry point. */
function cliCommand(): string[] {
  const override = process.env.GEOM4D_CLI;
  if (override) return override.split(" ");
  const python = process.env.GEOM4D_PYTHON ?? "python3";
  return [python, "-m", "geom4d"];
}

export interface CliResult {
  stdout: string;
  report: unknown;
}

export class CoreError extends BindingError {
  readonly exitCode: number;

  constructor(message: string, exitCode: number) {
    super(message);
    this.exitCode = exitCode;
  }
}

export function runCli(args: string[], cwd?: string): CliResult {
  const [cmd, ...prefix] = cliCommand();
  const res = spawnSync(cmd, [...prefix, ...args], {
    cwd,
    encoding: "utf-8",
    maxBuffer: 1 << 28,
  });
  if (res.error) {
    throw new BindingError(`failed to launch core CLI: ${res.error.message}`);
  }
  if (res.status !== 0) {
    // surface the core's one-line machine-parsable reason verbatim
    const reason = (res.stderr ?? "").trim().split("\n").pop() ?? "";
    throw new CoreError(reason || `core CLI exited with ${res.status}`,
                        res.status ?? -1);
  }
  return { stdout: res.stdout, report: JSON.parse(res.stdout) };
}

export function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "geom4d-bind-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
