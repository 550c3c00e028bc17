// Test harness: spawns the real service over a demo-seeded repository and
// waits on conditions. The UI is exercised against the actual wire API;
// nothing here reaches into server internals.

import { type ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export interface LiveService {
  base: string;
  dir: string;
  stop(): Promise<void>;
}

export async function startService(options?: {
  auth?: Record<string, string>;
}): Promise<LiveService> {
  const dir = mkdtempSync(join(tmpdir(), "workbench-"));
  const seeded = spawnSync("sumhub", ["demo", "--data-dir", dir], { encoding: "utf8" });
  if (seeded.status !== 0) {
    throw new Error(`demo seed failed: ${seeded.stderr || seeded.stdout}`);
  }

  const args = ["serve", "--data-dir", dir, "--port", "0"];
  if (options?.auth) {
    const authPath = join(dir, "auth.json");
    writeFileSync(authPath, JSON.stringify(options.auth));
    args.push("--auth", authPath);
  }
  const proc: ChildProcess = spawn("sumhub", args, { stdio: ["ignore", "pipe", "pipe"] });

  let stderr = "";
  proc.stderr?.on("data", (chunk: Buffer) => {
    stderr += chunk.toString();
  });

  const base = await new Promise<string>((resolve, reject) => {
    let stdout = "";
    const timer = setTimeout(() => {
      proc.kill("SIGKILL");
      reject(new Error(`service did not come up; stderr: ${stderr}`));
    }, 15000);
    proc.stdout?.on("data", (chunk: Buffer) => {
      stdout += chunk.toString();
      const match = stdout.match(/serving .* on (http:\/\/[^\s]+)/);
      if (match && match[1]) {
        clearTimeout(timer);
        resolve(match[1]);
      }
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`service exited early with ${code}; stderr: ${stderr}`));
    });
  });

  return {
    base,
    dir,
    stop: () =>
      new Promise<void>((resolve) => {
        proc.removeAllListeners("exit");
        proc.on("exit", () => {
          rmSync(dir, { recursive: true, force: true });
          resolve();
        });
        proc.kill("SIGINT");
        setTimeout(() => proc.kill("SIGKILL"), 3000).unref();
      }),
  };
}

export async function waitFor(
  predicate: () => boolean,
  what: string,
  timeoutMs = 10000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await new Promise((resolve) => setTimeout(resolve, 20));
  }
  throw new Error(`timed out waiting for ${what}`);
}

// Findings polling is asynchronous; tests pin it down by waiting for the
// store to report findings at an exact revision.
export function immediateTimers(): { set: (fn: () => void, ms: number) => unknown; clear: (h: unknown) => void } {
  return {
    set: (fn) => {
      fn();
      return 0;
    },
    clear: () => {},
  };
}
