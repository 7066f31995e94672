/** Spawn a real pipeline server (mock providers) for integration tests. */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import net from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { LLM_SCRIPT, providersToml } from "./fixtures.js";

export interface RunningServer {
  baseUrl: string;
  process: ChildProcess;
  stop(): Promise<void>;
}

export function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = net.createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

export async function startServer(scores: Record<string, number>): Promise<RunningServer> {
  const workDir = mkdtempSync(join(tmpdir(), "bookforge-ui-test-"));
  const scriptPath = join(workDir, "llm_script.json");
  writeFileSync(scriptPath, JSON.stringify(LLM_SCRIPT));
  const configPath = join(workDir, "providers.toml");
  writeFileSync(configPath, providersToml(scriptPath, scores));

  const port = await freePort();
  const child = spawn(
    "python3",
    [
      "-m", "bookforge", "serve",
      "--addr", `127.0.0.1:${port}`,
      "--data-dir", join(workDir, "data"),
      "--providers", configPath,
    ],
    { cwd: join(import.meta.dirname ?? __dirname, "..", ".."), stdio: ["ignore", "pipe", "pipe"] },
  );
  let output = "";
  child.stdout?.on("data", (chunk) => (output += chunk));
  child.stderr?.on("data", (chunk) => (output += chunk));

  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`server exited early (${child.exitCode}): ${output}`);
    }
    try {
      const response = await fetch(`${baseUrl}/v1/books`);
      if (response.ok) {
        return {
          baseUrl,
          process: child,
          stop: () =>
            new Promise((resolve) => {
              child.once("exit", () => resolve());
              child.kill("SIGTERM");
            }),
        };
      }
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  child.kill("SIGKILL");
  throw new Error(`server did not come up: ${output}`);
}

export async function waitForState(
  baseUrl: string,
  bookId: string,
  states: string[],
  timeoutMs = 30_000,
): Promise<string> {
  const deadline = Date.now() + timeoutMs;
  let last = "";
  while (Date.now() < deadline) {
    const response = await fetch(`${baseUrl}/v1/books/${bookId}`);
    const body = (await response.json()) as { state: string };
    last = body.state;
    if (states.includes(last)) return last;
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`timed out waiting for ${states.join("/")}, last state ${last}`);
}
