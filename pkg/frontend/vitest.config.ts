import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: ["tests/setup.service.ts"],
    environment: "node",
    testTimeout: 120_000,
    hookTimeout: 300_000,
    // the python service fixture is shared; keep one worker
    pool: "threads",
    poolOptions: { threads: { singleThread: true } },
  },
});
