import { defineConfig } from "vitest/config";

export default defineConfig({
  build: {
    outDir: "dist",
  },
  test: {
    environment: "jsdom",
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
