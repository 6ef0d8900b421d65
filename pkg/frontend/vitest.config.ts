import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    // the e2e suite spawns the Python service; give it room
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
