import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the round-trip suite boots the Python service, which trains nothing
    // but still needs a moment to import scipy and bind a socket
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
