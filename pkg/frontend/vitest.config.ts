import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'happy-dom',
    // the UI conformance run drives a real service and is budgeted at 2 minutes
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
});
