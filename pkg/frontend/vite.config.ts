import { defineConfig } from 'vitest/config';

export default defineConfig({
  server: {
    proxy: {
      // dev-mode console against a locally running service
      '/api': 'http://127.0.0.1:8321',
    },
  },
  build: {
    outDir: 'dist',
  },
  test: {
    environment: 'jsdom',
  },
});
