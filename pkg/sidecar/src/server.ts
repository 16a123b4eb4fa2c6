import { loadModel } from "./model.js";
import { createApp } from "./service.js";

const port = Number(process.env.PORT ?? 8765);
if (!Number.isInteger(port) || port < 0 || port > 65535) {
  console.error(`invalid PORT: ${process.env.PORT}`);
  process.exit(2);
}

const state = loadModel(process.env.SIDECAR_MODEL);
if (state.status === "failed") {
  console.error(`model load failed: ${state.reason} (serving 503s)`);
}

const server = createApp(state).listen(port, () => {
  const address = server.address();
  const bound = typeof address === "object" && address ? address.port : port;
  console.log(`embedding service listening on :${bound}`);
});

for (const signal of ["SIGINT", "SIGTERM"] as const) {
  process.on(signal, () => server.close(() => process.exit(0)));
}
