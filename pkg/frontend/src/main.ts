// Browser entry point. Connection settings come from the URL:
//   index.html?base=http://127.0.0.1:8000&token=dev-token
// The session id is minted per tab; it scopes locks and edit idempotency.

import { ApiClient } from "./api.js";
import { createWorkbench } from "./workbench.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("base") ?? "http://127.0.0.1:8000";
const token = params.get("token") ?? "dev-token";
const session = `ui-${crypto.randomUUID().slice(0, 8)}`;

const api = new ApiClient(base, token, session);
const workbench = createWorkbench(document, api, { storage: window.localStorage });
document.body.append(workbench.root);
void workbench.start();
