// Browser entry. The token comes from ?token=...; ?role=annotator or
// ?role=moderator skips the landing chooser.

import { LabelServiceClient } from "./api.js";
import { initApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const token =
  params.get("token") ?? window.prompt("access token (X-Auth-Token)") ?? "";
const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app element");
}
initApp(root, new LabelServiceClient(token), params.get("role"));
