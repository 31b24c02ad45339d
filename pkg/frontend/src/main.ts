import { ApiClient } from "./api.js";
import { DEFAULT_TAU_STOPS, StudioState } from "./state.js";
import { StudioApp } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "http://127.0.0.1:8321";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

const app = new StudioApp(new ApiClient(base), new StudioState(DEFAULT_TAU_STOPS), root);
void app.start();
