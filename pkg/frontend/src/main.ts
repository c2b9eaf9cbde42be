import { App } from "./app.js";

const base = new URLSearchParams(window.location.search).get("service") ?? "";
new App(base).start();
