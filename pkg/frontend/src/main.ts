// Entry point: mount the trading app on #app. The optional
// data-claims-base attribute points full-text links at a document store.

import { App } from "./app.js";

const root = document.querySelector<HTMLElement>("#app");
if (root === null) throw new Error("missing #app mount point");

const app = new App(root, {
  claimsBase: root.dataset.claimsBase ?? "claims/",
});
app.mount();
