export * from "./view.js";
export * from "./ellipse.js";
export * from "./overlay.js";
export * from "./api.js";
export * from "./state.js";
