export * from "./errors.js";
export * from "./rng.js";
export * from "./tensor.js";
export * from "./modules.js";
export * from "./genome.js";
export * from "./network.js";
export * from "./data.js";
export * from "./train.js";
