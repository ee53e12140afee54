export * from "./cbor.js";
export * from "./messages.js";
export * from "./client.js";
export * from "./bdm.js";
