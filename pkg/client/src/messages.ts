/**
 * Control-protocol messages and framing: a 4-octet big-endian length
 * prefix, then CBOR [tag, body map] with unsigned-integer body keys.
 * Unknown body keys are ignored for forward compatibility.
 */

import { CborMap, CborValue, decode, encode } from "./cbor.js";

export const TAG_WELCOME = 0;
export const TAG_CONNECTION_CONFIG = 1;
export const TAG_BUNDLE_ADU = 2;
export const TAG_DISPATCH_REQUEST = 3;
export const TAG_DISPATCH_RESPONSE = 4;
export const TAG_LINK = 5;
export const TAG_KEEPALIVE = 6;
export const TAG_RESPONSE = 7;

export const AUTH_LINK_CONTROL = 0x01;
export const AUTH_DISPATCH = 0x02;
export const ADU_FLAG_BIBE = 0x01;
export const LINK_FLAG_DIRECT = 0x01;

export enum Status {
  OK = 0,
  ERROR = 1,
  UNAUTHORIZED = 2,
  OCCUPIED = 3,
  TIMEOUT = 4,
}

export enum LinkOp {
  UP = 0,
  DOWN = 1,
  NOTIFY_UP = 2,
  NOTIFY_DOWN = 3,
}

export enum DispatchAction {
  FORWARD = 0,
  STORE = 1,
  DROP = 2,
}

export interface Welcome {
  kind: "welcome";
  nodeId: string;
}

export interface ConnectionConfig {
  kind: "connectionConfig";
  isActiveClient: boolean;
  agentId?: string;
  sharedSecret?: Uint8Array;
  auth?: number;
  adminSecret?: Uint8Array;
}

export interface BundleAdu {
  kind: "bundleAdu";
  src: string;
  dst: string;
  creation: [number, number];
  payload: Uint8Array;
  flags: number;
  lifetimeMs?: number;
}

export interface DispatchRequest {
  kind: "dispatchRequest";
  requestId: number;
  src: string;
  dst: string;
  creation: [number, number];
  size: number;
  lifetimeMs: number;
}

export interface NextHop {
  nodeId: string;
  claAddress: string;
}

export interface DispatchDecision {
  action: DispatchAction;
  nextHops?: NextHop[];
  maxFragmentPayload?: number;
  reason?: string;
}

export interface DispatchResponse {
  kind: "dispatchResponse";
  requestId: number;
  decision: DispatchDecision;
}

export interface LinkMsg {
  kind: "link";
  op: LinkOp;
  nodeId: string;
  claAddress: string;
  flags: number;
}

export interface Keepalive {
  kind: "keepalive";
}

export interface ResponseMsg {
  kind: "response";
  status: Status;
  detail: string;
}

export type Message =
  | Welcome
  | ConnectionConfig
  | BundleAdu
  | DispatchRequest
  | DispatchResponse
  | LinkMsg
  | Keepalive
  | ResponseMsg;

export class MalformedMessage extends Error {}

const map = (entries: [number, CborValue][]): CborMap => new Map(entries);

function bodyOf(msg: Message): [number, CborMap] {
  switch (msg.kind) {
    case "welcome":
      return [TAG_WELCOME, map([[0, msg.nodeId]])];
    case "connectionConfig": {
      const body = map([[0, msg.isActiveClient]]);
      if (msg.agentId) body.set(1, msg.agentId);
      if (msg.sharedSecret?.length) body.set(2, msg.sharedSecret);
      if (msg.auth) body.set(3, msg.auth);
      if (msg.adminSecret?.length) body.set(4, msg.adminSecret);
      return [TAG_CONNECTION_CONFIG, body];
    }
    case "bundleAdu": {
      const body = map([
        [0, msg.src],
        [1, msg.dst],
        [2, [msg.creation[0], msg.creation[1]]],
        [3, msg.payload],
      ]);
      if (msg.flags) body.set(4, msg.flags);
      if (msg.lifetimeMs !== undefined) body.set(5, msg.lifetimeMs);
      return [TAG_BUNDLE_ADU, body];
    }
    case "dispatchRequest":
      return [TAG_DISPATCH_REQUEST, map([
        [0, msg.requestId],
        [1, map([[0, msg.src], [1, msg.dst],
                 [2, [msg.creation[0], msg.creation[1]]],
                 [3, msg.size], [4, msg.lifetimeMs]])],
      ])];
    case "dispatchResponse":
      return [TAG_DISPATCH_RESPONSE, map([
        [0, msg.requestId],
        [1, encodeDecision(msg.decision)],
      ])];
    case "link": {
      const body = map([[0, msg.op], [1, msg.nodeId], [2, msg.claAddress]]);
      if (msg.flags) body.set(3, msg.flags);
      return [TAG_LINK, body];
    }
    case "keepalive":
      return [TAG_KEEPALIVE, map([])];
    case "response": {
      const body = map([[0, msg.status]]);
      if (msg.detail) body.set(1, msg.detail);
      return [TAG_RESPONSE, body];
    }
  }
}

function encodeDecision(decision: DispatchDecision): CborMap {
  const body = map([[0, decision.action]]);
  if (decision.nextHops?.length) {
    body.set(1, decision.nextHops.map((h) => [h.nodeId, h.claAddress]));
  }
  if (decision.maxFragmentPayload !== undefined) {
    body.set(2, decision.maxFragmentPayload);
  }
  if (decision.reason) body.set(3, decision.reason);
  return body;
}

export function frame(msg: Message): Buffer {
  const [tag, body] = bodyOf(msg);
  const payload = encode([tag, body]);
  const head = Buffer.alloc(4);
  head.writeUInt32BE(payload.length, 0);
  return Buffer.concat([head, payload]);
}

function text(body: CborMap, key: number, what: string, fallback?: string): string {
  const value = body.get(key);
  if (value === undefined) {
    if (fallback !== undefined) return fallback;
    throw new MalformedMessage(`missing ${what}`);
  }
  if (typeof value !== "string") throw new MalformedMessage(`${what} not text`);
  return value;
}

function uint(body: CborMap, key: number, what: string, fallback?: number): number {
  const value = body.get(key);
  if (value === undefined) {
    if (fallback !== undefined) return fallback;
    throw new MalformedMessage(`missing ${what}`);
  }
  if (typeof value !== "number" || value < 0) {
    throw new MalformedMessage(`${what} not an unsigned integer`);
  }
  return value;
}

function creationOf(value: CborValue | undefined): [number, number] {
  if (value === undefined) return [0, 0];
  if (!Array.isArray(value) || value.length !== 2) {
    throw new MalformedMessage("bad creation timestamp");
  }
  return [value[0] as number, value[1] as number];
}

export function parseFramePayload(payload: Buffer): Message {
  let item: CborValue;
  try {
    item = decode(payload);
  } catch (err) {
    throw new MalformedMessage(`undecodable frame: ${err}`);
  }
  if (!Array.isArray(item) || item.length !== 2 || !(item[1] instanceof Map)) {
    throw new MalformedMessage("frame must be [tag, body map]");
  }
  const [tag, body] = item as [number, CborMap];
  switch (tag) {
    case TAG_WELCOME:
      return { kind: "welcome", nodeId: text(body, 0, "node id") };
    case TAG_CONNECTION_CONFIG:
      return {
        kind: "connectionConfig",
        isActiveClient: body.get(0) === true,
        agentId: text(body, 1, "agent id", ""),
        auth: uint(body, 3, "auth", 0),
      };
    case TAG_BUNDLE_ADU: {
      const payloadBytes = body.get(3) ?? new Uint8Array();
      if (!(payloadBytes instanceof Uint8Array)) {
        throw new MalformedMessage("ADU payload not a byte string");
      }
      return {
        kind: "bundleAdu",
        src: text(body, 0, "src", ""),
        dst: text(body, 1, "dst"),
        creation: creationOf(body.get(2)),
        payload: payloadBytes,
        flags: uint(body, 4, "flags", 0),
        lifetimeMs: body.has(5) ? uint(body, 5, "lifetime") : undefined,
      };
    }
    case TAG_DISPATCH_REQUEST: {
      const meta = body.get(1);
      if (!(meta instanceof Map)) {
        throw new MalformedMessage("dispatch request without metadata");
      }
      return {
        kind: "dispatchRequest",
        requestId: uint(body, 0, "request id"),
        src: text(meta, 0, "src", ""),
        dst: text(meta, 1, "dst"),
        creation: creationOf(meta.get(2)),
        size: uint(meta, 3, "size", 0),
        lifetimeMs: uint(meta, 4, "lifetime", 0),
      };
    }
    case TAG_LINK:
      return {
        kind: "link",
        op: uint(body, 0, "link op") as LinkOp,
        nodeId: text(body, 1, "node id", ""),
        claAddress: text(body, 2, "cla address", ""),
        flags: uint(body, 3, "flags", 0),
      };
    case TAG_KEEPALIVE:
      return { kind: "keepalive" };
    case TAG_RESPONSE:
      return {
        kind: "response",
        status: uint(body, 0, "status") as Status,
        detail: text(body, 1, "detail", ""),
      };
    default:
      throw new MalformedMessage(`unknown message tag ${tag}`);
  }
}

/** Incremental deframer over the 4-byte length prefix. */
export class FrameParser {
  private buffer = Buffer.alloc(0);

  constructor(private maxFrame = 17 * 1024 * 1024) {}

  feed(data: Buffer): Message[] {
    this.buffer = Buffer.concat([this.buffer, data]);
    const messages: Message[] = [];
    while (this.buffer.length >= 4) {
      const length = this.buffer.readUInt32BE(0);
      if (length > this.maxFrame) {
        throw new MalformedMessage(`frame of ${length} bytes exceeds limit`);
      }
      if (this.buffer.length < 4 + length) break;
      const payload = this.buffer.subarray(4, 4 + length);
      this.buffer = this.buffer.subarray(4 + length);
      messages.push(parseFramePayload(payload));
    }
    return messages;
  }
}
