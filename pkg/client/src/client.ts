/**
 * Blocking-style (promise-based) control-protocol client. One instance
 * wraps one connection; programs that both send and receive, or that serve
 * dispatch requests while issuing link requests, open two clients with the
 * same agent id and shared secret, one per direction of control.
 */

import * as net from "node:net";

import {
  AUTH_DISPATCH,
  AUTH_LINK_CONTROL,
  ADU_FLAG_BIBE,
  BundleAdu,
  DispatchDecision,
  DispatchRequest,
  FrameParser,
  LINK_FLAG_DIRECT,
  LinkMsg,
  LinkOp,
  Message,
  ResponseMsg,
  Status,
  frame,
} from "./messages.js";

export { AUTH_DISPATCH, AUTH_LINK_CONTROL, Status };

export interface ConnectOptions {
  host?: string;
  port: number;
  timeoutMs?: number;
}

export interface ConfigureOptions {
  active: boolean;
  agentId?: string;
  sharedSecret?: Uint8Array | string;
  auth?: number;
  adminSecret?: Uint8Array | string;
}

export interface SendOptions {
  lifetimeMs?: number;
  creation?: [number, number];
  isBibe?: boolean;
}

export interface ServeHandlers {
  onAdu?: (adu: BundleAdu) => void | Promise<void>;
  onDispatch?: (req: DispatchRequest) =>
    DispatchDecision | null | Promise<DispatchDecision | null>;
  onNotify?: (link: LinkMsg) => void | Promise<void>;
  /** stop after this many served calls (keepalives excluded) */
  maxCalls?: number;
}

function toBytes(value: Uint8Array | string | undefined): Uint8Array {
  if (value === undefined) return new Uint8Array();
  return typeof value === "string" ? Buffer.from(value, "utf-8") : value;
}

export class ProtocolError extends Error {}

export class Aap2Client {
  readonly nodeId: string;
  private parser = new FrameParser();
  private pending: Message[] = [];
  private waiter: ((msg: Message | null) => void) | null = null;
  private closed = false;
  private failure: Error | null = null;

  private constructor(private socket: net.Socket, nodeId: string) {
    this.nodeId = nodeId;
    socket.on("data", (data) => this.onData(data));
    socket.on("error", (err) => this.fail(err));
    socket.on("close", () => this.fail(new ProtocolError("connection closed")));
  }

  static async connect(opts: ConnectOptions): Promise<Aap2Client> {
    const socket = await new Promise<net.Socket>((resolve, reject) => {
      const sock = net.createConnection(
        { host: opts.host ?? "127.0.0.1", port: opts.port },
        () => {
          sock.removeListener("error", reject);
          resolve(sock);
        });
      sock.once("error", reject);
    });
    const parser = new FrameParser();
    const welcome = await new Promise<Message>((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new ProtocolError("no Welcome from daemon")),
        opts.timeoutMs ?? 10_000);
      socket.on("data", function onData(data: Buffer) {
        const messages = parser.feed(data);
        if (messages.length > 0) {
          clearTimeout(timer);
          socket.removeListener("data", onData);
          resolve(messages[0]);
        }
      });
      socket.once("error", (err) => {
        clearTimeout(timer);
        reject(err);
      });
    });
    if (welcome.kind !== "welcome") {
      throw new ProtocolError(`expected Welcome, got ${welcome.kind}`);
    }
    return new Aap2Client(socket, welcome.nodeId);
  }

  private onData(data: Buffer): void {
    let messages: Message[];
    try {
      messages = this.parser.feed(data);
    } catch (err) {
      this.fail(err as Error);
      return;
    }
    for (const msg of messages) {
      if (this.waiter) {
        const waiter = this.waiter;
        this.waiter = null;
        waiter(msg);
      } else {
        this.pending.push(msg);
      }
    }
  }

  private fail(err: Error): void {
    if (this.closed) return;
    this.closed = true;
    this.failure = err;
    if (this.waiter) {
      const waiter = this.waiter;
      this.waiter = null;
      waiter(null);
    }
  }

  async recvMsg(timeoutMs = 30_000): Promise<Message> {
    const queued = this.pending.shift();
    if (queued) return queued;
    if (this.closed) throw this.failure ?? new ProtocolError("closed");
    return new Promise<Message>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.waiter = null;
        reject(new ProtocolError("timed out waiting for a message"));
      }, timeoutMs);
      this.waiter = (msg) => {
        clearTimeout(timer);
        if (msg === null) {
          reject(this.failure ?? new ProtocolError("closed"));
        } else {
          resolve(msg);
        }
      };
    });
  }

  sendRaw(msg: Message): void {
    if (this.closed) throw this.failure ?? new ProtocolError("closed");
    this.socket.write(frame(msg));
  }

  async call(msg: Message): Promise<ResponseMsg> {
    this.sendRaw(msg);
    const answer = await this.recvMsg();
    if (answer.kind !== "response") {
      throw new ProtocolError(`expected Response, got ${answer.kind}`);
    }
    return answer;
  }

  async configure(opts: ConfigureOptions): Promise<ResponseMsg> {
    return this.call({
      kind: "connectionConfig",
      isActiveClient: opts.active,
      agentId: opts.agentId,
      sharedSecret: toBytes(opts.sharedSecret),
      auth: opts.auth ?? 0,
      adminSecret: toBytes(opts.adminSecret),
    });
  }

  async sendAdu(dst: string, payload: Uint8Array,
                opts: SendOptions = {}): Promise<ResponseMsg> {
    return this.call({
      kind: "bundleAdu",
      src: "",
      dst,
      creation: opts.creation ?? [0, 0],
      payload,
      flags: opts.isBibe ? ADU_FLAG_BIBE : 0,
      lifetimeMs: opts.lifetimeMs,
    });
  }

  async linkUp(nodeId: string, claAddress: string,
               direct = false): Promise<ResponseMsg> {
    return this.call({
      kind: "link", op: LinkOp.UP, nodeId, claAddress,
      flags: direct ? LINK_FLAG_DIRECT : 0,
    });
  }

  async linkDown(nodeId: string, claAddress: string): Promise<ResponseMsg> {
    return this.call({
      kind: "link", op: LinkOp.DOWN, nodeId, claAddress, flags: 0,
    });
  }

  async keepalive(): Promise<ResponseMsg> {
    return this.call({ kind: "keepalive" });
  }

  /**
   * Passive direction: answer daemon calls until the connection closes,
   * stop() is called, or maxCalls have been served. Returns the call count.
   */
  async serve(handlers: ServeHandlers): Promise<number> {
    let handled = 0;
    for (;;) {
      if (handlers.maxCalls !== undefined && handled >= handlers.maxCalls) {
        return handled;
      }
      let msg: Message;
      try {
        msg = await this.recvMsg();
      } catch {
        return handled;
      }
      switch (msg.kind) {
        case "keepalive":
          this.sendRaw({ kind: "response", status: Status.OK, detail: "" });
          break;
        case "bundleAdu":
          await handlers.onAdu?.(msg);
          this.sendRaw({ kind: "response", status: Status.OK, detail: "" });
          handled += 1;
          break;
        case "dispatchRequest": {
          const decision = handlers.onDispatch
            ? await handlers.onDispatch(msg)
            : null;
          if (decision === null) {
            this.sendRaw({ kind: "response", status: Status.OK, detail: "" });
          } else {
            this.sendRaw({
              kind: "dispatchResponse",
              requestId: msg.requestId,
              decision,
            });
          }
          handled += 1;
          break;
        }
        case "link":
          await handlers.onNotify?.(msg);
          this.sendRaw({ kind: "response", status: Status.OK, detail: "" });
          handled += 1;
          break;
        default:
          throw new ProtocolError(`unexpected daemon call: ${msg.kind}`);
      }
    }
  }

  close(): void {
    this.closed = true;
    this.socket.destroy();
  }
}
