/**
 * Cross-implementation checks against the real daemon: the client and the
 * dispatcher modules here talk to a spawned Python node over its public
 * sockets only.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import * as net from "node:net";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ContactPlanBdm } from "../src/bdm.js";
import { Aap2Client, AUTH_DISPATCH, Status } from "../src/client.js";
import { decode, decodePrefix, encode, CborMap } from "../src/cbor.js";
import { DispatchAction, DispatchRequest } from "../src/messages.js";

const here = dirname(fileURLToPath(import.meta.url));
const REPO = join(here, "..", "..");
const ADMIN = "e2e-admin";

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = net.createServer();
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as net.AddressInfo).port;
      server.close(() => resolve(port));
    });
    server.on("error", reject);
  });
}

async function waitForPort(port: number, timeoutMs = 15000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const up = await new Promise<boolean>((resolve) => {
      const sock = net.createConnection({ host: "127.0.0.1", port }, () => {
        sock.destroy();
        resolve(true);
      });
      sock.on("error", () => resolve(false));
    });
    if (up) return;
    if (Date.now() > deadline) throw new Error(`port ${port} never came up`);
    await new Promise((r) => setTimeout(r, 50));
  }
}

interface Daemon {
  proc: ChildProcess;
  aap2Port: number;
  nodeId: string;
}

async function startDaemon(extra: Record<string, unknown> = {}): Promise<Daemon> {
  const aap2Port = await freePort();
  const dir = mkdtempSync(join(tmpdir(), "bundlemux-e2e-"));
  const config = {
    node_id: "dtn://ts.dtn/",
    admin_secret: ADMIN,
    aap2: { tcp: `127.0.0.1:${aap2Port}` },
    cla: {
      mtcp: {},
      storage: { path: join(dir, "store") },
    },
    ...extra,
  };
  const configPath = join(dir, "node.json");
  writeFileSync(configPath, JSON.stringify(config));
  const proc = spawn("python3", ["-m", "bundlemux", "daemon", configPath], {
    env: { ...process.env, PYTHONPATH: join(REPO, "src") },
    stdio: ["ignore", "ignore", "pipe"],
  });
  await waitForPort(aap2Port);
  return { proc, aap2Port, nodeId: config.node_id };
}

function stopDaemon(daemon: Daemon | null): void {
  daemon?.proc.kill("SIGTERM");
}

async function storageQueryCount(daemon: Daemon, pattern: string): Promise<number> {
  const recv = await Aap2Client.connect({ port: daemon.aap2Port });
  const send = await Aap2Client.connect({ port: daemon.aap2Port });
  try {
    expect((await recv.configure({
      active: false, agentId: "sq", sharedSecret: "s",
    })).status).toBe(Status.OK);
    expect((await send.configure({
      active: true, agentId: "sq", sharedSecret: "s",
    })).status).toBe(Status.OK);

    const body: CborMap = new Map();
    body.set(0, 0); // QUERY
    body.set(1, new Map([[0, pattern]]));
    const replies: Buffer[] = [];
    const serving = recv.serve({
      maxCalls: 1,
      onAdu: (adu) => {
        replies.push(Buffer.from(adu.payload));
      },
    });
    expect((await send.sendAdu(`${daemon.nodeId}sqa`, encode(body)))
      .status).toBe(Status.OK);
    await serving;
    const reply = decode(replies[0]) as CborMap;
    expect(reply.get(0)).toBe(0);
    return (reply.get(1) as unknown[]).length;
  } finally {
    recv.close();
    send.close();
  }
}

describe("cross-implementation echo", () => {
  let daemon: Daemon | null = null;

  beforeAll(async () => {
    daemon = await startDaemon();
  }, 30000);

  afterAll(() => stopDaemon(daemon));

  it("echoes 100 randomized ADUs byte-exact with true metadata", async () => {
    const receiver = await Aap2Client.connect({ port: daemon!.aap2Port });
    expect((await receiver.configure({
      active: false, agentId: "echo", sharedSecret: "pair",
    })).status).toBe(Status.OK);

    const sender = await Aap2Client.connect({ port: daemon!.aap2Port });
    expect((await sender.configure({
      active: true, agentId: "echo", sharedSecret: "pair",
    })).status).toBe(Status.OK);

    const sent: Uint8Array[] = [];
    const received: { payload: Uint8Array; src: string; creation: number }[] = [];
    const serving = receiver.serve({
      maxCalls: 100,
      onAdu: (adu) => received.push({
        payload: adu.payload, src: adu.src, creation: adu.creation[0],
      }),
    });

    for (let i = 0; i < 100; i++) {
      const payload = new Uint8Array(1 + ((i * 37) % 1500));
      for (let j = 0; j < payload.length; j++) {
        payload[j] = (i * 131 + j * 7) & 0xff;
      }
      sent.push(payload);
      const response = await sender.sendAdu("dtn://ts.dtn/echo", payload, {
        lifetimeMs: 60000,
      });
      expect(response.status).toBe(Status.OK);
    }

    await serving;
    expect(received.length).toBe(100);
    for (let i = 0; i < 100; i++) {
      expect(Buffer.from(received[i].payload).equals(Buffer.from(sent[i])))
        .toBe(true);
      expect(received[i].src).toBe("dtn://ts.dtn/echo");
      expect(received[i].creation).toBeGreaterThan(0);
    }
    receiver.close();
    sender.close();
  }, 60000);

  it("serves 20 dispatch requests whose decisions are applied", async () => {
    const bdmConn = await Aap2Client.connect({ port: daemon!.aap2Port });
    expect((await bdmConn.configure({
      active: false, auth: AUTH_DISPATCH, adminSecret: ADMIN,
    })).status).toBe(Status.OK);

    const seen: DispatchRequest[] = [];
    const serving = bdmConn.serve({
      maxCalls: 20,
      onDispatch: (request) => {
        seen.push(request);
        return { action: DispatchAction.STORE };
      },
    });

    const sender = await Aap2Client.connect({ port: daemon!.aap2Port });
    expect((await sender.configure({
      active: true, agentId: "feeder", sharedSecret: "s",
    })).status).toBe(Status.OK);
    for (let i = 0; i < 20; i++) {
      const response = await sender.sendAdu(
        `dtn://remote${i}.dtn/app`, Buffer.from(`bundle ${i}`),
        { lifetimeMs: 60000 });
      expect(response.status).toBe(Status.OK);
    }
    await serving;
    expect(seen.length).toBe(20);
    for (const request of seen) {
      expect(request.size).toBeGreaterThan(0);
      expect(request.lifetimeMs).toBe(60000);
      expect(request.src).toBe("dtn://ts.dtn/feeder");
    }

    // the daemon applied every STORE decision
    await waitFor(async () =>
      (await storageQueryCount(daemon!, "dtn://remote*")) === 20);
    sender.close();
    bdmConn.close();
  }, 60000);
});

describe("contact-plan dispatcher against the daemon", () => {
  let daemon: Daemon | null = null;
  let capture: net.Server;
  let capturePort: number;
  const captured: Buffer[] = [];

  beforeAll(async () => {
    // per-EID tunneling-free setup, but decisions vary with time: the
    // per-node decision cache must stay out of the way
    daemon = await startDaemon({ cache_enabled: false });
    capturePort = await freePort();
    capture = net.createServer((sock) => {
      sock.on("data", (data) => captured.push(data));
    });
    await new Promise<void>((resolve) =>
      capture.listen(capturePort, "127.0.0.1", resolve));
  }, 30000);

  afterAll(() => {
    stopDaemon(daemon);
    capture?.close();
  });

  it("stores before the window, forwards inside it, drops on volume",
     async () => {
    let fakeNow = 500; // unix seconds, controlled by the test
    const plan = [{
      start: 1000, end: 2000, peerNode: "dtn://hop.dtn/",
      claAddress: `mtcp:127.0.0.1:${capturePort}`, rateBytesPerS: 1024,
    }];
    const routes = [{
      pattern: "dtn://far.dtn/*", nextHopNode: "dtn://hop.dtn/",
      claAddress: `mtcp:127.0.0.1:${capturePort}`,
    }];
    const bdm = new ContactPlanBdm(plan, routes, {
      connect: { port: daemon!.aap2Port },
      adminSecret: ADMIN,
      now: () => fakeNow,
    });
    const serving = bdm.run(3);

    const sender = await Aap2Client.connect({ port: daemon!.aap2Port });
    expect((await sender.configure({
      active: true, agentId: "src", sharedSecret: "s",
    })).status).toBe(Status.OK);

    // phase 1: contact is in the future -> stored, nothing on the wire
    expect((await sender.sendAdu("dtn://far.dtn/one", Buffer.from("early"),
      { lifetimeMs: 3_600_000 })).status).toBe(Status.OK);
    await waitFor(async () =>
      (await storageQueryCount(daemon!, "dtn://far.dtn/*")) === 1);
    expect(captured.length).toBe(0);

    // phase 2: inside the window -> link raised, bundle on the wire
    fakeNow = 1500;
    expect((await sender.sendAdu("dtn://far.dtn/two", Buffer.from("in window"),
      { lifetimeMs: 3_600_000 })).status).toBe(Status.OK);
    await waitFor(async () => captured.length > 0);
    const wire = Buffer.concat(captured);
    const frameItem = decodePrefix(wire, 0);
    expect(frameItem.value).toBeInstanceOf(Uint8Array);
    expect((frameItem.value as Uint8Array)[0]).toBe(0x9f); // a v7 bundle

    // phase 3: residual volume 512000 bytes < bundle size -> drop
    const oversized = Buffer.alloc(600_000, 0x5a);
    expect((await sender.sendAdu("dtn://far.dtn/three", oversized,
      { lifetimeMs: 3_600_000 })).status).toBe(Status.OK);
    await serving;
    expect(bdm.requests).toBe(3);
    // the drop was applied: still exactly one bundle in storage
    expect(await storageQueryCount(daemon!, "dtn://far.dtn/*")).toBe(1);

    sender.close();
    bdm.stop();
  }, 60000);
});

async function waitFor(predicate: () => Promise<boolean> | boolean,
                       timeoutMs = 10000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    if (await predicate()) return;
    if (Date.now() > deadline) throw new Error("condition never held");
    await new Promise((r) => setTimeout(r, 50));
  }
}
