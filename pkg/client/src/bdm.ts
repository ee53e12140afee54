/**
 * Example bundle dispatcher modules.
 *
 * Decision logic is kept in pure functions of (rules, request, time) so it
 * can be tested without sockets; the runner classes wire those functions to
 * a passive dispatch connection (and, for the contact-plan module, an
 * active link-control connection that raises links when a contact opens).
 */

import {
  Aap2Client,
  AUTH_DISPATCH,
  AUTH_LINK_CONTROL,
  ConnectOptions,
  Status,
} from "./client.js";
import {
  DispatchAction,
  DispatchDecision,
  DispatchRequest,
} from "./messages.js";

export interface RouteRule {
  /** destination EID pattern; "*" matches any run of characters */
  pattern: string;
  nextHopNode: string;
  claAddress: string;
}

export function patternToRegex(pattern: string): RegExp {
  const escaped = pattern.replace(/[.+?^${}()|[\]\\]/g, "\\$&");
  return new RegExp(`^${escaped.replace(/\*/g, ".*")}$`);
}

/** Longest (most specific) matching pattern wins; ties break by rule order. */
export function matchRoute(routes: RouteRule[], dst: string): RouteRule | null {
  let best: RouteRule | null = null;
  for (const rule of routes) {
    if (!patternToRegex(rule.pattern).test(dst)) continue;
    if (best === null || rule.pattern.length > best.pattern.length) {
      best = rule;
    }
  }
  return best;
}

export function staticDecision(routes: RouteRule[], dst: string,
                               storeAvailable: boolean): DispatchDecision {
  const route = matchRoute(routes, dst);
  if (route !== null) {
    return {
      action: DispatchAction.FORWARD,
      nextHops: [{ nodeId: route.nextHopNode, claAddress: route.claAddress }],
    };
  }
  if (storeAvailable) return { action: DispatchAction.STORE };
  return { action: DispatchAction.DROP, reason: "no route" };
}

// --- contact plans ---

export interface ContactPlanEntry {
  /** unix seconds */
  start: number;
  end: number;
  peerNode: string;
  claAddress: string;
  rateBytesPerS: number;
}

/** Transmittable bytes left in a contact at time t (unix seconds). */
export function residualVolume(entry: ContactPlanEntry, tUnixS: number): number {
  return entry.rateBytesPerS * Math.max(0, entry.end - Math.max(tUnixS, entry.start));
}

export function isCurrent(entry: ContactPlanEntry, tUnixS: number): boolean {
  return entry.start <= tUnixS && tUnixS < entry.end;
}

export interface ContactDecision {
  decision: DispatchDecision;
  /** set when the chosen contact is open: the link to raise before use */
  linkUp?: { nodeId: string; claAddress: string };
}

export const NO_CONTACT_VOLUME = "no contact volume";

/**
 * Pick the matched next hop's earliest contact that can still carry the
 * bundle. An open contact forwards now; a future one stores; none drops.
 */
export function contactPlanDecision(
  plan: ContactPlanEntry[],
  routes: RouteRule[],
  request: { dst: string; size: number },
  nowUnixS: number,
): ContactDecision {
  const route = matchRoute(routes, request.dst);
  if (route === null) {
    return { decision: { action: DispatchAction.DROP, reason: "no route" } };
  }
  const usable = plan
    .filter((entry) => entry.peerNode === route.nextHopNode)
    .filter((entry) => residualVolume(entry, nowUnixS) >= request.size)
    .sort((a, b) => a.start - b.start);
  if (usable.length === 0) {
    return {
      decision: { action: DispatchAction.DROP, reason: NO_CONTACT_VOLUME },
    };
  }
  const contact = usable[0];
  if (isCurrent(contact, nowUnixS)) {
    return {
      decision: {
        action: DispatchAction.FORWARD,
        nextHops: [{ nodeId: contact.peerNode, claAddress: contact.claAddress }],
      },
      linkUp: { nodeId: contact.peerNode, claAddress: contact.claAddress },
    };
  }
  return { decision: { action: DispatchAction.STORE } };
}

// --- serving glue ---

export interface BdmOptions {
  connect: ConnectOptions;
  adminSecret: Uint8Array | string;
  /** unix-seconds time source; injectable for simulated-clock tests */
  now?: () => number;
}

async function openDispatchConnection(opts: BdmOptions): Promise<Aap2Client> {
  const client = await Aap2Client.connect(opts.connect);
  const response = await client.configure({
    active: false,
    auth: AUTH_DISPATCH,
    adminSecret: opts.adminSecret,
  });
  if (response.status !== Status.OK) {
    client.close();
    throw new Error(`dispatch authorization failed: ${Status[response.status]}`);
  }
  return client;
}

export class StaticRoutingBdm {
  requests = 0;
  private client: Aap2Client | null = null;

  constructor(private routes: RouteRule[], private opts: BdmOptions,
              private storeAvailable = true) {}

  async run(maxCalls?: number): Promise<number> {
    this.client = await openDispatchConnection(this.opts);
    return this.client.serve({
      maxCalls,
      onDispatch: (request) => {
        this.requests += 1;
        return staticDecision(this.routes, request.dst, this.storeAvailable);
      },
    });
  }

  stop(): void {
    this.client?.close();
  }
}

export class ContactPlanBdm {
  requests = 0;
  private dispatchConn: Aap2Client | null = null;
  private linkConn: Aap2Client | null = null;
  private raised = new Set<string>();

  constructor(private plan: ContactPlanEntry[], private routes: RouteRule[],
              private opts: BdmOptions) {}

  async run(maxCalls?: number): Promise<number> {
    this.dispatchConn = await openDispatchConnection(this.opts);
    this.linkConn = await Aap2Client.connect(this.opts.connect);
    const granted = await this.linkConn.configure({
      active: true,
      auth: AUTH_LINK_CONTROL,
      adminSecret: this.opts.adminSecret,
    });
    if (granted.status !== Status.OK) {
      throw new Error(`link-control authorization failed: ${granted.status}`);
    }
    const now = this.opts.now ?? (() => Date.now() / 1000);
    return this.dispatchConn.serve({
      maxCalls,
      onDispatch: async (request: DispatchRequest) => {
        this.requests += 1;
        const result = contactPlanDecision(
          this.plan, this.routes,
          { dst: request.dst, size: request.size }, now());
        if (result.linkUp) {
          const key = `${result.linkUp.nodeId}|${result.linkUp.claAddress}`;
          if (!this.raised.has(key)) {
            const answer = await this.linkConn!.linkUp(
              result.linkUp.nodeId, result.linkUp.claAddress);
            if (answer.status === Status.OK) this.raised.add(key);
          }
        }
        return result.decision;
      },
    });
  }

  stop(): void {
    this.dispatchConn?.close();
    this.linkConn?.close();
  }
}
