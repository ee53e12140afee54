import { describe, expect, it } from "vitest";

import {
  ContactPlanEntry,
  NO_CONTACT_VOLUME,
  RouteRule,
  contactPlanDecision,
  isCurrent,
  matchRoute,
  patternToRegex,
  residualVolume,
  staticDecision,
} from "../src/bdm.js";
import { DispatchAction } from "../src/messages.js";

const ROUTES: RouteRule[] = [
  { pattern: "dtn://c.dtn/*", nextHopNode: "dtn://b.dtn/", claAddress: "mtcp:b:1" },
  { pattern: "dtn://c.dtn/priority/*", nextHopNode: "dtn://x.dtn/",
    claAddress: "mtcp:x:1" },
  { pattern: "ipn:*", nextHopNode: "dtn://gw.dtn/", claAddress: "mtcp:gw:1" },
];

describe("static routing", () => {
  it("routes by pattern", () => {
    const decision = staticDecision(ROUTES, "dtn://c.dtn/app", true);
    expect(decision.action).toBe(DispatchAction.FORWARD);
    expect(decision.nextHops![0].nodeId).toBe("dtn://b.dtn/");
  });

  it("unmatched stores when storage is available, else drops", () => {
    expect(staticDecision(ROUTES, "dtn://other.dtn/x", true).action)
      .toBe(DispatchAction.STORE);
    expect(staticDecision(ROUTES, "dtn://other.dtn/x", false).action)
      .toBe(DispatchAction.DROP);
  });

  it("longest pattern wins", () => {
    const route = matchRoute(ROUTES, "dtn://c.dtn/priority/urgent");
    expect(route!.nextHopNode).toBe("dtn://x.dtn/");
  });

  it("longest-match agrees with a brute-force oracle", () => {
    // oracle: filter matching rules, pick max pattern length exhaustively
    const destinations = [
      "dtn://c.dtn/app", "dtn://c.dtn/priority/x", "dtn://c.dtn/",
      "ipn:4.2", "dtn://nowhere.dtn/q", "dtn://c.dtn/priority/",
    ];
    for (const dst of destinations) {
      const matching = ROUTES.filter((r) => patternToRegex(r.pattern).test(dst));
      const oracle = matching.length === 0 ? null
        : matching.reduce((a, b) => b.pattern.length > a.pattern.length ? b : a);
      expect(matchRoute(ROUTES, dst)).toEqual(oracle);
    }
  });
});

const PLAN: ContactPlanEntry[] = [
  { start: 100, end: 200, peerNode: "dtn://b.dtn/",
    claAddress: "mtcp:b:1", rateBytesPerS: 1024 },
  { start: 300, end: 360, peerNode: "dtn://b.dtn/",
    claAddress: "mtcp:b:1", rateBytesPerS: 2048 },
  { start: 100, end: 500, peerNode: "dtn://other.dtn/",
    claAddress: "mtcp:o:1", rateBytesPerS: 64 },
];

const PLAN_ROUTES: RouteRule[] = [
  { pattern: "dtn://c.dtn/*", nextHopNode: "dtn://b.dtn/", claAddress: "mtcp:b:1" },
];

describe("contact plan", () => {
  it("residual volume follows rate x remaining window", () => {
    const entry = PLAN[0];
    expect(residualVolume(entry, 50)).toBe(1024 * 100);   // before start
    expect(residualVolume(entry, 150)).toBe(1024 * 50);   // mid-contact
    expect(residualVolume(entry, 200)).toBe(0);           // closed
    expect(residualVolume(entry, 999)).toBe(0);
  });

  it("residual volume matches numeric integration of the window", () => {
    const entry = PLAN[1];
    for (const t of [0, 299, 300, 330, 359, 360, 400]) {
      let integrated = 0;
      for (let second = Math.max(t, entry.start); second < entry.end; second++) {
        integrated += entry.rateBytesPerS;
      }
      expect(residualVolume(entry, t)).toBe(integrated);
    }
  });

  it("open contact with volume forwards and raises the link", () => {
    const result = contactPlanDecision(
      PLAN, PLAN_ROUTES, { dst: "dtn://c.dtn/app", size: 1024 }, 150);
    expect(result.decision.action).toBe(DispatchAction.FORWARD);
    expect(result.linkUp).toEqual({
      nodeId: "dtn://b.dtn/", claAddress: "mtcp:b:1",
    });
  });

  it("future contact stores", () => {
    const result = contactPlanDecision(
      PLAN, PLAN_ROUTES, { dst: "dtn://c.dtn/app", size: 1024 }, 40);
    expect(result.decision.action).toBe(DispatchAction.STORE);
    expect(result.linkUp).toBeUndefined();
  });

  it("volume-exceeded bundle drops with the specified reason", () => {
    // at t=190 the open contact has 10 KiB left; a 20 KiB bundle cannot fit
    // there, and the later contact (123 KiB capacity) absorbs it instead;
    // against a single-contact plan it must drop
    const single = [PLAN[0]];
    const result = contactPlanDecision(
      single, PLAN_ROUTES, { dst: "dtn://c.dtn/app", size: 20 * 1024 }, 190);
    expect(result.decision.action).toBe(DispatchAction.DROP);
    expect(result.decision.reason).toBe(NO_CONTACT_VOLUME);
  });

  it("no forwarding outside contact windows at any probe time", () => {
    for (let t = 0; t <= 600; t += 10) {
      const result = contactPlanDecision(
        PLAN, PLAN_ROUTES, { dst: "dtn://c.dtn/app", size: 512 }, t);
      if (result.decision.action === DispatchAction.FORWARD) {
        const inWindow = PLAN.some(
          (entry) => entry.peerNode === "dtn://b.dtn/" && isCurrent(entry, t));
        expect(inWindow).toBe(true);
      }
    }
  });

  it("picks the earliest contact that fits", () => {
    // 150 KiB fits only the second contact (2048 B/s x 60 s)
    const result = contactPlanDecision(
      PLAN, PLAN_ROUTES, { dst: "dtn://c.dtn/app", size: 110 * 1024 }, 120);
    expect(result.decision.action).toBe(DispatchAction.STORE);
  });

  it("unrouted destination drops", () => {
    const result = contactPlanDecision(
      PLAN, PLAN_ROUTES, { dst: "dtn://nowhere.dtn/x", size: 1 }, 150);
    expect(result.decision.action).toBe(DispatchAction.DROP);
    expect(result.decision.reason).toBe("no route");
  });
});
