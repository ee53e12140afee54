/** Contact-plan dispatcher module: bdm-contacts --plan plan.json
 *  --routes routes.json [--host H --port P]. Forwards inside contact
 *  windows with sufficient residual volume, stores ahead of future
 *  contacts, drops otherwise. Admin secret from BUNDLEMUX_ADMIN_SECRET. */

import { parseArgs } from "node:util";
import { readFileSync } from "node:fs";

import { ContactPlanBdm, ContactPlanEntry, RouteRule } from "../bdm.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      plan: { type: "string" },
      routes: { type: "string" },
      host: { type: "string", default: "127.0.0.1" },
      port: { type: "string", default: "4244" },
    },
  });
  const adminSecret = process.env.BUNDLEMUX_ADMIN_SECRET;
  if (!values.plan || !values.routes || !adminSecret) {
    console.error("usage: BUNDLEMUX_ADMIN_SECRET=... bdm-contacts "
      + "--plan FILE --routes FILE");
    return 2;
  }
  const plan = JSON.parse(readFileSync(values.plan, "utf-8")) as ContactPlanEntry[];
  const routes = JSON.parse(readFileSync(values.routes, "utf-8")) as RouteRule[];
  const bdm = new ContactPlanBdm(plan, routes, {
    connect: { host: values.host, port: Number(values.port) },
    adminSecret,
  });
  console.error(`contact-plan dispatcher attached: ${plan.length} contact(s), `
    + `${routes.length} route(s)`);
  await bdm.run();
  return 0;
}

main().then((code) => process.exit(code), (err) => {
  console.error(`error: ${err}`);
  process.exit(1);
});
