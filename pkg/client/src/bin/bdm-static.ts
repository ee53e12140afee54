/** Static-routing dispatcher module: bdm-static --routes routes.json
 *  [--host H --port P] [--no-store]. The admin secret comes from the
 *  BUNDLEMUX_ADMIN_SECRET environment variable, never from argv. */

import { parseArgs } from "node:util";
import { readFileSync } from "node:fs";

import { RouteRule, StaticRoutingBdm } from "../bdm.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      routes: { type: "string" },
      host: { type: "string", default: "127.0.0.1" },
      port: { type: "string", default: "4244" },
      "no-store": { type: "boolean", default: false },
    },
  });
  const adminSecret = process.env.BUNDLEMUX_ADMIN_SECRET;
  if (!values.routes || !adminSecret) {
    console.error("usage: BUNDLEMUX_ADMIN_SECRET=... bdm-static --routes FILE");
    return 2;
  }
  const routes = JSON.parse(readFileSync(values.routes, "utf-8")) as RouteRule[];
  const bdm = new StaticRoutingBdm(
    routes,
    {
      connect: { host: values.host, port: Number(values.port) },
      adminSecret,
    },
    !values["no-store"]);
  console.error(`static dispatcher attached with ${routes.length} route(s)`);
  await bdm.run();
  return 0;
}

main().then((code) => process.exit(code), (err) => {
  console.error(`error: ${err}`);
  process.exit(1);
});
