/** Send one application data unit: aap2-send --to EID [--agent ID]
 *  [--lifetime MS] [--host H --port P] [payload file | stdin]. */

import { parseArgs } from "node:util";
import { readFileSync } from "node:fs";

import { Aap2Client, Status } from "../client.js";

async function main(): Promise<number> {
  const { values, positionals } = parseArgs({
    options: {
      to: { type: "string" },
      agent: { type: "string", default: "send" },
      secret: { type: "string", default: "" },
      lifetime: { type: "string" },
      host: { type: "string", default: "127.0.0.1" },
      port: { type: "string", default: "4244" },
    },
    allowPositionals: true,
  });
  if (!values.to) {
    console.error("usage: aap2-send --to EID [--agent ID] [file|-]");
    return 2;
  }
  const source = positionals[0] ?? "-";
  const payload = source === "-" ? readFileSync(0) : readFileSync(source);

  const client = await Aap2Client.connect({
    host: values.host, port: Number(values.port),
  });
  const configured = await client.configure({
    active: true, agentId: values.agent, sharedSecret: values.secret,
  });
  if (configured.status !== Status.OK) {
    console.error(`registration failed: ${Status[configured.status]}`);
    client.close();
    return 1;
  }
  const response = await client.sendAdu(values.to, payload, {
    lifetimeMs: values.lifetime ? Number(values.lifetime) : undefined,
  });
  client.close();
  if (response.status !== Status.OK) {
    console.error(`send failed: ${Status[response.status]} ${response.detail}`);
    return 1;
  }
  console.error(`sent ${payload.length} bytes to ${values.to}`);
  return 0;
}

main().then((code) => process.exit(code), (err) => {
  console.error(`error: ${err}`);
  process.exit(1);
});
