/** Receive application data units: aap2-recv --agent ID [--count N]
 *  [--host H --port P]; payloads go to stdout, metadata to stderr. */

import { parseArgs } from "node:util";

import { Aap2Client, Status } from "../client.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      agent: { type: "string" },
      secret: { type: "string", default: "" },
      count: { type: "string", default: "1" },
      host: { type: "string", default: "127.0.0.1" },
      port: { type: "string", default: "4244" },
      hex: { type: "boolean", default: false },
    },
  });
  if (!values.agent) {
    console.error("usage: aap2-recv --agent ID [--count N]");
    return 2;
  }
  const client = await Aap2Client.connect({
    host: values.host, port: Number(values.port),
  });
  const configured = await client.configure({
    active: false, agentId: values.agent, sharedSecret: values.secret,
  });
  if (configured.status !== Status.OK) {
    console.error(`registration failed: ${Status[configured.status]}`);
    client.close();
    return 1;
  }
  await client.serve({
    maxCalls: Number(values.count),
    onAdu: (adu) => {
      if (values.hex) {
        console.log(Buffer.from(adu.payload).toString("hex"));
      } else {
        process.stdout.write(adu.payload);
      }
      console.error(`from ${adu.src} creation [${adu.creation}]`);
    },
  });
  client.close();
  return 0;
}

main().then((code) => process.exit(code), (err) => {
  console.error(`error: ${err}`);
  process.exit(1);
});
