/**
 * CLI mirroring the reference client's send command:
 *
 *   node dist/src/cli.js --connect HOST:PORT --keystore ks.json \
 *     --identity alice --to server --tool calculator \
 *     --params '{"expression":"15*7"}'
 */

import { adapterSendAct, type AdapterConfig } from "./adapter.js";

function parseArgs(argv: string[]): Record<string, string> {
  const out: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got ${flag}`);
    }
    out[flag.slice(2)] = argv[i + 1];
  }
  return out;
}

async function main(): Promise<number> {
  let args: Record<string, string>;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error(String(err));
    return 2;
  }
  const missing = ["connect", "identity", "to", "tool"].filter((key) => !args[key]);
  const keystorePath = args.keystore ?? process.env.LACP_KEYSTORE;
  if (missing.length || !keystorePath) {
    console.error("usage: --connect HOST:PORT --keystore KS.json --identity ID "
      + "--to SERVER --tool NAME [--params JSON]");
    return 2;
  }
  const [host, portText] = args.connect.split(":");
  const cfg: AdapterConfig = {
    host,
    port: Number(portText),
    keystorePath,
    agentId: args.identity,
    serverId: args.to,
  };
  try {
    const observation = await adapterSendAct(cfg, args.tool,
      JSON.parse(args.params ?? "{}"));
    console.log(observation);
    return 0;
  } catch (err) {
    console.error(String(err));
    return 1;
  }
}

main().then((code) => process.exit(code));
