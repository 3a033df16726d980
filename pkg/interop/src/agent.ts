/**
 * Scripted reason-act loop whose tool step is the remote adapter: each
 * "act" step sends a signed ACT and feeds the verified observation into
 * the transcript, which the final answer is drawn from. No model is
 * involved; a framework's tool wrapper can be attached via `toolHook` to
 * replace the default remote call.
 */

import { adapterSendAct, type AdapterConfig } from "./adapter.js";

export type ScriptStep =
  | { kind: "think"; text: string }
  | { kind: "act"; tool: string; params: Record<string, unknown> };

export interface TranscriptEntry {
  kind: "think" | "act" | "observe" | "error";
  text: string;
}

export interface AgentResult {
  transcript: TranscriptEntry[];
  finalAnswer: string | null;
  error: Error | null;
}

export type ToolHook = (tool: string, params: Record<string, unknown>) => Promise<string>;

export async function adapterAgentDemo(cfg: AdapterConfig, script: ScriptStep[],
                                       toolHook?: ToolHook): Promise<AgentResult> {
  const transcript: TranscriptEntry[] = [];
  const callTool: ToolHook = toolHook ?? ((tool, params) => adapterSendAct(cfg, tool, params));
  let lastObservation: string | null = null;

  for (const step of script) {
    if (step.kind === "think") {
      transcript.push({ kind: "think", text: step.text });
      continue;
    }
    transcript.push({ kind: "act", text: `${step.tool}(${JSON.stringify(step.params)})` });
    try {
      lastObservation = await callTool(step.tool, step.params);
    } catch (err) {
      // abort on the first adapter error, leaving it visible in the transcript
      transcript.push({ kind: "error", text: String(err) });
      return { transcript, finalAnswer: null, error: err as Error };
    }
    transcript.push({ kind: "observe", text: lastObservation });
  }

  const finalAnswer = lastObservation === null
    ? null
    : `the answer is ${lastObservation}`;
  return { transcript, finalAnswer, error: null };
}
