export { canonicalBytes, canonicalJson } from "./canonical.js";
export { Keystore, publicKeyFromHex, privateKeyFromHex, type Identity } from "./keystore.js";
export {
  compactDecode,
  compactEncode,
  newTransactionId,
  signEnvelope,
  verifyEnvelope,
  MalformedEnvelope,
  SignatureMismatch,
  UnknownKey,
  type Claims,
  type Envelope,
} from "./envelope.js";
export {
  CLASS_REQUEST,
  CLASS_RESPONSE,
  CLASS_TXN_CONTROL,
  FrameDecoder,
  encodeFrame,
  FramingError,
  type Frame,
} from "./framing.js";
export { FrameConnection, TransportTimeout, Unreachable } from "./transport.js";
export {
  adapterSendAct,
  buildActEnvelope,
  checkResponse,
  sendCompact,
  AlreadyProcessed,
  ResponseVerificationFailed,
  ServerRejected,
  type AdapterConfig,
  type Observation,
} from "./adapter.js";
export { adapterAgentDemo, type AgentResult, type ScriptStep, type ToolHook } from "./agent.js";
