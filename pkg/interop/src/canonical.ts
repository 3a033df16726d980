/**
 * Canonical JSON: object keys sorted by UTF-8 byte order, no insignificant
 * whitespace, UTF-8 text. Only the signer needs this determinism; the
 * verifier always works on received bytes verbatim.
 */

export function canonicalJson(value: unknown): string {
  if (value === null || typeof value === "boolean" || typeof value === "string") {
    return JSON.stringify(value);
  }
  if (typeof value === "number") {
    if (!Number.isFinite(value)) {
      throw new Error("non-finite numbers are not representable");
    }
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (typeof value === "object") {
    const record = value as Record<string, unknown>;
    const keys = Object.keys(record).sort((a, b) =>
      Buffer.compare(Buffer.from(a, "utf8"), Buffer.from(b, "utf8")));
    return "{" + keys.map((k) => JSON.stringify(k) + ":" + canonicalJson(record[k]))
      .join(",") + "}";
  }
  throw new Error(`cannot canonically serialize a ${typeof value}`);
}

export function canonicalBytes(value: unknown): Buffer {
  return Buffer.from(canonicalJson(value), "utf8");
}
