/**
 * Minimal CBOR subset matching the daemon's wire formats: unsigned and
 * negative integers, byte strings, text, arrays, maps, booleans, null.
 * Encoding is definite-length with minimal integer heads. Maps are
 * represented as Map<number | string, CborValue> so integer keys survive.
 */

export type CborValue =
  | number
  | boolean
  | null
  | string
  | Uint8Array
  | CborValue[]
  | CborMap;

export type CborMap = Map<number | string, CborValue>;

export class CborError extends Error {}
export class CborTruncated extends CborError {}

function encodeHead(major: number, value: number): Buffer {
  if (!Number.isSafeInteger(value) || value < 0) {
    throw new CborError(`bad length/argument: ${value}`);
  }
  if (value < 0x18) return Buffer.from([(major << 5) | value]);
  if (value < 0x100) return Buffer.from([(major << 5) | 0x18, value]);
  if (value < 0x10000) {
    const buf = Buffer.alloc(3);
    buf[0] = (major << 5) | 0x19;
    buf.writeUInt16BE(value, 1);
    return buf;
  }
  if (value < 0x100000000) {
    const buf = Buffer.alloc(5);
    buf[0] = (major << 5) | 0x1a;
    buf.writeUInt32BE(value, 1);
    return buf;
  }
  const buf = Buffer.alloc(9);
  buf[0] = (major << 5) | 0x1b;
  buf.writeBigUInt64BE(BigInt(value), 1);
  return buf;
}

export function encode(value: CborValue): Buffer {
  const parts: Buffer[] = [];
  encodeInto(value, parts);
  return Buffer.concat(parts);
}

function encodeInto(value: CborValue, parts: Buffer[]): void {
  if (value === true) {
    parts.push(Buffer.from([0xf5]));
  } else if (value === false) {
    parts.push(Buffer.from([0xf4]));
  } else if (value === null) {
    parts.push(Buffer.from([0xf6]));
  } else if (typeof value === "number") {
    if (!Number.isSafeInteger(value)) {
      throw new CborError(`only integers are supported, got ${value}`);
    }
    if (value >= 0) parts.push(encodeHead(0, value));
    else parts.push(encodeHead(1, -1 - value));
  } else if (value instanceof Uint8Array) {
    parts.push(encodeHead(2, value.length), Buffer.from(value));
  } else if (typeof value === "string") {
    const raw = Buffer.from(value, "utf-8");
    parts.push(encodeHead(3, raw.length), raw);
  } else if (Array.isArray(value)) {
    parts.push(encodeHead(4, value.length));
    for (const item of value) encodeInto(item, parts);
  } else if (value instanceof Map) {
    parts.push(encodeHead(5, value.size));
    const keys = [...value.keys()].sort((a, b) =>
      typeof a === "number" && typeof b === "number"
        ? a - b
        : String(a) < String(b) ? -1 : 1);
    for (const key of keys) {
      encodeInto(key as CborValue, parts);
      encodeInto(value.get(key)!, parts);
    }
  } else {
    throw new CborError(`cannot encode ${typeof value}`);
  }
}

interface Decoded {
  value: CborValue;
  next: number;
}

export function decodePrefix(data: Buffer, offset = 0): Decoded {
  if (offset >= data.length) throw new CborTruncated("empty input");
  const initial = data[offset];
  if (initial === 0xff) throw new CborError("unexpected break code");
  const major = initial >> 5;
  const info = initial & 0x1f;

  let argument: number;
  let pos: number;
  if (info < 0x18) {
    argument = info;
    pos = offset + 1;
  } else if (info <= 0x1b) {
    const width = 1 << (info - 0x18);
    if (offset + 1 + width > data.length) {
      throw new CborTruncated("truncated integer head");
    }
    if (width === 8) {
      const big = data.readBigUInt64BE(offset + 1);
      if (big > BigInt(Number.MAX_SAFE_INTEGER)) {
        throw new CborError("integer exceeds safe range");
      }
      argument = Number(big);
    } else {
      argument = data.readUIntBE(offset + 1, width);
    }
    pos = offset + 1 + width;
  } else if (info === 0x1f && (major === 4 || major === 5)) {
    return decodeIndefinite(data, offset + 1, major);
  } else {
    throw new CborError(`unsupported additional info ${info}`);
  }

  switch (major) {
    case 0:
      return { value: argument, next: pos };
    case 1:
      return { value: -1 - argument, next: pos };
    case 2:
    case 3: {
      if (pos + argument > data.length) {
        throw new CborTruncated("truncated string payload");
      }
      const raw = data.subarray(pos, pos + argument);
      return {
        value: major === 3 ? raw.toString("utf-8") : new Uint8Array(raw),
        next: pos + argument,
      };
    }
    case 4: {
      const items: CborValue[] = [];
      for (let i = 0; i < argument; i++) {
        const item = decodePrefix(data, pos);
        items.push(item.value);
        pos = item.next;
      }
      return { value: items, next: pos };
    }
    case 5: {
      const map: CborMap = new Map();
      for (let i = 0; i < argument; i++) {
        const key = decodePrefix(data, pos);
        const val = decodePrefix(data, key.next);
        map.set(key.value as number | string, val.value);
        pos = val.next;
      }
      return { value: map, next: pos };
    }
    case 7:
      if (initial === 0xf5) return { value: true, next: pos };
      if (initial === 0xf4) return { value: false, next: pos };
      if (initial === 0xf6) return { value: null, next: pos };
      throw new CborError(`unsupported simple value 0x${initial.toString(16)}`);
    default:
      throw new CborError(`unsupported major type ${major}`);
  }
}

function decodeIndefinite(data: Buffer, pos: number, major: number): Decoded {
  if (major === 4) {
    const items: CborValue[] = [];
    for (;;) {
      if (pos >= data.length) throw new CborTruncated("unterminated array");
      if (data[pos] === 0xff) return { value: items, next: pos + 1 };
      const item = decodePrefix(data, pos);
      items.push(item.value);
      pos = item.next;
    }
  }
  const map: CborMap = new Map();
  for (;;) {
    if (pos >= data.length) throw new CborTruncated("unterminated map");
    if (data[pos] === 0xff) return { value: map, next: pos + 1 };
    const key = decodePrefix(data, pos);
    const val = decodePrefix(data, key.next);
    map.set(key.value as number | string, val.value);
    pos = val.next;
  }
}

export function decode(data: Buffer): CborValue {
  const result = decodePrefix(data, 0);
  if (result.next !== data.length) {
    throw new CborError(`${data.length - result.next} trailing bytes`);
  }
  return result.value;
}
