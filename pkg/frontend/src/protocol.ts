/**
 * Wire schemas for the caller-search service protocol.
 *
 * Every frame on the socket is one JSON line with the envelope
 * {type, schema_version, session_id, sender, seq, payload}. The payload
 * shape depends on type; there are exactly nine variants. Unknown payload
 * fields are ignored and missing ones take their defaults, matching the
 * server's decoder, but field types are checked strictly here: a console
 * has no business guessing what a malformed server frame meant.
 */

import { z } from "zod";

export const PROTOCOL_VERSION = "1.0";

export class ProtocolError extends Error {}
export class MalformedFrameError extends ProtocolError {}
export class UnknownVariantError extends ProtocolError {}
export class SchemaVersionError extends ProtocolError {}

const int = z.number().int();
const num = z.number();
const point = z.tuple([num, num]);
const rect = z.tuple([num, num, num, num]);
const route = z.array(point);

const envelopeFields = {
  session_id: z.string(),
  sender: z.string(),
  seq: int.nonnegative(),
};

export const CallConnectRequestSchema = z.object({
  type: z.literal("call_connect_request"),
  ...envelopeFields,
  target_id: z.string().default(""),
  requester: z.string().default(""),
});

export const ChannelConfigSchema = z.object({
  type: z.literal("channel_config"),
  ...envelopeFields,
  uplink_freq_hz: num.default(738e6),
  downlink_freq_hz: num.default(793e6),
  bandwidth_hz: num.default(7.5e6),
  subframe_ms: num.default(1.0),
  period_ms: num.default(80.0),
  tx_power_dbm: num.default(23.0),
  voice_tx_power_dbm: num.default(13.0),
  dmrs_symbols: int.default(2),
  rx_antennas: int.default(2),
  noise_figure_db: num.default(7.0),
  meas_noise_db: num.default(2.0),
  detection_margin_db: num.default(3.0),
  activated_at_s: num.default(0.0),
});

export const MeasurementReportSchema = z.object({
  type: z.literal("measurement_report"),
  ...envelopeFields,
  sme_id: z.string().default(""),
  target_id: z.string().default(""),
  report_seq: int.default(0),
  timestamp_s: num.default(0.0),
  x: num.default(0.0),
  y: num.default(0.0),
  heading: num.default(0.0),
  building_index: int.nullable().default(null),
  floor_index: int.nullable().default(null),
  mode: z.string().default("omni"),
  antenna_heading_rad: num.nullable().default(null),
  rssi_dbm: num.default(0.0),
  rssi_valid: z.boolean().default(false),
});

export const LocationEstimateSchema = z.object({
  type: z.literal("location_estimate"),
  ...envelopeFields,
  x: num.default(0.0),
  y: num.default(0.0),
  cov: z.tuple([point, point]).default([[1.0, 0.0], [0.0, 1.0]]),
  floor_index: int.nullable().default(null),
  building_index: int.nullable().default(null),
  n_reports: int.default(0),
  timestamp_s: num.default(0.0),
  degenerate: z.boolean().default(false),
  boundary_center: point.default([0.0, 0.0]),
  boundary_semi_axes: point.default([1.0, 1.0]),
  boundary_orientation_rad: num.default(0.0),
  boundary_rect: rect.default([0.0, 0.0, 1.0, 1.0]),
});

export const ContourMapSchema = z.object({
  type: z.literal("contour_map"),
  ...envelopeFields,
  region_kind: z.string().default("outdoor"),
  region_rect: rect.default([0.0, 0.0, 1.0, 1.0]),
  building_index: int.nullable().default(null),
  floor_index: int.nullable().default(null),
  origin: point.default([0.0, 0.0]),
  cell_size: num.default(5.0),
  shape: z.tuple([int, int]).default([1, 1]),
  values: z.array(z.array(num.nullable())).default([[null]]),
  peak_cell: z.tuple([int, int]).default([0, 0]),
  peak_dbm: num.default(0.0),
  generation: int.default(0),
});

export const TaskAssignmentSchema = z.object({
  type: z.literal("task_assignment"),
  ...envelopeFields,
  rescuer_id: z.string().default(""),
  phase: z.string().default("building"),
  strip: rect.nullable().default(null),
  floors: z.array(int).default([]),
  routes: z.array(route).default([]),
  building_index: int.nullable().default(null),
  revision: int.default(0),
});

export const SweepResultSchema = z.object({
  type: z.literal("sweep_result"),
  ...envelopeFields,
  sme_id: z.string().default(""),
  x: num.default(0.0),
  y: num.default(0.0),
  building_index: int.nullable().default(null),
  floor_index: int.nullable().default(null),
  started_s: num.default(0.0),
  elapsed_s: num.default(0.0),
  bearings_rad: z.array(num).default([]),
  mean_rssi_dbm: z.array(num).default([]),
  best_bearing_rad: num.default(0.0),
});

export const SessionEventSchema = z.object({
  type: z.literal("session_event"),
  ...envelopeFields,
  time_s: num.default(0.0),
  actor: z.string().default(""),
  event: z.string().default(""),
  detail: z.record(z.string(), z.unknown()).default({}),
});

export const ErrorSchema = z.object({
  type: z.literal("error"),
  ...envelopeFields,
  code: z.string().default(""),
  detail: z.string().default(""),
});

export const MESSAGE_SCHEMAS = {
  call_connect_request: CallConnectRequestSchema,
  channel_config: ChannelConfigSchema,
  measurement_report: MeasurementReportSchema,
  location_estimate: LocationEstimateSchema,
  contour_map: ContourMapSchema,
  task_assignment: TaskAssignmentSchema,
  sweep_result: SweepResultSchema,
  session_event: SessionEventSchema,
  error: ErrorSchema,
} as const;

export type MessageType = keyof typeof MESSAGE_SCHEMAS;

export type CallConnectRequest = z.infer<typeof CallConnectRequestSchema>;
export type ChannelConfigMsg = z.infer<typeof ChannelConfigSchema>;
export type MeasurementReportMsg = z.infer<typeof MeasurementReportSchema>;
export type LocationEstimateMsg = z.infer<typeof LocationEstimateSchema>;
export type ContourMapMsg = z.infer<typeof ContourMapSchema>;
export type TaskAssignmentMsg = z.infer<typeof TaskAssignmentSchema>;
export type SweepResultMsg = z.infer<typeof SweepResultSchema>;
export type SessionEventMsg = z.infer<typeof SessionEventSchema>;
export type ErrorMsg = z.infer<typeof ErrorSchema>;

export type AnyMessage =
  | CallConnectRequest
  | ChannelConfigMsg
  | MeasurementReportMsg
  | LocationEstimateMsg
  | ContourMapMsg
  | TaskAssignmentMsg
  | SweepResultMsg
  | SessionEventMsg
  | ErrorMsg;

const ENVELOPE_KEYS = ["type", "schema_version", "session_id", "sender", "seq", "payload"];

/** Parse one frame (without or with its trailing newline) into a message. */
export function decodeFrame(line: string | Buffer): AnyMessage {
  const text = typeof line === "string" ? line : line.toString("utf-8");
  let frame: unknown;
  try {
    frame = JSON.parse(text);
  } catch (e) {
    throw new MalformedFrameError(`frame is not valid JSON: ${e}`);
  }
  if (typeof frame !== "object" || frame === null || Array.isArray(frame)) {
    throw new MalformedFrameError("frame is not a JSON object");
  }
  const obj = frame as Record<string, unknown>;
  for (const key of ENVELOPE_KEYS) {
    if (!(key in obj)) throw new MalformedFrameError(`frame missing ${key}`);
  }
  const version = String(obj.schema_version);
  const major = version.split(".")[0];
  if (!/^\d+$/.test(major)) {
    throw new SchemaVersionError(`bad schema_version ${version}`);
  }
  if (major !== PROTOCOL_VERSION.split(".")[0]) {
    throw new SchemaVersionError(`incompatible schema_version ${version}`);
  }
  const type = obj.type as string;
  const schema = MESSAGE_SCHEMAS[type as MessageType];
  if (schema === undefined) {
    throw new UnknownVariantError(`unknown message type ${JSON.stringify(type)}`);
  }
  if (typeof obj.payload !== "object" || obj.payload === null || Array.isArray(obj.payload)) {
    throw new MalformedFrameError("payload is not a JSON object");
  }
  const flat = {
    type,
    session_id: obj.session_id,
    sender: obj.sender,
    seq: obj.seq,
    ...(obj.payload as Record<string, unknown>),
  };
  const parsed = schema.safeParse(flat);
  if (!parsed.success) {
    throw new MalformedFrameError(`bad ${type} payload: ${parsed.error.message}`);
  }
  return parsed.data as AnyMessage;
}

/** JSON with recursively sorted keys and compact separators, matching the
 * server's canonical frame encoding. Non-finite numbers are an error. */
export function canonicalStringify(value: unknown): string {
  if (value === null) return "null";
  if (typeof value === "number") {
    if (!Number.isFinite(value)) throw new MalformedFrameError("non-finite number");
    return JSON.stringify(value);
  }
  if (typeof value === "string" || typeof value === "boolean") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(canonicalStringify).join(",")}]`;
  }
  if (typeof value === "object") {
    const obj = value as Record<string, unknown>;
    const parts = Object.keys(obj)
      .sort()
      .map((k) => `${JSON.stringify(k)}:${canonicalStringify(obj[k])}`);
    return `{${parts.join(",")}}`;
  }
  throw new MalformedFrameError(`unencodable value of type ${typeof value}`);
}

/** One newline-terminated frame for a message. */
export function encodeFrame(msg: AnyMessage): string {
  const schema = MESSAGE_SCHEMAS[msg.type];
  if (schema === undefined) {
    throw new UnknownVariantError(`unknown message type ${JSON.stringify(msg.type)}`);
  }
  const checked = schema.parse(msg) as Record<string, unknown>;
  const payload: Record<string, unknown> = {};
  for (const [k, v] of Object.entries(checked)) {
    if (k !== "type" && k !== "session_id" && k !== "sender" && k !== "seq") {
      payload[k] = v;
    }
  }
  const frame = {
    type: checked.type,
    schema_version: PROTOCOL_VERSION,
    session_id: checked.session_id,
    sender: checked.sender,
    seq: checked.seq,
    payload,
  };
  return canonicalStringify(frame) + "\n";
}

/** Incremental newline splitter for a socket byte stream. */
export class FrameSplitter {
  private buffer = "";

  push(chunk: string | Buffer): string[] {
    this.buffer += typeof chunk === "string" ? chunk : chunk.toString("utf-8");
    const lines = this.buffer.split("\n");
    this.buffer = lines.pop() ?? "";
    return lines.filter((l) => l.trim().length > 0);
  }

  /** Anything left without a terminating newline (a truncated tail frame). */
  residue(): string {
    return this.buffer;
  }
}
