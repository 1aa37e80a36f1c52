/**
 * Console-side session state, built purely from received frames.
 *
 * The store never learns the caller's true position: the only coordinates it
 * ever holds come from location_estimate frames, and the "found" marker is
 * unlocked exclusively by a phase_changed event reaching phase "found".
 * Contour layers are keyed by region and only advance: a frame whose
 * generation is not newer than what is already rendered gets dropped, so
 * out-of-order or duplicated delivery cannot make the map flicker backwards.
 */

import {
  AnyMessage,
  ChannelConfigMsg,
  ContourMapMsg,
  ErrorMsg,
  LocationEstimateMsg,
  SessionEventMsg,
  SweepResultMsg,
  TaskAssignmentMsg,
  decodeFrame,
} from "./protocol";

export interface UnitTrack {
  id: string;
  x: number;
  y: number;
  heading: number;
  floorIndex: number | null;
  lastSeen_s: number;
  lastRssiDbm: number | null;
  reportCount: number;
}

export interface ContourLayer {
  key: string;
  latest: ContourMapMsg;
  /** generations in the order they were accepted for rendering */
  rendered: number[];
}

export interface FoundMark {
  x: number;
  y: number;
  floorIndex: number | null;
  buildingIndex: number | null;
  roomIndex: number | null;
  time_s: number;
}

export function layerKey(msg: ContourMapMsg): string {
  if (msg.region_kind === "outdoor") return "outdoor";
  return `${msg.region_kind}:${msg.building_index ?? "?"}/${msg.floor_index ?? "?"}`;
}

export class ConsoleStore {
  sessionId = "";
  phase = "idle";
  config: ChannelConfigMsg | null = null;
  estimate: LocationEstimateMsg | null = null;
  layers = new Map<string, ContourLayer>();
  /** global accepted contour order, for replay verification */
  renderLog: Array<{ key: string; generation: number }> = [];
  units = new Map<string, UnitTrack>();
  assignments = new Map<string, TaskAssignmentMsg>();
  sweeps: SweepResultMsg[] = [];
  events: SessionEventMsg[] = [];
  errors: ErrorMsg[] = [];
  found: FoundMark | null = null;
  droppedStale = 0;
  droppedDuplicates = 0;
  private seenReports = new Set<string>();

  applyLine(line: string | Buffer): AnyMessage {
    const msg = decodeFrame(line);
    this.applyFrame(msg);
    return msg;
  }

  applyFrame(msg: AnyMessage): void {
    if (!this.sessionId && msg.session_id) this.sessionId = msg.session_id;
    switch (msg.type) {
      case "channel_config":
        this.config = msg;
        if (this.phase === "idle") this.phase = "setup";
        return;
      case "measurement_report": {
        const key = `${msg.sme_id}#${msg.report_seq}`;
        if (this.seenReports.has(key)) {
          this.droppedDuplicates += 1;
          return;
        }
        this.seenReports.add(key);
        const prev = this.units.get(msg.sme_id);
        this.units.set(msg.sme_id, {
          id: msg.sme_id,
          x: msg.x,
          y: msg.y,
          heading: msg.heading,
          floorIndex: msg.floor_index,
          lastSeen_s: msg.timestamp_s,
          lastRssiDbm: msg.rssi_valid ? msg.rssi_dbm : null,
          reportCount: (prev?.reportCount ?? 0) + 1,
        });
        return;
      }
      case "location_estimate":
        if (this.estimate === null || msg.seq >= this.estimate.seq) {
          this.estimate = msg;
        }
        return;
      case "contour_map": {
        const key = layerKey(msg);
        const layer = this.layers.get(key);
        if (layer !== undefined && msg.generation <= layer.latest.generation) {
          this.droppedStale += 1;
          return;
        }
        if (layer === undefined) {
          this.layers.set(key, { key, latest: msg, rendered: [msg.generation] });
        } else {
          layer.latest = msg;
          layer.rendered.push(msg.generation);
        }
        this.renderLog.push({ key, generation: msg.generation });
        return;
      }
      case "task_assignment": {
        const prev = this.assignments.get(msg.rescuer_id);
        if (prev === undefined || msg.revision >= prev.revision) {
          this.assignments.set(msg.rescuer_id, msg);
        }
        return;
      }
      case "sweep_result":
        this.sweeps.push(msg);
        return;
      case "session_event":
        this.events.push(msg);
        this.applyEvent(msg);
        return;
      case "error":
        this.errors.push(msg);
        return;
      case "call_connect_request":
        // echo of a console command; nothing to track
        return;
    }
  }

  private applyEvent(msg: SessionEventMsg): void {
    if (msg.event === "session_started") {
      this.phase = "setup";
      return;
    }
    if (msg.event !== "phase_changed") return;
    const to = msg.detail["to"];
    if (typeof to !== "string") return;
    this.phase = to;
    if (to === "found") {
      // reveal uses the last estimate; the wire never carries ground truth
      const roomEvent = [...this.events]
        .reverse()
        .find((e) => e.event === "found" || e.event === "room_committed");
      const room = roomEvent?.detail["room_index"];
      this.found = {
        x: this.estimate?.x ?? NaN,
        y: this.estimate?.y ?? NaN,
        floorIndex: this.estimate?.floor_index ?? null,
        buildingIndex: this.estimate?.building_index ?? null,
        roomIndex: typeof room === "number" ? room : null,
        time_s: msg.time_s,
      };
    }
  }

  /** Layers sorted with the outdoor map first, then floors in index order. */
  orderedLayers(): ContourLayer[] {
    return [...this.layers.values()].sort((a, b) =>
      a.key === "outdoor" ? -1 : b.key === "outdoor" ? 1 : a.key.localeCompare(b.key),
    );
  }
}
