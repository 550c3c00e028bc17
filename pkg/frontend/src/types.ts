// Wire payload shapes, mirrored from the service's JSON responses.

export interface Ref {
  id: string;
  name: string;
}

export interface SystemPart {
  id: string;
  name: string;
  badges: Ref[];
  subparts: SystemPart[];
}

export interface SystemProjection {
  rev: number;
  kind: "system";
  parts: SystemPart[];
  connections: [string, string][];
}

export interface FmeaTreeNode {
  id: string;
  name: string;
  tier: 1 | 2 | 3 | 4;
  role: string;
  children: FmeaTreeNode[];
}

export interface FmeaTreeProjection {
  rev: number;
  kind: "fmea-tree";
  roots: FmeaTreeNode[];
}

export interface GsnNode {
  id: string;
  name: string;
  role: "goal" | "strategy" | "evidence";
  fmea: Ref[];
}

export interface GsnProjection {
  rev: number;
  kind: "gsn";
  nodes: GsnNode[];
  edges: [string, string, string][];
}

export interface Projections {
  system: SystemProjection;
  fmeaTree: FmeaTreeProjection;
  gsn: GsnProjection;
}

export interface Finding {
  rule: string;
  subject: string;
  message: string;
  severity: "error" | "warning";
}

export interface ChecksResponse {
  rev: number;
  findings: Finding[];
}

export interface ItemPayload {
  item: {
    id: string;
    type: string;
    attributes: Record<string, unknown>;
    created_rev: number;
    modified_rev: number;
  };
  outgoing: { relation: string; source: string; target: string }[];
  incoming: { relation: string; source: string; target: string }[];
}

export interface ChangeEventData {
  revision: number;
  author: string;
  item_ids: string[];
  relations: string[];
  emitted_at: string;
}

export interface ViewEditRequest {
  view: "system" | "fmea-table" | "fmea-tree" | "gsn" | "fha";
  verb: "add-node" | "rename" | "set-attr" | "add-edge" | "remove";
  payload: Record<string, unknown>;
}

export interface EditAccepted {
  ok: true;
  revision: number;
  newHead: number;
}

export interface EditRejected {
  ok: false;
  code: string;
  message: string;
  subject: string | null;
  holder: string | null;
}

export type EditResult = EditAccepted | EditRejected;

export interface LockInfo {
  item: string;
  holder: string;
  acquired_rev: number;
  expires_in: number;
}
