// Wire types mirroring the /api/query response schema.

export interface ReferencePayload {
  url: string;
  title: string;
  snippet: string;
}

export interface SentencePayload {
  text: string;
  references: ReferencePayload[];
}

export interface ExercisePayload {
  name: string;
  video_url: string;
  instructions: string | null;
}

export interface MedicationPayload {
  name: string;
  description: string;
  url: string | null;
}

export interface QueryResponse {
  answer: SentencePayload[];
  exercises: ExercisePayload[];
  medications: MedicationPayload[];
  grounded: boolean;
  disclaimer: string;
  cache_hit: boolean;
}

export interface HealthResponse {
  status: string;
  kb_counts: Record<string, number>;
  backend: string;
}
