import { z } from "zod";

export const ANSWER_VALUES = ["yes", "no", "unsure"] as const;
export type Answer = (typeof ANSWER_VALUES)[number];

export const sessionSchema = z.object({
  classes: z.array(z.string()),
  questions: z.record(z.string(), z.string()),
  strategy: z.string(),
  labeler: z.string(),
  phase: z.string(),
  iteration: z.number().int(),
  batch_size: z.number().int(),
  required_annotations: z.number().int(),
  queue_size: z.number().int(),
  undecided: z.number().int(),
});
export type Session = z.infer<typeof sessionSchema>;

// One labeling task as served; attention checks arrive in the same shape
// and are not identifiable client-side.
export const taskSchema = z.object({
  doc_id: z.string(),
  text: z.string(),
  questions: z.record(z.string(), z.string()),
});
export type Task = z.infer<typeof taskSchema>;

export const taskPageSchema = z.object({
  annotator: z.string(),
  iteration: z.number().int(),
  phase: z.string(),
  tasks: z.array(taskSchema),
  remaining: z.number().int(),
});
export type TaskPage = z.infer<typeof taskPageSchema>;

export interface AnnotationRecord {
  doc_id: string;
  annotator: string;
  answers: Record<string, Answer>;
}

export const submitResultSchema = z.object({
  accepted: z.number().int(),
  undecided: z.number().int(),
});
export type SubmitResult = z.infer<typeof submitResultSchema>;

export const fieldErrorSchema = z.object({
  index: z.number().int().nullable(),
  field: z.string().nullable(),
  error: z.string(),
});
export type FieldError = z.infer<typeof fieldErrorSchema>;

export const iterationMetricSchema = z.object({
  category: z.string(),
  ap: z.number(),
  ap_se: z.number(),
  e_mid: z.number(),
  diversity: z.number(),
  converged: z.boolean(),
});

export const iterationEntrySchema = z.object({
  iteration: z.number().int(),
  queried: z.number().int(),
  errors: z.array(z.record(z.string(), z.unknown())),
  metrics: z.array(iterationMetricSchema),
});
export type IterationEntry = z.infer<typeof iterationEntrySchema>;

export const iterationsViewSchema = z.object({
  iteration: z.number().int(),
  phase: z.string(),
  history: z.array(iterationEntrySchema),
});
export type IterationsView = z.infer<typeof iterationsViewSchema>;

export const advanceResultSchema = z.object({
  iteration: z.number().int(),
  phase: z.string(),
  queue_size: z.number().int(),
});
export type AdvanceResult = z.infer<typeof advanceResultSchema>;
