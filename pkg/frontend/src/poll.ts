// One in-flight poll per job; resolves on a terminal state.

import type { ApiClient } from "./api.js";
import type { JobDocument } from "./types.js";

export async function pollJob(client: ApiClient, jobId: string,
                              onUpdate?: (job: JobDocument) => void,
                              intervalMs = 500): Promise<JobDocument> {
  for (;;) {
    const job = await client.job(jobId);
    if (onUpdate) {
      onUpdate(job);
    }
    if (job.status === "done" || job.status === "failed") {
      return job;
    }
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
}
