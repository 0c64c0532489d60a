/**
 * Rating widgets and the questionnaire form: seven 1-5 scale items in fixed
 * order, demographics, and open feedback. Scale values are enforced client
 * side and submit stays disabled until every scale item is answered.
 */

import { ApiClient, QuestionnairePayload } from "./api.js";

export type ScaleKey = "q1" | "q2" | "q3" | "q4" | "q5" | "q6" | "q7";

export const SCALE_ITEMS: ReadonlyArray<{ key: ScaleKey; label: string }> = [
  { key: "q1", label: "Overall, how satisfied are you with the tool?" },
  { key: "q2", label: "How likely are you to keep using it for future projects?" },
  { key: "q3", label: "How likely are you to recommend it to your peers?" },
  { key: "q4", label: "It rapidly generates the urban scenes I envision." },
  { key: "q5", label: "The generated images meet my requirements." },
  { key: "q6", label: "I prefer designing public spaces myself over expert-only designs." },
  { key: "q7", label: "The overall process is convenient and user-friendly." },
];

function checkScale(value: number): void {
  if (!Number.isInteger(value) || value < 1 || value > 5) {
    throw new RangeError(`scale answers must be integers 1..5, got ${value}`);
  }
}

export class QuestionnaireForm {
  private answers = new Map<ScaleKey, number>();
  gender = "";
  education = "";
  birthYear = "";
  profession = "";
  designBackground = "";
  openFeedback = "";

  setAnswer(key: ScaleKey, value: number): void {
    checkScale(value);
    this.answers.set(key, value);
  }

  answer(key: ScaleKey): number | undefined {
    return this.answers.get(key);
  }

  /** Submit stays disabled until every scale item has an answer. */
  isComplete(): boolean {
    return SCALE_ITEMS.every(({ key }) => this.answers.has(key));
  }

  payload(): QuestionnairePayload {
    if (!this.isComplete()) {
      throw new Error("questionnaire is incomplete");
    }
    return {
      q1: this.answers.get("q1")!,
      q2: this.answers.get("q2")!,
      q3: this.answers.get("q3")!,
      q4: this.answers.get("q4")!,
      q5: this.answers.get("q5")!,
      q6: this.answers.get("q6")!,
      q7: this.answers.get("q7")!,
      gender: this.gender,
      education: this.education,
      birth_year: this.birthYear,
      profession: this.profession,
      design_background: this.designBackground,
      open_feedback: this.openFeedback,
    };
  }

  async submit(api: ApiClient, entryId: string): Promise<boolean> {
    if (!this.isComplete()) return false;
    await api.submitQuestionnaire(entryId, this.payload());
    return true;
  }
}

/** One star-rating control per variant; locked after a successful submit. */
export class RatingWidget {
  submitted = false;

  constructor(readonly variantId: string) {}

  async submit(api: ApiClient, score: number): Promise<boolean> {
    checkScale(score);
    if (this.submitted) return false;
    await api.rateVariant(this.variantId, score);
    this.submitted = true;
    return true;
  }
}
