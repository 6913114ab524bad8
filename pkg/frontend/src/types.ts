export type Side = 'left' | 'right';

/** One 2AFC presentation as the server exposes it: URLs only, never method names. */
export interface TrialView {
  trial_id: string;
  left: string;
  right: string;
  done: number;
  total: number;
}

export interface CompleteView {
  complete: true;
  done: number;
  total: number;
}

export type NextResponse = TrialView | CompleteView;

export interface VoteAck {
  recorded: boolean;
  done: number;
  total: number;
}

export function isComplete(r: NextResponse): r is CompleteView {
  return (r as CompleteView).complete === true;
}
