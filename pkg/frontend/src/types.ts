// Wire types of the annotation service HTTP contract.

export interface Profile {
  target_id: string;
  name: string;
  description: string;
  followers: number;
  followees: number;
  statuses: number;
  profile_url: string;
  image_url: string;
  sample_tweets: string[]; // always exactly five, possibly padded with ""
  tweets_padded: boolean;
}

export interface Task {
  task_id: string;
  run: number;
  question_id: number;
  question: string;
  left: Profile;
  right: Profile;
  proxy: Profile;
  lease_expires: number;
}

export interface Batch {
  worker_id: string;
  tasks: Task[];
}

export interface ResponseItem {
  task_id: string;
  choice: string;
  shown_left: string;
}

export interface Ack {
  task_id: string;
  status: 'recorded' | 'duplicate' | 'rejected';
  reason?: string | null;
}

/** The side-assignment chosen for one task render. */
export interface Placement {
  shownLeft: Profile;
  shownRight: Profile;
}
