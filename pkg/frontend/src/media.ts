/**
 * Media menu: configure provider, voice, and style instructions, then queue
 * generation jobs for the selected nodes.
 *
 * Job rows track the event stream: queued and running badges, a red badge
 * with the error text on failure, and on done the asset version plus, for
 * audio, the clip duration and a playback control. Nodes with empty
 * segments are flagged before submit instead of round-tripping a 4xx.
 */

import type { ViewState } from "./state.js";

export interface MediaActions {
  submit(body: {
    selection: string[];
    kind: string;
    provider: string;
    voice: string | null;
    style_instructions: string | null;
  }): Promise<{ job_ids: string[]; version: number }>;
  /** Absolute URL for an asset uri like "assets/3/audio-v1.mp3". */
  assetUrl(uri: string): string;
}

export class MediaPane {
  readonly kind: HTMLSelectElement;
  readonly provider: HTMLInputElement;
  readonly voice: HTMLInputElement;
  readonly style: HTMLInputElement;
  readonly generateButton: HTMLButtonElement;
  readonly notice: HTMLElement;
  readonly jobList: HTMLElement;

  constructor(
    readonly container: HTMLElement,
    readonly state: ViewState,
    readonly actions: MediaActions,
  ) {
    container.classList.add("media");
    const form = document.createElement("div");
    form.className = "media-form";

    this.kind = document.createElement("select");
    this.kind.className = "media-kind";
    for (const kind of ["audio", "image", "video"]) {
      const option = document.createElement("option");
      option.value = kind;
      option.textContent = kind;
      this.kind.appendChild(option);
    }
    this.provider = textInput("media-provider", "provider", "scripted");
    this.voice = textInput("media-voice", "voice", "");
    this.style = textInput("media-style", "style instructions", "");
    this.generateButton = document.createElement("button");
    this.generateButton.className = "media-generate";
    this.generateButton.textContent = "Generate for selection";

    form.appendChild(labelled("Kind", this.kind));
    form.appendChild(labelled("Provider", this.provider));
    form.appendChild(labelled("Voice", this.voice));
    form.appendChild(labelled("Style", this.style));
    form.appendChild(this.generateButton);

    this.notice = document.createElement("div");
    this.notice.className = "media-notice";
    this.jobList = document.createElement("div");
    this.jobList.className = "media-jobs";

    container.appendChild(form);
    container.appendChild(this.notice);
    container.appendChild(this.jobList);

    this.generateButton.addEventListener("click", () => void this.submit());
  }

  /** Selected nodes whose segments are blank; media needs text to work from. */
  emptySelected(): string[] {
    return this.state.graph.nodes
      .filter((n) => this.state.selection.has(n.id) && n.data.segment.trim() === "")
      .map((n) => n.id);
  }

  async submit(): Promise<void> {
    this.notice.textContent = "";
    this.notice.classList.remove("error");
    const selection = [...this.state.selection].sort();
    if (!selection.length) {
      this.notice.textContent = "Select at least one node first.";
      return;
    }
    const empty = this.emptySelected();
    if (empty.length) {
      this.notice.classList.add("error");
      this.notice.textContent = `Empty segment on node(s) ${empty.join(", ")}; write text before generating media.`;
      return;
    }
    try {
      const reply = await this.actions.submit({
        selection,
        kind: this.kind.value,
        provider: this.provider.value || "scripted",
        voice: this.voice.value || null,
        style_instructions: this.style.value || null,
      });
      this.notice.textContent = `${reply.job_ids.length} job(s) queued.`;
    } catch (error) {
      this.notice.classList.add("error");
      this.notice.textContent = String(error instanceof Error ? error.message : error);
    }
  }

  /** Redraw job rows from the badge map and asset registry. */
  render(): void {
    this.jobList.textContent = "";
    const badges = [...this.state.badges.values()];
    for (const badge of badges) {
      const row = document.createElement("div");
      row.className = `media-job media-${badge.status}`;
      row.dataset.jobId = badge.jobId;

      const label = document.createElement("span");
      label.className = "media-job-label";
      label.textContent = `node ${badge.nodeId} ${badge.kind}`;
      row.appendChild(label);

      const pill = document.createElement("span");
      pill.className = `badge badge-${badge.status}`;
      pill.textContent = badge.status;
      row.appendChild(pill);

      if (badge.status === "done" && badge.version !== undefined) {
        const version = document.createElement("span");
        version.className = "media-version";
        version.textContent = `v${badge.version}`;
        row.appendChild(version);
      }
      if (badge.status === "failed" && badge.error) {
        const error = document.createElement("span");
        error.className = "media-error";
        error.textContent = badge.error;
        row.appendChild(error);
      }
      if (badge.status === "done" && badge.kind === "audio") {
        const asset = this.state.assets.find((a) => a.asset_id === badge.assetId);
        if (asset) {
          if (asset.duration_s !== null) {
            const duration = document.createElement("span");
            duration.className = "media-duration";
            duration.textContent = `${asset.duration_s.toFixed(2)} s`;
            row.appendChild(duration);
          }
          const player = document.createElement("audio");
          player.controls = true;
          player.src = this.actions.assetUrl(asset.uri);
          row.appendChild(player);
        }
      }
      this.jobList.appendChild(row);
    }
  }
}

function textInput(className: string, placeholder: string, value: string): HTMLInputElement {
  const input = document.createElement("input");
  input.type = "text";
  input.className = className;
  input.placeholder = placeholder;
  input.value = value;
  return input;
}

function labelled(text: string, control: HTMLElement): HTMLElement {
  const wrap = document.createElement("label");
  wrap.className = "field";
  const caption = document.createElement("span");
  caption.textContent = text;
  wrap.appendChild(caption);
  wrap.appendChild(control);
  return wrap;
}
