/** Session state: targets, generated designs, pins, and validation results.
 *
 * Concurrent generate requests are deduplicated with a sequence token: a
 * response only lands if no newer request was issued meanwhile, so a slow
 * early response can never overwrite a fresh table. Pinned designs live in a
 * separate map keyed by a stable design signature and survive regeneration.
 */

import {
  DesignApi,
  GeneratedDesign,
  Ranges,
  TargetLabels,
  ValidatedLabels,
} from "./api.js";

export interface PinnedDesign {
  design: GeneratedDesign;
  validated: ValidatedLabels | null;
}

export type Listener = () => void;

export function designSignature(design: GeneratedDesign): string {
  // label values round-trip straight from service JSON; the signature just
  // concatenates them without arithmetic
  return Object.entries(design.params)
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([key, value]) => `${key}=${value}`)
    .join("|");
}

export class SessionState {
  ranges: Ranges | null = null;
  targets: TargetLabels = { U_M: 0, dp_rel: 0, G: 0 };
  count = 100;
  seed = 0;
  designs: GeneratedDesign[] = [];
  yieldRate: number | null = null;
  pinned = new Map<string, PinnedDesign>();
  lastError: string | null = null;
  busy = false;

  private generateToken = 0;
  private listeners: Listener[] = [];

  constructor(private readonly api: DesignApi) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  /** Slider bounds come from the service, never hardcoded. */
  async init(): Promise<void> {
    this.ranges = await this.api.ranges();
    const mid = (name: string): number => {
      const [lo, hi] = this.ranges!.labels[name];
      return snapTo3Digits((lo + hi) / 2);
    };
    this.targets = { U_M: mid("U_M"), dp_rel: mid("dp_rel"), G: mid("G") };
    this.emit();
  }

  setTarget(name: keyof TargetLabels, value: number): void {
    this.targets = { ...this.targets, [name]: snapTo3Digits(value) };
    this.emit();
  }

  setCount(count: number): void {
    this.count = count;
    this.emit();
  }

  get canGenerate(): boolean {
    return this.count > 0 && !this.busy;
  }

  async generate(): Promise<void> {
    if (this.count <= 0) return;
    const token = ++this.generateToken;
    this.busy = true;
    this.lastError = null;
    this.emit();
    try {
      const response = await this.api.generate(this.targets, this.count, this.seed);
      if (token !== this.generateToken) return; // a newer request superseded this one
      this.designs = response.designs;
      this.yieldRate = response.yield;
    } catch (error) {
      if (token !== this.generateToken) return;
      this.lastError = error instanceof Error ? error.message : String(error);
    } finally {
      if (token === this.generateToken) {
        this.busy = false;
        this.emit();
      }
    }
  }

  togglePin(design: GeneratedDesign): void {
    const signature = designSignature(design);
    if (this.pinned.has(signature)) {
      this.pinned.delete(signature);
    } else {
      this.pinned.set(signature, { design, validated: null });
    }
    this.emit();
  }

  get canValidate(): boolean {
    return this.pinned.size > 0 && !this.busy;
  }

  async validatePinned(): Promise<void> {
    if (this.pinned.size === 0) return;
    const entries = [...this.pinned.entries()];
    try {
      const response = await this.api.validate(entries.map(([, pin]) => pin.design.params));
      entries.forEach(([signature, pin], index) => {
        this.pinned.set(signature, { ...pin, validated: response.labels[index] });
      });
      this.lastError = null;
    } catch (error) {
      this.lastError = error instanceof Error ? error.message : String(error);
    }
    this.emit();
  }
}

/** Snap slider values to 3 significant digits to avoid spurious regeneration. */
export function snapTo3Digits(value: number): number {
  if (value === 0 || !Number.isFinite(value)) return 0;
  return Number(value.toPrecision(3));
}
