// Debounce and last-write-wins request sequencing for the explore panel.
// Each control change bumps a generation counter; when a response lands,
// it is applied only if no newer request has started since, so a slow
// simulation can never overwrite the result of a later control change.

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => fn(...args), waitMs);
  };
}

export class LastWriteWins {
  private generation = 0;

  // returns an "is this still current" probe for the request just started
  begin(): () => boolean {
    const mine = ++this.generation;
    return () => mine === this.generation;
  }

  // wraps an async producer; the consumer runs only for current results
  async run<T>(
    produce: () => Promise<T>,
    consume: (value: T) => void,
    onError?: (error: unknown) => void,
  ): Promise<void> {
    const current = this.begin();
    try {
      const value = await produce();
      if (current()) consume(value);
    } catch (error) {
      if (current() && onError) onError(error);
    }
  }
}
