import { describe, expect, it } from "vitest";
import { Rng } from "../src/rng.js";
import { samplingOrder } from "../src/trainer.js";

describe("sampling strategies", () => {
  it("epoch_based visits every id exactly once per epoch", () => {
    const rng = new Rng(0);
    for (let epoch = 0; epoch < 5; epoch++) {
      const order = samplingOrder(100, "epoch_based", rng);
      expect([...order].sort((a, b) => a - b))
        .toEqual(Array.from({ length: 100 }, (_, i) => i));
    }
  });

  it("epoch_based orders differ across epochs", () => {
    const rng = new Rng(1);
    const a = samplingOrder(50, "epoch_based", rng);
    const b = samplingOrder(50, "epoch_based", rng);
    expect(a).not.toEqual(b);
  });

  it("with_replacement leaves about 1/e of ids unseen after one epoch", () => {
    const fractions: number[] = [];
    for (let seed = 0; seed < 10; seed++) {
      const rng = new Rng(seed);
      const order = samplingOrder(100, "with_replacement", rng);
      const seen = new Set(order);
      fractions.push((100 - seen.size) / 100);
    }
    const mean = fractions.reduce((a, b) => a + b, 0) / fractions.length;
    expect(Math.abs(mean - 0.37)).toBeLessThan(0.05);
  });

  it("sampling is deterministic per seed", () => {
    expect(samplingOrder(30, "with_replacement", new Rng(9)))
      .toEqual(samplingOrder(30, "with_replacement", new Rng(9)));
    expect(samplingOrder(30, "epoch_based", new Rng(9)))
      .toEqual(samplingOrder(30, "epoch_based", new Rng(9)));
  });
});
