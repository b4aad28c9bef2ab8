// Minimal canvas plotting for train/val accuracy and loss curves.

import type { EpochRecord } from "./types.js";

const COLORS = { train_acc: "#1f77b4", val_acc: "#d62728" } as const;

export function drawCurves(canvas: HTMLCanvasElement, metrics: EpochRecord[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);
  // chance level for four balanced classes
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(0, height * 0.75);
  ctx.lineTo(width, height * 0.75);
  ctx.stroke();
  ctx.setLineDash([]);
  if (metrics.length === 0) return;

  const n = Math.max(metrics.length - 1, 1);
  const x = (i: number) => (i / n) * (width - 8) + 4;
  const y = (acc: number) => height - acc * (height - 8) - 4;

  for (const series of ["train_acc", "val_acc"] as const) {
    ctx.strokeStyle = COLORS[series];
    ctx.beginPath();
    metrics.forEach((record, i) => {
      if (i === 0) ctx.moveTo(x(i), y(record[series]));
      else ctx.lineTo(x(i), y(record[series]));
    });
    ctx.stroke();
  }
}
