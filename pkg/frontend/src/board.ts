/**
 * Canvas view of one session snapshot. Pure presentation: every pixel
 * derives from the latest snapshot message, never from client-side physics.
 */

import {
  BLOCK_RADIUS, BLOCK_STYLE, BOARD_H, BOARD_W, COLOR_RGB, EE_RADIUS, SnapshotMsg,
  decodeState,
} from "./protocol.js";

const BOARD_FILL = "#dec49b";
const MARGIN = 10;

export class BoardRenderer {
  readonly canvas: HTMLCanvasElement;
  private readonly ctx: CanvasRenderingContext2D | null;
  private readonly scale: number;

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
    // happy-dom has no 2D context; rendering is skipped there by design.
    this.ctx = canvas.getContext ? canvas.getContext("2d") : null;
    this.scale = Math.min((canvas.width - 2 * MARGIN) / BOARD_W,
                          (canvas.height - 2 * MARGIN) / BOARD_H);
  }

  private toPixel(x: number, y: number): [number, number] {
    return [MARGIN + x * this.scale, this.canvas.height - MARGIN - y * this.scale];
  }

  draw(snapshot: SnapshotMsg): void {
    const ctx = this.ctx;
    if (!ctx) return;
    const { blocks, ee } = decodeState(snapshot.state);
    ctx.fillStyle = "#2e2e2e";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.fillStyle = BOARD_FILL;
    const [bx, by] = this.toPixel(0, BOARD_H);
    ctx.fillRect(bx, by, BOARD_W * this.scale, BOARD_H * this.scale);

    blocks.forEach((block, i) => {
      const { color, shape } = BLOCK_STYLE[i];
      const [px, py] = this.toPixel(block.x, block.y);
      this.glyph(ctx, px, py, BLOCK_RADIUS * this.scale, -block.theta,
                 COLOR_RGB[color], shape);
    });
    const [ex, ey] = this.toPixel(ee.x, ee.y);
    ctx.fillStyle = "#696969";
    ctx.beginPath();
    ctx.arc(ex, ey, EE_RADIUS * this.scale, 0, 2 * Math.PI);
    ctx.fill();

    if (snapshot.done) {
      ctx.fillStyle = "rgba(40, 160, 70, 0.25)";
      ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    }
  }

  private glyph(ctx: CanvasRenderingContext2D, cx: number, cy: number,
                r: number, rotation: number, fill: string, shape: string): void {
    ctx.save();
    ctx.translate(cx, cy);
    ctx.rotate(rotation);
    ctx.fillStyle = fill;
    ctx.beginPath();
    switch (shape) {
      case "circle":
        ctx.arc(0, 0, r, 0, 2 * Math.PI);
        break;
      case "cube":
        ctx.rect(-0.8 * r, -0.8 * r, 1.6 * r, 1.6 * r);
        break;
      case "triangle":
        this.polygon(ctx, 3, r, -Math.PI / 2);
        break;
      case "hexagon":
        this.polygon(ctx, 6, r, 0);
        break;
      case "star":
        for (let k = 0; k < 10; k++) {
          const rad = k % 2 === 0 ? r : 0.45 * r;
          const ang = -Math.PI / 2 + (k * Math.PI) / 5;
          const x = rad * Math.cos(ang);
          const y = rad * Math.sin(ang);
          if (k === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
        }
        break;
      case "heart": {
        const s = r / 1.2;
        ctx.moveTo(0, 0.9 * s);
        ctx.bezierCurveTo(1.4 * s, -0.3 * s, 0.5 * s, -1.2 * s, 0, -0.4 * s);
        ctx.bezierCurveTo(-0.5 * s, -1.2 * s, -1.4 * s, -0.3 * s, 0, 0.9 * s);
        break;
      }
    }
    ctx.closePath();
    ctx.fill();
    ctx.restore();
  }

  private polygon(ctx: CanvasRenderingContext2D, sides: number, r: number,
                  phase: number): void {
    for (let k = 0; k < sides; k++) {
      const ang = phase + (2 * Math.PI * k) / sides;
      const x = r * Math.cos(ang);
      const y = r * Math.sin(ang);
      if (k === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
    }
  }
}
