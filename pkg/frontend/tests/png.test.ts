import { expect, test } from "vitest";
import { adler32, crc32, encodePng, toBase64 } from "../src/png.js";
import { chunks, decodePng, mulberry32 } from "./decode.js";

test("crc32 matches the standard check value", () => {
  expect(crc32(new TextEncoder().encode("123456789"))).toBe(0xcbf43926);
});

test("adler32 matches the standard check value", () => {
  expect(adler32(new TextEncoder().encode("Wikipedia"))).toBe(0x11e60398);
});

test("gray png round trips through an independent inflate", () => {
  const px = new Uint8Array([0, 255, 128, 7, 19, 230]);
  const dec = decodePng(encodePng(3, 2, px, 1));
  expect(dec.width).toBe(3);
  expect(dec.height).toBe(2);
  expect(dec.bitDepth).toBe(8);
  expect(dec.colorType).toBe(0);
  expect(Array.from(dec.pixels)).toEqual(Array.from(px));
});

test("rgb png round trips at assorted sizes", () => {
  const rand = mulberry32(7);
  for (const [w, h] of [
    [1, 1],
    [5, 3],
    [16, 16],
    [33, 7],
  ]) {
    const px = new Uint8Array(w * h * 3);
    for (let i = 0; i < px.length; i++) px[i] = Math.floor(rand() * 256);
    const dec = decodePng(encodePng(w, h, px, 3));
    expect([dec.width, dec.height, dec.colorType]).toEqual([w, h, 2]);
    expect(Array.from(dec.pixels)).toEqual(Array.from(px));
  }
});

test("large rasters span multiple stored blocks and still round trip", () => {
  // 300x250 gray: raw stream is 75250 bytes, two stored deflate blocks
  const rand = mulberry32(11);
  const px = new Uint8Array(300 * 250);
  for (let i = 0; i < px.length; i++) px[i] = Math.floor(rand() * 256);
  const png = encodePng(300, 250, px, 1);
  const idat = chunks(png).find((c) => c.type === "IDAT")!;
  expect(idat.data[2]).toBe(0); // first block is not final
  const dec = decodePng(png);
  expect(dec.pixels.length).toBe(px.length);
  expect(Buffer.compare(Buffer.from(dec.pixels), Buffer.from(px))).toBe(0);
});

test("tampering with the trailer checksum breaks inflate", () => {
  const copy = encodePng(4, 4, new Uint8Array(16), 1).slice();
  const idat = chunks(copy).find((c) => c.type === "IDAT")!;
  idat.data[idat.data.length - 1] ^= 0xff; // last adler byte; subarray mutates copy
  expect(() => decodePng(copy)).toThrow();
});

test("encoding is deterministic", () => {
  const rand = mulberry32(3);
  const px = new Uint8Array(12 * 9 * 3);
  for (let i = 0; i < px.length; i++) px[i] = Math.floor(rand() * 256);
  const a = encodePng(12, 9, px, 3);
  const b = encodePng(12, 9, px, 3);
  expect(Buffer.compare(Buffer.from(a), Buffer.from(b))).toBe(0);
});

test("IEND carries its fixed crc", () => {
  const png = encodePng(1, 1, new Uint8Array([0]), 1);
  const tail = Array.from(png.subarray(png.length - 12));
  expect(tail).toEqual([0, 0, 0, 0, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82]);
});

test("pixel count mismatches are rejected", () => {
  expect(() => encodePng(4, 4, new Uint8Array(3), 1)).toThrow(/expected 16 bytes/);
  expect(() => encodePng(2, 2, new Uint8Array(4), 3)).toThrow(/expected 12 bytes/);
});

test("toBase64 agrees with Buffer on large inputs", () => {
  const rand = mulberry32(19);
  const bytes = new Uint8Array(200_000);
  for (let i = 0; i < bytes.length; i++) bytes[i] = Math.floor(rand() * 256);
  expect(toBase64(bytes)).toBe(Buffer.from(bytes).toString("base64"));
});
