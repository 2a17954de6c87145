/** FNV-1a 64-bit over UTF-8 text, reported as 16 hex chars.
 *
 * Used to compare meshes across sessions and against CLI artifacts without
 * shipping a crypto dependency; collisions are irrelevant at that scale.
 */
export function fnv1a64(text: string): string {
  let lo = 0x84222325;
  let hi = 0xcbf29ce4;
  for (let i = 0; i < text.length; i++) {
    let code = text.charCodeAt(i);
    // encode as UTF-8 bytes
    const bytes: number[] = [];
    if (code < 0x80) bytes.push(code);
    else if (code < 0x800) bytes.push(0xc0 | (code >> 6), 0x80 | (code & 63));
    else bytes.push(0xe0 | (code >> 12), 0x80 | ((code >> 6) & 63), 0x80 | (code & 63));
    for (const b of bytes) {
      lo ^= b;
      // 64-bit multiply by the FNV prime 0x100000001b3 in 16-bit limbs
      const l0 = lo & 0xffff;
      const l1 = lo >>> 16;
      const h0 = hi & 0xffff;
      const h1 = hi >>> 16;
      let c0 = l0 * 0x01b3;
      let c1 = l1 * 0x01b3 + (c0 >>> 16);
      let c2 = h0 * 0x01b3 + l0 * 0x0100 + (c1 >>> 16);
      let c3 = h1 * 0x01b3 + l1 * 0x0100 + (c2 >>> 16);
      lo = (c0 & 0xffff) | ((c1 & 0xffff) << 16);
      hi = (c2 & 0xffff) | ((c3 & 0xffff) << 16);
      lo = lo >>> 0;
      hi = hi >>> 0;
    }
  }
  return hi.toString(16).padStart(8, "0") + lo.toString(16).padStart(8, "0");
}
