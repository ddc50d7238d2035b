/** Tiny DOM builders.
 *
 * Every payload-derived atom shown to the user goes through val(): it stamps
 * data-contract="1", which the contract tests use to prove that each
 * displayed value string-matches a payload field verbatim. Static chrome
 * text never contains digits, so the sweep test can catch any number that
 * bypassed val().
 */

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

const SVG_NS = "http://www.w3.org/2000/svg";

export function svg(
  tag: string,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

/** A displayed payload value, rendered verbatim. */
export function val(value: string | number | boolean | null | undefined): HTMLSpanElement {
  const span = document.createElement("span");
  span.setAttribute("data-contract", "1");
  span.textContent = value === null || value === undefined ? "-" : String(value);
  return span;
}

/** val() for SVG text content. */
export function svgVal(value: string | number): SVGElement {
  const tspan = document.createElementNS(SVG_NS, "tspan");
  tspan.setAttribute("data-contract", "1");
  tspan.textContent = String(value);
  return tspan;
}

export function clear(node: Element): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}
