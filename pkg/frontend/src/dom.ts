// Small DOM construction helpers; no framework, no virtual DOM.

type Child = string | Node | null | undefined;

type Attrs = Record<string, string | number | boolean | ((e: Event) => void) | null | undefined>;

export function el(tag: string, attrs: Attrs = {}, ...children: Child[]): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (value == null) continue;
    if (key === "className" && typeof value === "string") node.className = value;
    else if (key.startsWith("on") && typeof value === "function") {
      node.addEventListener(key.slice(2).toLowerCase(), value as EventListener);
    } else if (typeof value === "boolean") {
      if (value) node.setAttribute(key, "");
    } else node.setAttribute(key, String(value));
  }
  for (const child of children) {
    if (child == null) continue;
    node.appendChild(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

/** Numeric display cell: the full service value rides in data-value so the
 * no-derived-numbers snapshot check can verify provenance of every figure. */
export function num(value: number, digits = 4): HTMLElement {
  const full = String(value);
  const shown = Number.isInteger(value) ? full : value.toFixed(digits);
  return el("span", { className: "num", "data-value": full, title: full }, shown);
}

export function clear(node: HTMLElement): HTMLElement {
  while (node.firstChild) node.removeChild(node.firstChild);
  return node;
}
