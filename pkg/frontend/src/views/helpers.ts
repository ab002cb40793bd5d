// Small DOM helpers shared by the dashboard views.

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Array<Node | string> = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export function field(labelText: string, input: HTMLElement): HTMLElement {
  return el("label", { class: "field" }, [el("span", {}, [labelText]), input]);
}

export function notice(kind: "ok" | "error" | "info", text: string): HTMLElement {
  return el("div", { class: `notice notice-${kind}` }, [text]);
}

export function download(filename: string, bytes: Uint8Array, mime = "application/json"): void {
  const blob = new Blob([bytes as BlobPart], { type: mime });
  const url = URL.createObjectURL(blob);
  const a = el("a", { href: url, download: filename });
  document.body.append(a);
  a.click();
  a.remove();
  URL.revokeObjectURL(url);
}

export function paintQr(canvas: HTMLCanvasElement, image: { data: Uint8ClampedArray; width: number; height: number }): void {
  canvas.width = image.width;
  canvas.height = image.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.putImageData(new ImageData(new Uint8ClampedArray(image.data), image.width, image.height), 0, 0);
}
