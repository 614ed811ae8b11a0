import { describe, expect, it, vi } from "vitest";

import { collapseReferences, renderErrorTurn, renderSystemTurn, renderUserTurn } from "../src/render";
import type { QueryResponse } from "../src/types";

function groundedResponse(): QueryResponse {
  return {
    answer: [
      {
        text: "Rest the ankle.",
        references: [
          { url: "https://example.org/a", title: "Ankle care", snippet: "Rest the ankle fully." },
          { url: "https://example.org/a", title: "Ankle care", snippet: "Avoid weight at first." },
          { url: "https://example.org/b", title: "Recovery", snippet: "Most sprains heal at home." },
        ],
      },
      {
        text: "Apply ice.",
        references: [{ url: "https://example.org/a", title: "Ankle care", snippet: "Ice reduces swelling." }],
      },
    ],
    exercises: [
      { name: "Ankle circles", video_url: "https://example.org/v1", instructions: "Slow circles." },
    ],
    medications: [{ name: "ibuprofen", description: "NSAID", url: "https://example.org/m1" }],
    grounded: true,
    disclaimer: "consult a specialist",
    cache_hit: false,
  };
}

describe("collapseReferences", () => {
  it("merges hits on the same document and keeps snippets", () => {
    const collapsed = collapseReferences(groundedResponse().answer[0].references);
    expect(collapsed).toHaveLength(2);
    expect(collapsed[0].snippets).toEqual(["Rest the ankle fully.", "Avoid weight at first."]);
  });

  it("drops duplicate snippets", () => {
    const reference = { url: "u", title: "t", snippet: "same" };
    expect(collapseReferences([reference, reference])[0].snippets).toEqual(["same"]);
  });
});

describe("renderSystemTurn", () => {
  it("renders one marker per document per sentence, numbered by first appearance", () => {
    const bubble = renderSystemTurn(groundedResponse());
    const markers = [...bubble.querySelectorAll(".sentence")].map((sentence) =>
      [...sentence.querySelectorAll("a.ref-link")].map((a) => a.textContent),
    );
    expect(markers).toEqual([["[1]", "[2]"], ["[1]"]]);
  });

  it("marker links resolve to URLs from the payload only", () => {
    const response = groundedResponse();
    const bubble = renderSystemTurn(response);
    const payloadUrls = new Set(
      response.answer.flatMap((sentence) => sentence.references.map((ref) => ref.url)),
    );
    const rendered = [...bubble.querySelectorAll("a.ref-link")].map((a) => a.getAttribute("href"));
    expect(rendered.length).toBeGreaterThan(0);
    for (const href of rendered) {
      expect(payloadUrls.has(href ?? "")).toBe(true);
    }
  });

  it("hover title carries the source snippets", () => {
    const bubble = renderSystemTurn(groundedResponse());
    const first = bubble.querySelector("a.ref-link") as HTMLAnchorElement;
    expect(first.title).toContain("Rest the ankle fully.");
    expect(first.title).toContain("Avoid weight at first.");
  });

  it("shows exercise and medication panels", () => {
    const bubble = renderSystemTurn(groundedResponse());
    expect(bubble.querySelector(".panel.exercises a")?.getAttribute("href")).toBe("https://example.org/v1");
    expect(bubble.querySelector(".panel.medications")?.textContent).toContain("ibuprofen");
  });

  it("omits panels when empty", () => {
    const response = { ...groundedResponse(), exercises: [], medications: [] };
    const bubble = renderSystemTurn(response);
    expect(bubble.querySelector(".panel")).toBeNull();
  });

  it("no badge on grounded answers", () => {
    expect(renderSystemTurn(groundedResponse()).querySelector(".badge.unverified")).toBeNull();
  });

  it("unverified badge on ungrounded answers", () => {
    const response = { ...groundedResponse(), grounded: false };
    expect(renderSystemTurn(response).querySelector(".badge.unverified")).not.toBeNull();
  });
});

describe("renderUserTurn", () => {
  it("escapes content via textContent", () => {
    const bubble = renderUserTurn("<script>alert(1)</script>");
    expect(bubble.querySelector("script")).toBeNull();
    expect(bubble.textContent).toContain("<script>");
  });
});

describe("renderErrorTurn", () => {
  it("retry button invokes the callback", () => {
    const onRetry = vi.fn();
    const bubble = renderErrorTurn("boom", onRetry);
    (bubble.querySelector("button.retry-button") as HTMLButtonElement).click();
    expect(onRetry).toHaveBeenCalledTimes(1);
  });
});
