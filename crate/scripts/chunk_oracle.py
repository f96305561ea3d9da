#!/usr/bin/env python3
"""Reference packer for the chunker golden files.

Works on sentence strings it generated itself, so it never touches the
Rust sentence splitter. Writes the synthetic documents and the expected
chunk boundaries under fixtures/golden/.
"""
import json
import os
import sys
import textwrap

MAX, MIN, OVERLAP = 1500, 400, 1


def sentence(tag, width, fill):
    head = f"Item {tag} "
    return head + fill * (width - len(head) - 1) + "."


def windows(sents):
    out, i = [], 0
    while i < len(sents):
        text = sents[i]
        j = i + 1
        while j < len(sents) and len(text + " " + sents[j]) <= MAX:
            text = text + " " + sents[j]
            j += 1
        out.append((i, j))
        if j == len(sents):
            break
        # overlap only if the overlapped window can still take a new sentence
        back = j - OVERLAP
        if j - i > OVERLAP and len(" ".join(sents[back:j + 1])) <= MAX:
            i = back
        else:
            i = j
    return out


def pack(sents):
    wins = windows(sents)
    chunks, pending = [], None
    for n, (a, b) in enumerate(wins):
        carried = pending is not None
        if carried:
            a = pending
            pending = None
        if len(" ".join(sents[a:b])) < MIN and n != len(wins) - 1:
            pending = a
            continue
        chunks.append((a, b, carried))
    return chunks


def build(name, sections):
    lines, expected, ordinal = [], [], 0
    for title, sents in sections:
        lines.append(f"[{title}]")
        # line breaks are plain whitespace to the splitter
        lines.extend(textwrap.wrap(" ".join(sents), 230, break_long_words=False, break_on_hyphens=False))
        if title.lower() == "references":
            continue
        for a, b, carried in pack(sents):
            text = " ".join(sents[a:b])
            expected.append({
                "chunk_id": f"{name}#{ordinal}",
                "section": title,
                "start": a,
                "end": b,
                "char_len": len(text),
                "carried": carried,
            })
            ordinal += 1
    return "\n".join(lines) + "\n", expected


def main(root):
    out = os.path.join(root, "golden")
    os.makedirs(out, exist_ok=True)

    fixed = [sentence(f"{i:02d}", 100, "a") for i in range(40)]
    refs = [sentence(f"R{i}", 100, "r") for i in range(3)]
    docs = {
        "synthetic": [("Introduction", fixed[:18]), ("Methods", fixed[18:33]), ("Results", fixed[33:]), ("References", refs)],
    }
    widths = [700, 650, 300, 1300, 200, 900, 120, 1450, 90, 2000, 400, 399, 600, 610, 80, 1200, 300, 300]
    varied = [sentence(f"{i:02d}", w, "b") for i, w in enumerate(widths)]
    docs["carry"] = [("Body", varied[:12]), ("Tail", varied[12:])]

    for name, sections in docs.items():
        text, expected = build(f"{name}.txt", sections)
        with open(os.path.join(out, f"{name}.txt"), "w") as f:
            f.write(text)
        with open(os.path.join(out, f"chunks_{name}.json"), "w") as f:
            json.dump(expected, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "fixtures"))
