#!/usr/bin/env python3
"""Reference quantizer and wire framing for the logit server.

    python3 reference.py generate   # rewrite quantize.json and wire.json
    python3 reference.py check      # verify both files against this module

The Rust client checks the same files in crates/core/tests/conformance.rs.
"""

import hashlib
import json
import math
import random
import struct
import sys
from pathlib import Path

TOTAL = 1 << 16
HERE = Path(__file__).resolve().parent


def quantize(probs):
    """Largest-remainder rounding to TOTAL with a floor of 1.

    Zero entries are raised to 1 and the surplus is taken from the most
    probable entry (first on ties); if it cannot absorb all of it, the next
    largest entries give up the rest in turn.
    """
    n = len(probs)
    if n < 2 or n > TOTAL:
        raise ValueError("bad table length")
    total = float(TOTAL)
    # Plain left-to-right addition; builtin sum() compensates on newer Pythons.
    s = 0.0
    argmax = 0
    for i, p in enumerate(probs):
        if not math.isfinite(p) or p < 0:
            raise ValueError("bad probability")
        if p > probs[argmax]:
            argmax = i
        s += p
    if s <= 0 or not math.isfinite(s):
        raise ValueError("no mass")
    freqs = []
    rems = []
    for p in probs:
        scaled = min(p / s * total, total)
        base = math.floor(scaled)
        freqs.append(base)
        rems.append(scaled - base)
    deficit = TOTAL - sum(freqs)
    positive = [i for i in range(n) if rems[i] > 0]
    order = sorted(positive, key=lambda i: (-rems[i], i))
    lucky = set(order[: max(0, min(deficit, len(order)))])
    deficit -= len(lucky)
    for i in range(n):
        if i in lucky:
            freqs[i] += 1
        elif freqs[i] == 0:
            freqs[i] = 1
            deficit -= 1
    if deficit != 0:
        target = freqs[argmax] + deficit
        if target >= 1:
            freqs[argmax] = target
        else:
            surplus = -deficit
            rest = sorted((i for i in range(n) if i != argmax), key=lambda i: (-freqs[i], i))
            for i in [argmax] + rest:
                if surplus == 0:
                    break
                take = min(freqs[i] - 1, surplus)
                freqs[i] -= take
                surplus -= take
    assert sum(freqs) == TOTAL and min(freqs) >= 1
    return freqs


def f64_hex(x):
    return "%016x" % struct.unpack("<Q", struct.pack("<d", x))[0]


def from_f64_hex(h):
    return struct.unpack("<d", struct.pack("<Q", int(h, 16)))[0]


def formula(f):
    n = f["n"]
    if f["kind"] == "harmonic":
        return [1.0 / (i + 1) for i in range(n)]
    if f["kind"] == "inverse_square":
        return [1.0 / (float(i + 1) * float(i + 1)) for i in range(n)]
    if f["kind"] == "ones_then_zeros":
        return [1.0 if i < f["ones"] else 0.0 for i in range(n)]
    raise ValueError(f["kind"])


def softmax(logits):
    m = max(logits)
    e = [math.exp(x - m) for x in logits]
    t = 0.0
    for x in e:
        t += x
    return [x / t for x in e]


def freqs_digest(freqs):
    return hashlib.sha256(b"".join(struct.pack("<H", f) for f in freqs)).hexdigest()


def quantize_cases():
    rng = random.Random(20240101)
    cases = []

    def add(name, probs):
        cases.append({"name": name, "probs": [f64_hex(p) for p in probs], "freqs": quantize(probs)})

    def add_formula(name, f):
        cases.append({"name": name, "formula": f, "freqs_sha256": freqs_digest(quantize(formula(f)))})

    add("dyadic", [0.5, 0.25, 0.25])
    add("one_hot", [1.0, 0.0, 0.0])
    add("one_hot_last", [0.0, 0.0, 0.0, 7.0])
    add("uniform_257", [1.0] * 257)
    add("uniform_3", [1.0, 1.0, 1.0])
    add("unnormalized", [3.0, 1.0, 0.0, 2.0])
    add("ties_low_index", [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    add("tiny_tail", [1.0] + [1e-9] * 40)
    add("two_peaks", [0.49, 0.49] + [0.0002] * 100)
    # floors outnumber what the argmax can give: the surplus spreads
    add_formula("floor_spread", {"kind": "ones_then_zeros", "n": 65536, "ones": 2})
    add_formula("floor_spread_3", {"kind": "ones_then_zeros", "n": 40000, "ones": 3})
    for i in range(12):
        n = rng.choice([2, 5, 17, 257, 1000])
        logits = [rng.gauss(0.0, rng.choice([0.5, 2.0, 8.0])) for _ in range(n)]
        add("softmax_%d" % i, softmax(logits))
    for i in range(6):
        n = rng.choice([3, 64, 257])
        probs = [rng.random() ** 4 for _ in range(n)]
        for j in rng.sample(range(n), n // 3):
            probs[j] = 0.0
        if max(probs) == 0.0:
            probs[0] = 1.0
        add("sparse_%d" % i, probs)
    add_formula("harmonic_50258", {"kind": "harmonic", "n": 50258})
    add_formula("inverse_square_32001", {"kind": "inverse_square", "n": 32001})
    return cases


def frame(opcode, payload):
    return struct.pack("<IB", len(payload) + 1, opcode) + payload


def wire_cases():
    fp = bytes(range(32))
    reqs = [
        ("open", frame(1, b"tiny-lm"), {"op": "open", "model_id": "tiny-lm"}),
        ("close", frame(2, struct.pack("<Q", 7)), {"op": "close", "session": 7}),
        ("reset", frame(3, struct.pack("<Q", 0x0102030405060708)), {"op": "reset", "session": 0x0102030405060708}),
        ("tokenize", frame(4, struct.pack("<Q", 1) + b"hi \xe2\x82\xac"), {"op": "tokenize", "session": 1, "text_hex": b"hi \xe2\x82\xac".hex()}),
        ("tokenize_empty", frame(4, struct.pack("<Q", 1)), {"op": "tokenize", "session": 1, "text_hex": ""}),
        ("detokenize", frame(5, struct.pack("<QI3I", 2, 3, 5, 70000, 0)), {"op": "detokenize", "session": 2, "ids": [5, 70000, 0]}),
        ("predict_fresh", frame(6, struct.pack("<QBI", 3, 0, 0)), {"op": "predict", "session": 3, "commit": None}),
        ("predict_commit", frame(6, struct.pack("<QBI", 3, 1, 258)), {"op": "predict", "session": 3, "commit": 258}),
    ]
    dist = quantize([0.5, 0.25, 0.25])
    reps = [
        ("opened", frame(1, struct.pack("<QIIB", 9, 50257, 1024, 1) + fp),
         {"op": "open", "session": 9, "vocab_size": 50257, "context_window": 1024, "flags": 1, "fingerprint_hex": fp.hex()}),
        ("closed", frame(2, b""), {"op": "close"}),
        ("reset_ok", frame(3, b""), {"op": "reset"}),
        ("tokens", frame(4, struct.pack("<I2I", 2, 104, 105)), {"op": "tokenize", "ids": [104, 105]}),
        ("text", frame(5, b"hello"), {"op": "detokenize", "text_hex": b"hello".hex()}),
        ("distribution", frame(6, struct.pack("<I", 3) + b"".join(struct.pack("<H", f) for f in dist)),
         {"op": "predict", "freqs": dist}),
    ]
    for status, name in [(1, "model_not_loaded"), (2, "session_unknown"), (3, "context_overflow"),
                         (4, "not_invertible"), (5, "unknown_model"), (6, "bad_request")]:
        op = {1: 6, 2: 6, 3: 6, 4: 4, 5: 1, 6: 2}[status]
        reps.append(("error_" + name, frame(op | 0x80, struct.pack("<H", status)),
                     {"op": "error", "request_op": op, "status": status}))
    out = []
    for name, f, fields in reqs:
        out.append({"name": name, "kind": "request", "frame_hex": f.hex(), "fields": fields})
    for name, f, fields in reps:
        out.append({"name": name, "kind": "reply", "frame_hex": f.hex(), "fields": fields})
    # bodies a conforming reader must reject
    bad = [
        ("unknown_opcode", "request", frame(9, b"")),
        ("predict_bad_flag", "request", frame(6, struct.pack("<QBI", 3, 2, 0))),
        ("close_short", "request", frame(2, b"\x01\x02")),
        ("close_trailing", "request", frame(2, struct.pack("<Q", 1) + b"\x00")),
        ("distribution_short", "reply", frame(6, struct.pack("<IH", 3, 1))),
    ]
    for name, kind, f in bad:
        out.append({"name": name, "kind": kind, "frame_hex": f.hex(), "malformed": True})
    return out


def parse_request(body):
    op, p = body[0], body[1:]
    if op == 1:
        return {"op": "open", "model_id": p.decode("utf-8")}
    if op in (2, 3):
        if len(p) != 8:
            raise ValueError("length")
        return {"op": "close" if op == 2 else "reset", "session": struct.unpack("<Q", p)[0]}
    if op == 4:
        if len(p) < 8:
            raise ValueError("length")
        return {"op": "tokenize", "session": struct.unpack("<Q", p[:8])[0], "text_hex": p[8:].hex()}
    if op == 5:
        (session, count) = struct.unpack("<QI", p[:12])
        if len(p) != 12 + 4 * count:
            raise ValueError("length")
        return {"op": "detokenize", "session": session, "ids": list(struct.unpack("<%dI" % count, p[12:]))}
    if op == 6:
        if len(p) != 13:
            raise ValueError("length")
        session, flag, token = struct.unpack("<QBI", p)
        if flag not in (0, 1):
            raise ValueError("flag")
        return {"op": "predict", "session": session, "commit": token if flag else None}
    raise ValueError("opcode")


def parse_reply(body):
    op, p = body[0], body[1:]
    if op & 0x80:
        if len(p) != 2:
            raise ValueError("length")
        return {"op": "error", "request_op": op & 0x7F, "status": struct.unpack("<H", p)[0]}
    if op == 1:
        if len(p) != 49:
            raise ValueError("length")
        session, vocab, window, flags = struct.unpack("<QIIB", p[:17])
        return {"op": "open", "session": session, "vocab_size": vocab, "context_window": window,
                "flags": flags, "fingerprint_hex": p[17:].hex()}
    if op in (2, 3):
        if p:
            raise ValueError("length")
        return {"op": "close" if op == 2 else "reset"}
    if op == 4:
        (count,) = struct.unpack("<I", p[:4])
        if len(p) != 4 + 4 * count:
            raise ValueError("length")
        return {"op": "tokenize", "ids": list(struct.unpack("<%dI" % count, p[4:]))}
    if op == 5:
        return {"op": "detokenize", "text_hex": p.hex()}
    if op == 6:
        (n,) = struct.unpack("<I", p[:4])
        if len(p) != 4 + 2 * n:
            raise ValueError("length")
        return {"op": "predict", "freqs": list(struct.unpack("<%dH" % n, p[4:]))}
    raise ValueError("opcode")


def check():
    failures = 0
    q = json.loads((HERE / "quantize.json").read_text())
    for case in q["cases"]:
        if "formula" in case:
            ok = freqs_digest(quantize(formula(case["formula"]))) == case["freqs_sha256"]
        else:
            ok = quantize([from_f64_hex(h) for h in case["probs"]]) == case["freqs"]
        failures += not ok
        print("%s quantize/%s" % ("PASS" if ok else "FAIL", case["name"]))
    w = json.loads((HERE / "wire.json").read_text())
    for case in w["cases"]:
        raw = bytes.fromhex(case["frame_hex"])
        (length,) = struct.unpack("<I", raw[:4])
        body = raw[4:]
        parse = parse_request if case["kind"] == "request" else parse_reply
        try:
            ok = length == len(body) and parse(body) == case["fields"]
            if case.get("malformed"):
                ok = False
        except (ValueError, struct.error, UnicodeDecodeError):
            ok = bool(case.get("malformed"))
        failures += not ok
        print("%s wire/%s" % ("PASS" if ok else "FAIL", case["name"]))
    return failures


def generate():
    q = {"version": 1, "total": TOTAL, "probs_encoding": "f64 bits, hex, little-endian value",
         "cases": quantize_cases()}
    (HERE / "quantize.json").write_text(json.dumps(q, indent=1) + "\n")
    w = {"version": 1, "cases": wire_cases()}
    (HERE / "wire.json").write_text(json.dumps(w, indent=1) + "\n")


if __name__ == "__main__":
    cmd = sys.argv[1] if len(sys.argv) > 1 else "check"
    if cmd == "generate":
        generate()
    sys.exit(1 if check() else 0)
