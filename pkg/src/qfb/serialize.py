"""JSON encoding for matrices, states, channels, ensembles, specs and traces.

Complex entries are written as ``[re, im]`` pairs.  Floats go through
Python's shortest round-trip ``repr``, so decoding reproduces every double
bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .channels import ChannelMixture, KrausChannel
from .cq import CQEnsemble, Instrument, OneWayLOCC
from .protocol import ProtocolSpec, ProtocolTrace, RoundRecord
from .states import DensityMatrix, PureState, SystemLayout


class SpecError(ValueError):
    """Malformed JSON input."""


def encode_array(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise SpecError("complex arrays must be nested lists of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def encode_layout(layout: SystemLayout) -> list:
    return [[label, dim] for label, dim in layout.factors]


def decode_layout(data) -> SystemLayout:
    return SystemLayout(tuple((str(lb), int(d)) for lb, d in data))


def encode_state(state) -> dict:
    if isinstance(state, PureState):
        return {"kind": "pure", "layout": encode_layout(state.layout), "amplitudes": encode_array(state.amplitudes)}
    return {"kind": "density", "layout": encode_layout(state.layout), "entries": encode_array(state.entries)}


def decode_state(data: dict):
    layout = decode_layout(data["layout"])
    if data["kind"] == "pure":
        return PureState(layout, decode_array(data["amplitudes"]), check=False)
    if data["kind"] == "density":
        return DensityMatrix(layout, decode_array(data["entries"]), check=False)
    raise SpecError(f"unknown state kind {data['kind']!r}")


def encode_channel(ch) -> dict:
    if isinstance(ch, ChannelMixture):
        return {"type": "mixture",
                "components": [{"weight": w, "channel": encode_channel(c)} for w, c in ch.components]}
    return {"type": "kraus", "dim_in": ch.dim_in, "dim_out": ch.dim_out,
            "kraus": [encode_array(k) for k in ch.kraus]}


def decode_channel(data: dict):
    kind = data.get("type")
    if kind == "mixture":
        return ChannelMixture(tuple((float(c["weight"]), decode_channel(c["channel"]))
                                    for c in data["components"]))
    if kind == "kraus":
        return KrausChannel(int(data["dim_in"]), int(data["dim_out"]), [decode_array(k) for k in data["kraus"]])
    raise SpecError(f"unknown channel type {kind!r}")


def encode_ensemble(e: CQEnsemble) -> dict:
    return {"registers": list(e.registers),
            "entries": [{"key": list(k), "p": p, "state": encode_state(s)} for k, (p, s) in e.items()]}


def decode_ensemble(data: dict) -> CQEnsemble:
    entries = {tuple(d["key"]): (float(d["p"]), decode_state(d["state"])) for d in data["entries"]}
    return CQEnsemble(tuple(data["registers"]), entries)


def encode_instrument(inst: Instrument) -> dict:
    return {"outcomes": [{"label": lb, "ops": [encode_array(k) for k in ops]} for lb, ops in inst.outcomes]}


def decode_instrument(data: dict) -> Instrument:
    return Instrument(tuple((o["label"], [decode_array(k) for k in o["ops"]]) for o in data["outcomes"]))


def encode_locc(m: OneWayLOCC) -> dict:
    return {"outcomes": [{"x": x, "U": encode_array(u), "V": encode_array(v)} for x, u, v in m.outcomes]}


def decode_locc(data: dict) -> OneWayLOCC:
    return OneWayLOCC(tuple((o["x"], decode_array(o["U"]), decode_array(o["V"])) for o in data["outcomes"]))


def encode_spec(spec: ProtocolSpec) -> dict:
    return {
        "n": spec.n,
        "M": spec.M,
        "channel": encode_channel(spec.channel),
        "codewords": [encode_array(c) for c in spec.codewords],
        "initial_bob": [{"p": p, "state": encode_array(s)} for p, s in spec.initial_bob],
        "encoders": [[encode_channel(e) for e in fs] for fs in spec.encoders],
        "decoders": [encode_instrument(d) for d in spec.decoders],
        "povm": [encode_array(el) for el in spec.povm],
        "hamiltonian": encode_array(spec.hamiltonian),
        "energy_budget": spec.energy_budget,
    }


def decode_spec(data: dict) -> ProtocolSpec:
    try:
        return ProtocolSpec(
            int(data["n"]), int(data["M"]), decode_channel(data["channel"]),
            [decode_array(c) for c in data["codewords"]],
            [(float(d["p"]), decode_array(d["state"])) for d in data["initial_bob"]],
            [[decode_channel(e) for e in fs] for fs in data["encoders"]],
            [decode_instrument(d) for d in data["decoders"]],
            [decode_array(el) for el in data["povm"]],
            decode_array(data["hamiltonian"]), float(data["energy_budget"]),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise SpecError(f"malformed protocol spec: {exc!r}") from exc


def encode_trace(trace: ProtocolTrace, dump_states: bool = False) -> dict:
    rounds = []
    for r in trace.rounds:
        d = {k: (float(v) if k != "round" else v) for k, v in r.scalars().items()}
        if dump_states:
            d["input_state"] = encode_array(r.input_state)
            if r.omega is not None:
                d["omega"] = encode_ensemble(r.omega)
                d["rho"] = encode_ensemble(r.rho)
        rounds.append(d)
    return {
        "kind": trace.kind,
        "n": trace.n,
        "M": trace.M,
        "error_probability": float(trace.error_probability),
        "average_energy": float(trace.average_energy),
        "mutual_information": float(trace.mutual_information),
        "joint": [[float(x) for x in row] for row in trace.joint],
        "dims": list(trace.dims),
        "rounds": rounds,
    }


def decode_trace(data: dict) -> ProtocolTrace:
    rounds = []
    for d in data["rounds"]:
        state = decode_array(d["input_state"]) if "input_state" in d else None
        rounds.append(RoundRecord(
            int(d["round"]), float(d["monotone_before"]), float(d["monotone_after"]),
            float(d["input_energy"]), float(d["channel_output_entropy"]), state,
            d.get("conditional_output_entropy"),
            omega=decode_ensemble(d["omega"]) if "omega" in d else None,
            rho=decode_ensemble(d["rho"]) if "rho" in d else None,
        ))
    return ProtocolTrace(data["kind"], int(data["n"]), int(data["M"]), tuple(rounds),
                         float(data["error_probability"]), float(data["average_energy"]),
                         float(data["mutual_information"]), np.asarray(data["joint"], dtype=float),
                         tuple(data.get("dims", ())))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from exc
