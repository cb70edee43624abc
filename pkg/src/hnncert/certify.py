"""Certification pipeline: verify a family of rose endomorphisms and either
certify hyperbolicity of the multiple HNN extension built from their N-th
powers, or report a concrete obstruction.

Verdict semantics:

* ``certified_hyperbolic`` — every representative is an expanding irreducible
  train-track immersion, pullbacks stabilize, image subgroups are essentially
  disjoint at the emitted power N, expansion holds at N, and both annulus
  audits ran at exactly N with zero violations.
* ``obstruction_BS`` — a verified invariant loop [φ^k(γ)] = [γ^d]; the
  mapping torus then contains a Baumslag–Solitar subgroup and is not
  hyperbolic at any power.
* ``not_disjoint`` — a witnessed conjugate intersection at every power up to
  the cap.  Image subgroups shrink as the power grows, so this is a budget
  verdict like ``inconclusive`` (the CLI exits 3 for both), not an
  obstruction: a larger disjointness cap may still certify.
* ``inconclusive`` — anything else (failed preconditions, exhausted caps,
  audit violations); never a claim of non-hyperbolicity.

Power selection: per-check powers transfer to common multiples (images of
φ^{kN} sit inside images of φ^N, stabilized pullbacks stay stabilized, and
expansion factors compound), so N is their least common multiple; the
audits are then re-run at exactly N.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from . import __version__
from .annuli import (
    LoopSample,
    audit_31_hyperbolicity,
    build_annulus,
    flaring_audit,
    length_two_admissible_words,
)
from .disjointness import essential_disjointness_power
from .expansion import expansion_power
from .graphmap import (
    GraphMap,
    PowerIterationError,
    cyclic_paths_equal,
    is_immersion,
    is_irreducible_matrix,
    iterate_map,
    map_loop,
    pf_eigenvalue,
    random_legal_loop,
    transition_matrix,
    verify_train_track,
)
from .pullback import stabilization_power
from .words import Endomorphism, Word, word_from_string, word_to_string

LCM_CAP = 2**20


class ConfigError(ValueError):
    """Malformed certification input; the message names the offending field."""


@dataclass(frozen=True)
class MarkingPair:
    """A change of marking h with its declared inverse, both rose maps."""

    map: Endomorphism
    inverse: Endomorphism

    def bilipschitz_constant(self) -> int:
        return max(self.map.max_image_length(), self.inverse.max_image_length())


@dataclass(frozen=True)
class CertificationConfig:
    rank: int
    endomorphisms: tuple[Endomorphism, ...]
    markings: tuple[Optional[MarkingPair], ...] = ()
    pullback_cap: int = 16
    disjointness_cap: int = 8
    expansion_cap: int = 64
    audit_loops: int = 200
    audit_loop_length: int = 20
    flaring_rho_max: int = 4
    diagnostics: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError("rank: must be an integer >= 1")
        if not self.endomorphisms:
            raise ConfigError("endos: need at least one endomorphism")
        for i, e in enumerate(self.endomorphisms):
            if e.rank != self.rank:
                raise ConfigError(f"endos[{i}]: rank {e.rank} != configured rank")
        if self.markings and len(self.markings) != len(self.endomorphisms):
            raise ConfigError("marking_maps: need one entry (or null) per endomorphism")
        for cap_name in ("pullback_cap", "disjointness_cap", "expansion_cap"):
            if getattr(self, cap_name) < 1:
                raise ConfigError(f"caps: {cap_name} must be >= 1")
        if self.audit_loops < 1 or self.audit_loop_length < 1:
            raise ConfigError("caps: audit sample sizes must be >= 1")
        if self.flaring_rho_max < 1:
            raise ConfigError("caps: flaring_rho_max must be >= 1")


@dataclass(frozen=True)
class Certificate:
    verdict: str
    n: Optional[int]
    witness: Optional[dict]
    evidence: dict
    config_digest: str
    version: str


_TOP_KEYS = {"rank", "endos", "caps", "marking_maps", "seed", "diagnostics"}
_CAP_KEYS = {
    "pullback",
    "disjointness",
    "expansion",
    "audit_loops",
    "audit_loop_length",
    "flaring_rho_max",
}


def _parse_word(spec: Union[str, Sequence[int]], rank: int, where: str) -> Word:
    try:
        if isinstance(spec, str):
            return word_from_string(spec, rank)
        if isinstance(spec, (list, tuple)) and all(
            isinstance(x, int) and not isinstance(x, bool) for x in spec
        ):
            return Word(tuple(spec), rank)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: expected a letter string or a list of integers")


def _parse_endo(spec, rank: int, where: str) -> Endomorphism:
    if not isinstance(spec, (list, tuple)) or len(spec) != rank:
        raise ConfigError(f"{where}: expected one image word per generator")
    images = tuple(
        _parse_word(w, rank, f"{where}[{j}]") for j, w in enumerate(spec)
    )
    try:
        return Endomorphism(rank, images)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(text: bytes, lenient: bool = False) -> CertificationConfig:
    """Parse the JSON input schema; letter syntax like "aB" is normalized.

    Unknown fields are errors unless ``lenient``, which downgrades them to
    warnings.
    """
    try:
        data = json.loads(text.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"input is not UTF-8: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")

    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        if lenient:
            warnings.warn(f"ignoring unknown fields: {', '.join(unknown)}")
        else:
            raise ConfigError(f"unknown fields: {', '.join(unknown)}")

    rank = data.get("rank")
    if not isinstance(rank, int) or isinstance(rank, bool) or rank < 1:
        raise ConfigError("rank: must be an integer >= 1")

    endos_spec = data.get("endos")
    if not isinstance(endos_spec, list) or not endos_spec:
        raise ConfigError("endos: expected a non-empty list of endomorphisms")
    endos = tuple(
        _parse_endo(spec, rank, f"endos[{i}]") for i, spec in enumerate(endos_spec)
    )

    caps = data.get("caps", {})
    if not isinstance(caps, dict):
        raise ConfigError("caps: expected an object")
    unknown_caps = sorted(set(caps) - _CAP_KEYS)
    if unknown_caps:
        if lenient:
            warnings.warn(f"ignoring unknown caps: {', '.join(unknown_caps)}")
        else:
            raise ConfigError(f"caps: unknown keys: {', '.join(unknown_caps)}")
    for key, value in caps.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(f"caps: {key} must be an integer >= 1")

    markings: tuple[Optional[MarkingPair], ...] = ()
    marking_spec = data.get("marking_maps")
    if marking_spec is not None:
        if not isinstance(marking_spec, list) or len(marking_spec) != len(endos):
            raise ConfigError(
                "marking_maps: need one entry (or null) per endomorphism"
            )
        parsed: list[Optional[MarkingPair]] = []
        for i, entry in enumerate(marking_spec):
            where = f"marking_maps[{i}]"
            if entry is None:
                parsed.append(None)
                continue
            if not isinstance(entry, dict) or set(entry) != {"map", "inverse"}:
                raise ConfigError(f'{where}: expected {{"map": …, "inverse": …}}')
            h = _parse_endo(entry["map"], rank, f"{where}.map")
            h_inv = _parse_endo(entry["inverse"], rank, f"{where}.inverse")
            for j in range(1, rank + 1):
                gen = Word((j,), rank)
                if h(h_inv(gen)) != gen or h_inv(h(gen)) != gen:
                    raise ConfigError(
                        f"{where}: inverse fails on generator {word_to_string(gen)}"
                    )
            parsed.append(MarkingPair(h, h_inv))
        markings = tuple(parsed)

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed: must be an integer")
    diagnostics = data.get("diagnostics", False)
    if not isinstance(diagnostics, bool):
        raise ConfigError("diagnostics: must be a boolean")

    return CertificationConfig(
        rank=rank,
        endomorphisms=endos,
        markings=markings,
        pullback_cap=caps.get("pullback", 16),
        disjointness_cap=caps.get("disjointness", 8),
        expansion_cap=caps.get("expansion", 64),
        audit_loops=caps.get("audit_loops", 200),
        audit_loop_length=caps.get("audit_loop_length", 20),
        flaring_rho_max=caps.get("flaring_rho_max", 4),
        diagnostics=diagnostics,
        seed=seed,
    )


def _config_echo(config: CertificationConfig) -> dict:
    return {
        "rank": config.rank,
        "endos": [
            [word_to_string(w) for w in e.images] for e in config.endomorphisms
        ],
        "marking_maps": [
            None
            if m is None
            else {
                "map": [word_to_string(w) for w in m.map.images],
                "inverse": [word_to_string(w) for w in m.inverse.images],
            }
            for m in config.markings
        ]
        if config.markings
        else None,
        "caps": {
            "pullback": config.pullback_cap,
            "disjointness": config.disjointness_cap,
            "expansion": config.expansion_cap,
            "audit_loops": config.audit_loops,
            "audit_loop_length": config.audit_loop_length,
            "flaring_rho_max": config.flaring_rho_max,
        },
        "diagnostics": config.diagnostics,
        "seed": config.seed,
    }


def _canonical_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _loop_str(loop: Sequence[int], rank: int) -> str:
    return word_to_string(Word(tuple(loop), rank))


def _verified_bs_witness(
    f: GraphMap, loop, degree: int, power: int, rank: int
) -> Optional[dict]:
    """Re-check [f^power(γ)] = [γ^degree] before claiming an obstruction."""
    try:
        current = tuple(loop)
        for _ in range(power):
            current = map_loop(f, current)
        if not cyclic_paths_equal(current, tuple(loop) * degree):
            return None
    except ValueError:
        return None
    return {
        "loop": _loop_str(loop, rank),
        "degree": degree,
        "power": power,
    }


@dataclass
class _FlaringSummary:
    checked: int = 0
    flares: int = 0
    thin_girth: int = 0
    violations: list = field(default_factory=list)


def _flaring_battery(
    maps: Sequence[GraphMap],
    loop_sample: LoopSample,
    rho_max: int,
    rank: int,
) -> _FlaringSummary:
    """Build 1-thin annuli over every admissible length-2 word and run the
    flaring audit at every thinness bound up to ``rho_max``."""
    rng = random.Random(loop_sample.seed)
    summary = _FlaringSummary()
    for word in length_two_admissible_words(len(maps)):
        f_first = maps[abs(word.letters[0]) - 1]
        for _ in range(loop_sample.count):
            length = rng.randint(1, loop_sample.max_length)
            try:
                seed_loop = random_legal_loop(f_first, length, rng)
            except RuntimeError:
                continue
            alpha = seed_loop
            if word.letters[0] < 0:
                for _ in range(sum(1 for x in word.letters if x < 0)):
                    alpha = map_loop(f_first, alpha)
            annulus = build_annulus(alpha, word, maps)
            for rho in range(1, rho_max + 1):
                verdict = flaring_audit(annulus, rho)
                summary.checked += 1
                if verdict.kind == "flares_with":
                    summary.flares += 1
                elif verdict.kind == "thin_girth":
                    summary.thin_girth += 1
                else:
                    summary.violations.append(
                        {
                            "word": list(word.letters),
                            "alpha": _loop_str(alpha, rank),
                            "rho": rho,
                            "lengths": [str(l) for l in verdict.witness],
                        }
                    )
    return summary


def _diagnostics_report(reps: Sequence[GraphMap]) -> dict:
    from .lamination import independence_probe, leaf_segment, quasi_periodicity_probe

    report: dict = {"independence": [], "quasi_periodicity": []}
    for i in range(len(reps)):
        try:
            leaf = leaf_segment(reps[i], 1, 8)
            span = quasi_periodicity_probe(leaf, 2, 64)
        except ValueError as exc:
            report["quasi_periodicity"].append({"endo": i + 1, "error": str(exc)})
            continue
        report["quasi_periodicity"].append(
            {"endo": i + 1, "scale": 2, "span": span}
        )
    for i in range(len(reps)):
        for j in range(i + 1, len(reps)):
            try:
                verdict = independence_probe(reps[i], reps[j], 4, 6)
            except ValueError as exc:
                report["independence"].append(
                    {"pair": [i + 1, j + 1], "error": str(exc)}
                )
                continue
            report["independence"].append(
                {
                    "pair": [i + 1, j + 1],
                    "kind": verdict.kind,
                    "scale": verdict.scale,
                    "witness": list(verdict.witness) if verdict.witness else None,
                }
            )
    return report


def certify(config: CertificationConfig) -> Certificate:
    """Run the full pipeline and assemble a certificate.

    Deterministic: identical configs produce identical certificates (all
    sampling is seeded from ``config.seed``).
    """
    rank = config.rank
    reasons: list[str] = []
    bs_witnesses: list[dict] = []
    per_endo: list[dict] = []
    rep_endos: list[Endomorphism] = []
    reps: list[GraphMap] = []
    stab_powers: list[int] = []
    exp_powers: list[int] = []

    for i, phi in enumerate(config.endomorphisms):
        label = f"endomorphism {i + 1}"
        marking = config.markings[i] if config.markings else None
        rep_endo = (
            marking.map.compose(phi).compose(marking.inverse) if marking else phi
        )
        k_const = marking.bilipschitz_constant() if marking else 1
        f = GraphMap.from_endomorphism(rep_endo)
        rep_endos.append(rep_endo)
        reps.append(f)
        record: dict = {
            "endo": i + 1,
            "images": [word_to_string(w) for w in rep_endo.images],
            "marking_k": k_const,
        }

        record["immersion"] = is_immersion(f)
        if not record["immersion"]:
            reasons.append(f"{label}: representative is not an immersion")

        tt = verify_train_track(f)
        record["train_track"] = tt.kind
        if tt.kind != "train_track":
            reasons.append(f"{label}: illegal turn {tt.witness}")

        a = transition_matrix(f)
        record["irreducible"] = is_irreducible_matrix(a)
        if record["irreducible"]:
            try:
                lam = pf_eigenvalue(a)
            except PowerIterationError as exc:
                record["lambda"] = None
                reasons.append(f"{label}: eigenvalue estimate failed ({exc})")
            else:
                record["lambda"] = lam
                if lam <= 1:
                    reasons.append(f"{label}: not expanding (lambda = {lam})")
        else:
            record["lambda"] = None
            reasons.append(f"{label}: transition matrix is reducible")

        if record["immersion"]:
            stab = stabilization_power(f, cap=config.pullback_cap)
            record["pullback"] = {"kind": stab.kind, "n": stab.n}
            if stab.kind == "stabilized_at":
                stab_powers.append(stab.n)
            elif stab.kind == "invariant_loop":
                witness = _verified_bs_witness(
                    f, stab.loop, stab.degree, stab.power, rank
                )
                if witness is None:
                    reasons.append(
                        f"{label}: unverifiable invariant-loop report from pullback"
                    )
                else:
                    witness["endo"] = i + 1
                    bs_witnesses.append(witness)
            else:
                reasons.append(
                    f"{label}: pullback stabilization exceeded cap "
                    f"{config.pullback_cap}"
                )
        else:
            record["pullback"] = None

        if tt.kind == "train_track":
            exp = expansion_power(
                f, cap=config.expansion_cap, target_factor=3 * k_const * k_const
            )
            record["expansion"] = {"kind": exp.kind, "n": exp.n}
            if exp.kind == "power":
                exp_powers.append(exp.n)
            elif exp.kind == "periodic_loop_obstruction":
                witness = _verified_bs_witness(
                    f, exp.witness.orbit[0], 1, exp.witness.period, rank
                )
                if witness is None:
                    reasons.append(
                        f"{label}: edge {exp.witness.edge} has periodic image lengths"
                    )
                else:
                    witness["endo"] = i + 1
                    bs_witnesses.append(witness)
            else:
                reasons.append(
                    f"{label}: expansion exceeded cap {config.expansion_cap}"
                    + (f" ({exp.note})" if exp.note else "")
                )
        else:
            record["expansion"] = None

        per_endo.append(record)

    evidence: dict = {
        "per_endomorphism": per_endo,
        "tool_versions": {"hnncert": __version__},
        "config": _config_echo(config),
    }

    disjoint_power: Optional[int] = None
    not_disjoint_witness: Optional[dict] = None
    if len(config.endomorphisms) >= 2:
        verdict = essential_disjointness_power(
            rep_endos, cap=config.disjointness_cap
        )
        if verdict.kind == "cap_exceeded" and verdict.n and verdict.n > 1:
            # The budget blew at power n, so powers 1..n-1 were each fully
            # tested; summarize those instead of discarding their witnesses.
            retry = essential_disjointness_power(rep_endos, cap=verdict.n - 1)
            if retry.kind != "cap_exceeded":
                verdict = replace(
                    retry,
                    note=f"search budget exhausted at power {verdict.n}; "
                    f"verdict covers powers 1..{verdict.n - 1}",
                )
        evidence["disjointness"] = {
            "kind": verdict.kind,
            "n": verdict.n,
            "note": verdict.note,
        }
        if verdict.kind == "disjoint_at":
            disjoint_power = verdict.n
        elif verdict.kind == "not_disjoint_at_cap":
            w = verdict.witness
            if w is None:
                reasons.append(
                    "family: conjugate intersections persist at every power up "
                    f"to {verdict.n} but no witness could be extracted"
                )
            else:
                not_disjoint_witness = {
                    "pair": [w.pair[0] + 1, w.pair[1] + 1],
                    "power": verdict.n,
                    "conjugator": word_to_string(w.conjugator),
                    "element": word_to_string(w.element),
                }
        else:
            reasons.append(
                f"family: disjointness search exceeded budget ({verdict.note})"
            )
    else:
        evidence["disjointness"] = {
            "kind": "skipped",
            "n": None,
            "note": "single endomorphism: mapping-torus mode",
        }

    if config.diagnostics:
        evidence["diagnostics"] = _diagnostics_report(reps)

    def finish(verdict: str, n: Optional[int], witness: Optional[dict]) -> Certificate:
        echo_bytes = _canonical_bytes(_config_echo(config))
        return Certificate(
            verdict=verdict,
            n=n,
            witness=witness,
            evidence=evidence,
            config_digest=hashlib.sha256(echo_bytes).hexdigest(),
            version=__version__,
        )

    if bs_witnesses:
        return finish("obstruction_BS", None, bs_witnesses[0])
    if not_disjoint_witness is not None:
        return finish("not_disjoint", None, not_disjoint_witness)
    if reasons:
        evidence["reasons"] = sorted(set(reasons))
        return finish("inconclusive", None, None)

    powers = stab_powers + exp_powers
    if disjoint_power is not None:
        powers.append(disjoint_power)
    n = math.lcm(*powers)
    if n > LCM_CAP:
        evidence["reasons"] = [f"common power {n} exceeds the cap {LCM_CAP}"]
        return finish("inconclusive", None, None)

    maps_n = [iterate_map(f, n) if n > 1 else f for f in reps]
    sample = LoopSample(
        count=config.audit_loops,
        max_length=config.audit_loop_length,
        seed=config.seed,
    )
    audit = audit_31_hyperbolicity(maps_n, sample)
    evidence["audit_31"] = {
        "power": n,
        "words": len(audit.words),
        "checked": audit.checked,
        "violations": [
            {
                "word": list(v.word.letters),
                "alpha": _loop_str(v.alpha, rank),
                "lengths": [str(l) for l in v.lengths],
            }
            for v in audit.violations
        ],
    }
    flaring = _flaring_battery(maps_n, sample, config.flaring_rho_max, rank)
    evidence["flaring"] = {
        "power": n,
        "checked": flaring.checked,
        "flares": flaring.flares,
        "thin_girth": flaring.thin_girth,
        "violations": flaring.violations,
    }

    if audit.violations or flaring.violations:
        evidence["reasons"] = [
            "annulus audits found violations at the certified power"
        ]
        return finish("inconclusive", n, None)

    return finish("certified_hyperbolic", n, None)


def emit_report(c: Certificate, format: str = "json") -> bytes:
    """Serialize a certificate; JSON output is byte-stable and round-trips."""
    if format == "json":
        payload = {
            "verdict": c.verdict,
            "N": c.n,
            "witness": c.witness,
            "evidence": c.evidence,
            "config_digest": c.config_digest,
            "version": c.version,
        }
        return (
            json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
        ).encode("utf-8")
    if format == "text":
        lines = [f"verdict: {c.verdict}"]
        if c.n is not None:
            lines.append(f"power N: {c.n}")
        if c.witness:
            lines.append(
                "witness: "
                + ", ".join(f"{k}={v}" for k, v in sorted(c.witness.items()))
            )
        for record in c.evidence.get("per_endomorphism", []):
            lam = record.get("lambda")
            lines.append(
                f"endo {record['endo']}: images {' '.join(record['images'])}; "
                f"immersion {record['immersion']}; train track "
                f"{record['train_track']}; irreducible {record['irreducible']}; "
                f"lambda {lam if lam is not None else 'n/a'}"
            )
        dis = c.evidence.get("disjointness")
        if dis:
            lines.append(f"disjointness: {dis['kind']} (n={dis['n']})")
        for key in ("audit_31", "flaring"):
            block = c.evidence.get(key)
            if block:
                lines.append(
                    f"{key}: checked {block['checked']}, "
                    f"violations {len(block['violations'])}"
                )
        for reason in c.evidence.get("reasons", []):
            lines.append(f"reason: {reason}")
        lines.append(f"config digest: {c.config_digest}")
        lines.append(f"version: {c.version}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError("format must be json or text")


def parse_report(data: bytes) -> Certificate:
    """Inverse of ``emit_report(…, "json")``."""
    payload = json.loads(data.decode("utf-8"))
    return Certificate(
        verdict=payload["verdict"],
        n=payload["N"],
        witness=payload["witness"],
        evidence=payload["evidence"],
        config_digest=payload["config_digest"],
        version=payload["version"],
    )
