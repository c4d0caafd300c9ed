"""Generated development files used across the test suite.

Run ``python3 tests/fixtures.py DIR`` to write them out for manual CLI use.
"""

import sys
from pathlib import Path

LONG_PROOFS = [
    ("cyclic_infinite_order_iff_Z", 1999),
    ("thm60_1_pi1_product", 1474),
    ("Theorem_51_3_reparametrization", 1446),
    ("ex53_4_composition_covering", 1426),
    ("s55_lemma58_4_homotopy_path_continuous", 1351),
    ("lemma58_4_homotopy_path", 1349),
    ("thm53_3_product_covering", 1339),
    ("ex58_2h_open_disk_simply_connected", 1102),
    ("ex53_6b_compact_finite_fiber", 1054),
    ("ex67_4b_free_abelian_no_torsion", 920),
    ("Theorem_51_2_left_identity", 906),
    ("Theorem_51_2_right_identity", 759),
    ("Theorem_51_2_right_inverse", 705),
    ("thm53_2_subspace_covering", 674),
    ("path_concat_well_defined_on_classes", 581),
    ("lemma52_1_cancel_double_basepoint_change_class", 562),
    ("Lemma_51_1_path_homotopy_trans", 523),
    ("evenly_covered_open_subset_top", 521),
    ("lemma67_1_converse", 446),
    ("ex67_4a_torsion_subgroup", 423),
    ("ex53_1_discrete_projection_covering", 420),
]

# long proofs that are finished modulo an admitted dependency
BLOCKED = [
    ("lemma59_1_open_cover_generates_pi1_core", 6132),
    ("lemma68_1_extension_condition_free_product", 5546),
    ("lemma54_1_path_lifting", 2431),
    ("thm55_5_nonvanishing_vector_field", 1604),
]

# fully proved but at or below the cut
SHORT = [("carrier_rep_exists", 400), ("loop_class_nonempty", 399), ("basepoint_change_id", 12)]

BROUWER_CHAIN = [
    ("inclusion_circle_not_nulhomotopic", 2390, "pi1_circle_iso_Z"),
    ("nonvanishing_field_points_in_and_out", 3729, "inclusion_circle_not_nulhomotopic"),
    ("brouwer_fixed_point", 1564, "nonvanishing_field_points_in_and_out"),
]
# proved lemmas the admitted node itself uses
BELOW_PI1 = [("circle_covering_map", 210, None), ("path_lifting_unique", 95, "circle_covering_map")]


def proof(n, uses=()):
    """A proof body of exactly *n* normalized lines, the first ones citing *uses*."""
    lines = [f"  apply {u}." for u in uses if u]
    lines += [f"  have h{k} : step {k} (x{k})." for k in range(n - len(lines))]
    return "\n".join(lines) + "\n"


def theorem(name, n, uses=(), status="Qed", kind="Theorem", stmt=None):
    stmt = stmt or f"prop_{name} topology"
    body = proof(n, uses) if n else ""
    return f"{kind} {name} : {stmt}.\n{body}{status}.\n"


def long_proofs_source():
    parts = ["(* algebraic topology, miniature *)\n", "Definition topology := open_sets.\n"]
    parts.append(theorem("basic_fact", 3))
    parts.append(theorem("major_blocker", 2, status="Admitted"))
    for name, n in LONG_PROOFS:
        parts.append(theorem(name, n, ["basic_fact"]))
    for name, n in BLOCKED:
        parts.append(theorem(name, n, ["major_blocker"], kind="Lemma"))
    for name, n in SHORT:
        parts.append(theorem(name, n, ["basic_fact"], kind="Lemma"))
    parts.append(theorem("unfinished_giant", 7000, status="Admitted"))
    return "".join(parts)


def brouwer_source():
    parts = ["Definition cos_sin_pair := epsilon_pair.\n"]
    for name, n, use in BELOW_PI1:
        parts.append(theorem(name, n, [use, "cos_sin_pair"], kind="Lemma"))
    parts.append(theorem("pi1_circle_iso_Z", 40, ["path_lifting_unique"], status="Admitted"))
    for name, n, use in BROUWER_CHAIN:
        parts.append(theorem(name, n, [use]))
    return "".join(parts)


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "long_proofs.mg").write_text(long_proofs_source())
    (out / "brouwer.mg").write_text(brouwer_source())
