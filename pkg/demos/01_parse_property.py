"""Parse a VNN-LIB property and look at its disjunctive normal form.

A property file describes the *bad* behaviour: the file is satisfiable
exactly when the network violates the property.  Parsing flattens the
assertions into a list of conjunctive cases, each with its own input box.
"""
from vnncomp import specfmt

SOURCE = """
; two inputs in the unit square, two outputs
(declare-const X_0 Real)
(declare-const X_1 Real)
(declare-const Y_0 Real)
(declare-const Y_1 Real)
(assert (>= X_0 0)) (assert (<= X_0 1))
(assert (>= X_1 0)) (assert (<= X_1 1))
; bad if output 1 is not strictly the largest, or output 0 exceeds 3
(assert (or (and (>= Y_0 Y_1))
            (and (>= Y_0 3.0))))
"""

spec = specfmt.parse_vnnlib(SOURCE)
print(f"{spec.num_inputs} inputs, {spec.num_outputs} outputs, {len(spec.cases)} cases")
for k, case in enumerate(spec.cases):
    print(f"case {k}: box {case.input_box}")
    for con in case.output_constraints:
        print("   ", specfmt.render_constraint(con))

# a point satisfying some case is a counterexample to the property
print("satisfied case at y=(4, 5):", spec.satisfied_case([0.5, 0.5], [4.0, 5.0]))
print("satisfied case at y=(0, 1):", spec.satisfied_case([0.5, 0.5], [0.0, 1.0]))

print("\ncanonical form:\n" + specfmt.serialize_specification(spec))
