"""Symbolic check of the lattice-deformation CNOT.

The protocol is tracked as a stabiliser group on the whole chain: each step
initialises or measures qubits and switches the active checks. At the end,
every input logical operator is rewritten in terms of output logicals.
"""
from segchain.protocols import audit_distance, cnot_protocol, verify_cnot, verify_protocol

for d in (3, 5):
    r = verify_cnot(d)
    print(f"d={d}: passed={r.passed}")
    for name, image in sorted(r.logical_map.items()):
        print(f"   {name:2} -> {' * '.join(image)}")
    print(f"   smallest logical weight in each configuration: {audit_distance(cnot_protocol(d))}")

# a deliberately broken variant: one corner of the middle ancilla is left out
bad = cnot_protocol(3, "a2_corner_smooth")
print(f"\ncorrupted corner: audit={audit_distance(bad)}")
for err in verify_protocol(bad).errors:
    print("   ", err)
