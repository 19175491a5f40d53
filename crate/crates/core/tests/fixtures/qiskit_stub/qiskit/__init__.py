"""Minimal stand-in exposing the surface the sample task touches."""


class QuantumCircuit:
    def __init__(self, *regs, name=None):
        self.num_qubits = regs[0] if regs and isinstance(regs[0], int) else 0
        self.num_clbits = regs[1] if len(regs) > 1 and isinstance(regs[1], int) else 0
        self.name = name
