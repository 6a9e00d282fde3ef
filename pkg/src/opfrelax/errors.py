"""Exception hierarchy shared by all modules."""


class OpfRelaxError(Exception):
    """Base class for every error raised by this package."""


class CaseSyntaxError(OpfRelaxError, ValueError):
    """Case text is not valid JSON; carries the line/column of the failure."""

    def __init__(self, msg, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(msg + where)


class CaseSemanticError(OpfRelaxError, ValueError):
    """Case parses but violates a network invariant."""


class TopologyError(OpfRelaxError, ValueError):
    """Operation requires a radial network but got a mesh (or vice versa)."""


class ResidualError(OpfRelaxError, ValueError):
    """A state fails the power-flow equations by more than the tolerance."""

    def __init__(self, msg, residual):
        self.residual = residual
        super().__init__(f"{msg} (max residual {residual:.3e})")


class DegenerateEdgeError(OpfRelaxError, ValueError):
    """Angle across an edge is undefined because its phasor is zero."""

    def __init__(self, edge):
        self.edge = edge
        super().__init__(f"implied phasor is zero on edge {edge}; angle undefined")


class CycleConditionError(OpfRelaxError, ValueError):
    """Implied angle differences do not sum to zero mod 2*pi around some cycle."""

    def __init__(self, defects, cycles=None):
        self.defects = dict(defects)
        self.cycles = dict(cycles or {})
        worst = max(self.defects, key=lambda e: abs(self.defects[e]))
        super().__init__(
            f"cycle condition violated on {len(self.defects)} basis cycle(s); "
            f"worst is closed by edge {worst} with defect {self.defects[worst]:.6g} rad"
        )


class NotInXncError(OpfRelaxError, ValueError):
    """v_j * l_jk != |S_jk|^2 on some edge: the point lies strictly inside the cone."""

    def __init__(self, edge, gap):
        self.edge = edge
        self.gap = gap
        super().__init__(f"cone inequality is strict on edge {edge} (gap {gap:.3e})")


class CompletionError(OpfRelaxError, ValueError):
    """Partial matrix has no psd rank-1 completion."""


class ConvergenceError(OpfRelaxError, RuntimeError):
    """Iterative solve did not converge within its budget."""

    def __init__(self, msg, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{msg} after {iterations} iterations (last update {residual:.3e})")


class RelaxationInexactError(OpfRelaxError, ValueError):
    """Recovery refused because the relaxed optimum is not in the original feasible set."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"relaxation is not exact (verdict: {report.verdict})")
