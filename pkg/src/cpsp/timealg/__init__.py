"""Time expressions, symbolic time constraints and satisfiability checking."""

from .expr import (Ceil, Cur, Dist, Floor, Num, BinOp, NonLinear, TimeConstraint,
                   TimeExpr, TVar, add, evaluate, has_cur, holds, show, sub,
                   subst_cur, variables)
from .smtlib import MalformedSolverReply, SmtSolver, SolverUnavailable, encode
from .store import (ConstraintStore, CurLeak, Oracle, Sat, Unknown, Unsat,
                    Verdict, builtin_check, check_sat, smt_check, verify_model)

encode_smtlib = encode

__all__ = [
    "BinOp", "Ceil", "ConstraintStore", "Cur", "CurLeak", "Dist", "Floor",
    "MalformedSolverReply", "NonLinear", "Num", "Oracle", "Sat", "SmtSolver",
    "SolverUnavailable", "TVar", "TimeConstraint", "TimeExpr", "Unknown",
    "Unsat", "Verdict", "add", "builtin_check", "check_sat", "encode",
    "encode_smtlib", "evaluate", "has_cur", "holds", "show", "smt_check",
    "sub", "subst_cur", "variables", "verify_model",
]
