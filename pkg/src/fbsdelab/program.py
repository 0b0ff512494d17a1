"""Compilation of expression ASTs to flat postfix programs.

The interpreters in the kernel backends cannot walk Python AST objects, so
each coefficient is lowered once to three parallel arrays (opcodes, operand
indices, constants).  The same program is consumed by the vectorised numpy
evaluator below and by the scalar njit interpreter in the numba backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as E

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_SIN = 7
OP_COS = 8
OP_EXP = 9
OP_TANH = 10
OP_ABS = 11
OP_SQRT = 12
OP_MIN = 13
OP_MAX = 14

_CALL_OPS = {
    "sin": OP_SIN,
    "cos": OP_COS,
    "exp": OP_EXP,
    "tanh": OP_TANH,
    "abs": OP_ABS,
    "sqrt": OP_SQRT,
    "min": OP_MIN,
    "max": OP_MAX,
}


def var_index(name: str, d: int, k: int) -> int:
    """Position of a variable in the flat (t, x, y, z) value vector."""
    if name == "t":
        return 0
    head, tail = name[0], name[1:]
    if head == "x":
        return 1 + int(tail) - 1
    if head == "y":
        return 1 + d + int(tail) - 1
    # z{i}{j}, one digit each, row-major
    i, j = int(tail[0]) - 1, int(tail[1]) - 1
    return 1 + d + k + i * d + j


def n_variables(d: int, k: int) -> int:
    return 1 + d + k + k * d


@dataclass(frozen=True)
class Program:
    ops: np.ndarray  # int64
    args: np.ndarray  # int64, const index or variable index
    consts: np.ndarray  # float64
    stack_need: int

    def __len__(self):
        return len(self.ops)


def compile_expression(node: E.Node, d: int, k: int) -> Program:
    ops: list[int] = []
    args: list[int] = []
    consts: list[float] = []

    def emit(n):
        if isinstance(n, E.Num):
            ops.append(OP_CONST)
            args.append(len(consts))
            consts.append(float(n.value))
            return 1
        if isinstance(n, E.Var):
            ops.append(OP_VAR)
            args.append(var_index(n.name, d, k))
            return 1
        if isinstance(n, E.Neg):
            depth = emit(n.operand)
            ops.append(OP_NEG)
            args.append(0)
            return depth
        if isinstance(n, E.Call):
            if len(n.args) == 1:
                depth = emit(n.args[0])
                ops.append(_CALL_OPS[n.fn])
                args.append(0)
                return depth
            da = emit(n.args[0])
            db = emit(n.args[1])
            ops.append(_CALL_OPS[n.fn])
            args.append(0)
            return max(da, 1 + db)
        da = emit(n.left)
        db = emit(n.right)
        ops.append({"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}[n.op])
        args.append(0)
        return max(da, 1 + db)

    depth = emit(node)
    return Program(
        ops=np.asarray(ops, dtype=np.int64),
        args=np.asarray(args, dtype=np.int64),
        consts=np.asarray(consts if consts else [0.0], dtype=np.float64),
        stack_need=depth,
    )


def eval_program(program: Program, variables) -> np.ndarray:
    """Vectorised evaluation; ``variables[i]`` is a scalar or array for slot i.

    All array-valued variables must share one broadcast shape.  Non-finite
    results are returned as-is; callers decide whether that is an error.
    """
    stack = []
    with np.errstate(all="ignore"):
        for op, arg in zip(program.ops, program.args):
            if op == OP_CONST:
                stack.append(program.consts[arg])
            elif op == OP_VAR:
                stack.append(variables[arg])
            elif op == OP_NEG:
                stack.append(-stack.pop())
            elif op == OP_ADD:
                b = stack.pop()
                stack.append(stack.pop() + b)
            elif op == OP_SUB:
                b = stack.pop()
                stack.append(stack.pop() - b)
            elif op == OP_MUL:
                b = stack.pop()
                stack.append(stack.pop() * b)
            elif op == OP_DIV:
                b = stack.pop()
                stack.append(np.divide(stack.pop(), b))
            elif op == OP_SIN:
                stack.append(np.sin(stack.pop()))
            elif op == OP_COS:
                stack.append(np.cos(stack.pop()))
            elif op == OP_EXP:
                stack.append(np.exp(stack.pop()))
            elif op == OP_TANH:
                stack.append(np.tanh(stack.pop()))
            elif op == OP_ABS:
                stack.append(np.abs(stack.pop()))
            elif op == OP_SQRT:
                stack.append(np.sqrt(stack.pop()))
            elif op == OP_MIN:
                b = stack.pop()
                stack.append(np.minimum(stack.pop(), b))
            elif op == OP_MAX:
                b = stack.pop()
                stack.append(np.maximum(stack.pop(), b))
    return np.asarray(stack[0], dtype=np.float64)
