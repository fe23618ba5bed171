//! Guarded extraction programs: AST, interpreter, JSON form and the
//! enumerable grammar.

mod ast;
mod eval;
mod grammar;
mod serialize;

pub use ast::{AstBounds, Branch, Extractor, Guard, Locator, NodeFilter, Pred, Program};
pub use eval::{
    eval_extractor, eval_guard, eval_locator, eval_node_filter, eval_program, run_program, Interp, NodeSet, Run,
    StringSet,
};
pub use grammar::{Grammar, Shape};
pub use serialize::{
    branch_value, canonical, canonical_branch, canonical_extractor, canonical_guard, canonical_locator, desugar,
    desugar_call, extractor_value, guard_value, locator_value, parse_extractor, parse_guard, parse_locator,
    parse_program, program_from_value, program_value, to_pretty, ParseError,
};
