//! JSON encoding of programs: every AST node is `{"op": name, "args": [...]}`.

use serde_json::{json, Value};

use super::ast::{Branch, Extractor, Guard, Locator, NodeFilter, Pred, Program};
use crate::nlp::{EntityLabel, PredicateKind, TaskContext, Threshold};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("malformed program JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed AST: {0}")]
    Ast(String),
    #[error("unknown syntactic sugar {0:?}")]
    UnknownSugar(String),
}

fn node(op: &str, args: Vec<Value>) -> Value {
    json!({"op": op, "args": args})
}

fn atom_value(k: &PredicateKind) -> Value {
    match k {
        PredicateKind::KeywordMatch(t) => node("matchKeyword", vec![json!(t)]),
        PredicateKind::HasAnswer => node("hasAnswer", vec![]),
        PredicateKind::HasEntity(l) => node("hasEntity", vec![json!(l.as_str())]),
    }
}

pub fn pred_value(p: &Pred) -> Value {
    match p {
        Pred::True => node("true", vec![]),
        Pred::Atom(k) => atom_value(k),
        Pred::And(a, b) => node("and", vec![pred_value(a), pred_value(b)]),
        Pred::Or(a, b) => node("or", vec![pred_value(a), pred_value(b)]),
        Pred::Not(a) => node("not", vec![pred_value(a)]),
    }
}

pub fn filter_value(f: &NodeFilter) -> Value {
    match f {
        NodeFilter::True => node("true", vec![]),
        NodeFilter::IsLeaf => node("isLeaf", vec![]),
        NodeFilter::IsElem => node("isElem", vec![]),
        NodeFilter::MatchText(p, b) => node("matchText", vec![pred_value(p), json!(b)]),
        NodeFilter::And(a, b) => node("and", vec![filter_value(a), filter_value(b)]),
        NodeFilter::Or(a, b) => node("or", vec![filter_value(a), filter_value(b)]),
        NodeFilter::Not(a) => node("not", vec![filter_value(a)]),
    }
}

pub fn locator_value(l: &Locator) -> Value {
    match l {
        Locator::Root => node("GetRoot", vec![]),
        Locator::Children(i, f) => node("GetChildren", vec![locator_value(i), filter_value(f)]),
        Locator::Descendants(i, f) => node("GetDescendants", vec![locator_value(i), filter_value(f)]),
    }
}

pub fn guard_value(g: &Guard) -> Value {
    match g {
        Guard::Sat(l, p) => node("Sat", vec![locator_value(l), pred_value(p)]),
        Guard::IsSingleton(l) => node("IsSingleton", vec![locator_value(l)]),
    }
}

pub fn extractor_value(e: &Extractor) -> Value {
    match e {
        Extractor::Content => node("ExtractContent", vec![]),
        Extractor::Substring(i, p, k) => {
            let p = p.as_ref().map_or_else(|| node("true", vec![]), atom_value);
            node("Substring", vec![extractor_value(i), p, json!(k)])
        }
        Extractor::Filter(i, p) => node("Filter", vec![extractor_value(i), pred_value(p)]),
        Extractor::Split(i, c) => node("Split", vec![extractor_value(i), json!(c.to_string())]),
    }
}

pub fn branch_value(b: &Branch) -> Value {
    json!({"guard": guard_value(&b.guard), "extractor": extractor_value(&b.extractor)})
}

pub fn program_value(p: &Program) -> Value {
    json!({
        "question": p.ctx.question,
        "keywords": p.ctx.keywords,
        "branches": p.branches.iter().map(branch_value).collect::<Vec<_>>(),
    })
}

/// Compact canonical form; equal programs give identical strings.
pub fn canonical(p: &Program) -> String {
    program_value(p).to_string()
}

pub fn canonical_branch(b: &Branch) -> String {
    branch_value(b).to_string()
}

pub fn canonical_guard(g: &Guard) -> String {
    guard_value(g).to_string()
}

pub fn canonical_extractor(e: &Extractor) -> String {
    extractor_value(e).to_string()
}

pub fn canonical_locator(l: &Locator) -> String {
    locator_value(l).to_string()
}

pub fn to_pretty(p: &Program) -> String {
    serde_json::to_string_pretty(&program_value(p)).expect("program serializes")
}

fn err<T>(msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Ast(msg.into()))
}

fn op_args(v: &Value) -> Result<(&str, &[Value]), ParseError> {
    let op = v.get("op").and_then(Value::as_str).ok_or_else(|| ParseError::Ast(format!("missing op in {v}")))?;
    let args = match v.get("args") {
        None => &[][..],
        Some(Value::Array(a)) => a.as_slice(),
        Some(other) => return err(format!("args of {op} is not an array: {other}")),
    };
    Ok((op, args))
}

fn arity(op: &str, args: &[Value], n: usize) -> Result<(), ParseError> {
    if args.len() != n {
        return err(format!("{op} expects {n} argument(s), got {}", args.len()));
    }
    Ok(())
}

/// Rewrites `GetLeaves` and `GetEntity` into core constructs, recursively.
/// Core ASTs are returned unchanged.
pub fn desugar(v: &Value) -> Result<Value, ParseError> {
    match v {
        Value::Array(a) => Ok(Value::Array(a.iter().map(desugar).collect::<Result<_, _>>()?)),
        Value::Object(m) if m.contains_key("op") => {
            let (op, args) = op_args(v)?;
            let args: Vec<Value> = args.iter().map(desugar).collect::<Result<_, _>>()?;
            match op {
                "GetLeaves" => {
                    arity(op, &args, 1)?;
                    Ok(node("GetDescendants", vec![args[0].clone(), node("isLeaf", vec![])]))
                }
                "GetEntity" => {
                    arity(op, &args, 2)?;
                    Ok(node("Substring", vec![args[0].clone(), node("hasEntity", vec![args[1].clone()]), json!(1)]))
                }
                _ => Ok(node(op, args)),
            }
        }
        Value::Object(m) => {
            let mut out = serde_json::Map::new();
            for (k, x) in m {
                out.insert(k.clone(), desugar(x)?);
            }
            Ok(Value::Object(out))
        }
        other => Ok(other.clone()),
    }
}

/// Expands one sugar form given its arguments.
pub fn desugar_call(name: &str, args: Vec<Value>) -> Result<Value, ParseError> {
    match name {
        "GetLeaves" | "GetEntity" => desugar(&node(name, args)),
        other => Err(ParseError::UnknownSugar(other.to_string())),
    }
}

fn parse_atom(op: &str, args: &[Value]) -> Result<Option<PredicateKind>, ParseError> {
    Ok(Some(match op {
        "matchKeyword" => {
            arity(op, args, 1)?;
            let t = args[0].as_f64().and_then(Threshold::from_f64).ok_or_else(|| {
                ParseError::Ast(format!("matchKeyword threshold must be a number in [0,1], got {}", args[0]))
            })?;
            PredicateKind::KeywordMatch(t)
        }
        "hasAnswer" => {
            arity(op, args, 0)?;
            PredicateKind::HasAnswer
        }
        "hasEntity" => {
            arity(op, args, 1)?;
            let l = args[0].as_str().ok_or_else(|| ParseError::Ast("hasEntity label must be a string".into()))?;
            PredicateKind::HasEntity(EntityLabel::new(l))
        }
        _ => return Ok(None),
    }))
}

pub fn parse_pred(v: &Value) -> Result<Pred, ParseError> {
    let (op, args) = op_args(v)?;
    if let Some(k) = parse_atom(op, args)? {
        return Ok(Pred::Atom(k));
    }
    match op {
        "true" => {
            arity(op, args, 0)?;
            Ok(Pred::True)
        }
        "and" | "or" => {
            arity(op, args, 2)?;
            let (a, b) = (parse_pred(&args[0])?, parse_pred(&args[1])?);
            Ok(if op == "and" { Pred::and(a, b) } else { Pred::or(a, b) })
        }
        "not" => {
            arity(op, args, 1)?;
            Ok(Pred::negate(parse_pred(&args[0])?))
        }
        _ => err(format!("unknown predicate op {op:?}")),
    }
}

pub fn parse_filter(v: &Value) -> Result<NodeFilter, ParseError> {
    let (op, args) = op_args(v)?;
    match op {
        "true" | "isLeaf" | "isElem" => {
            arity(op, args, 0)?;
            Ok(match op {
                "true" => NodeFilter::True,
                "isLeaf" => NodeFilter::IsLeaf,
                _ => NodeFilter::IsElem,
            })
        }
        "matchText" => {
            arity(op, args, 2)?;
            let b = args[1].as_bool().ok_or_else(|| ParseError::Ast("matchText flag must be a boolean".into()))?;
            Ok(NodeFilter::MatchText(parse_pred(&args[0])?, b))
        }
        "and" | "or" => {
            arity(op, args, 2)?;
            let (a, b) = (parse_filter(&args[0])?, parse_filter(&args[1])?);
            Ok(if op == "and" { NodeFilter::and(a, b) } else { NodeFilter::or(a, b) })
        }
        "not" => {
            arity(op, args, 1)?;
            Ok(NodeFilter::negate(parse_filter(&args[0])?))
        }
        _ => err(format!("unknown node filter op {op:?}")),
    }
}

pub fn parse_locator(v: &Value) -> Result<Locator, ParseError> {
    let (op, args) = op_args(v)?;
    match op {
        "GetRoot" => {
            arity(op, args, 0)?;
            Ok(Locator::Root)
        }
        "GetChildren" | "GetDescendants" => {
            arity(op, args, 2)?;
            let (l, f) = (parse_locator(&args[0])?, parse_filter(&args[1])?);
            Ok(if op == "GetChildren" { Locator::children(l, f) } else { Locator::descendants(l, f) })
        }
        _ => err(format!("unknown locator op {op:?}")),
    }
}

pub fn parse_guard(v: &Value) -> Result<Guard, ParseError> {
    let (op, args) = op_args(v)?;
    match op {
        "Sat" => {
            arity(op, args, 2)?;
            Ok(Guard::Sat(parse_locator(&args[0])?, parse_pred(&args[1])?))
        }
        "IsSingleton" => {
            arity(op, args, 1)?;
            Ok(Guard::IsSingleton(parse_locator(&args[0])?))
        }
        _ => err(format!("unknown guard op {op:?}")),
    }
}

pub fn parse_extractor(v: &Value) -> Result<Extractor, ParseError> {
    let (op, args) = op_args(v)?;
    match op {
        "ExtractContent" => {
            arity(op, args, 0)?;
            Ok(Extractor::Content)
        }
        "Substring" => {
            arity(op, args, 3)?;
            let inner = parse_extractor(&args[0])?;
            let p = match parse_pred(&args[1])? {
                Pred::True => None,
                Pred::Atom(k) => Some(k),
                other => return err(format!("Substring needs an atomic predicate, got {other}")),
            };
            let k = args[2]
                .as_u64()
                .filter(|k| (1..=u64::from(u32::MAX)).contains(k))
                .ok_or_else(|| ParseError::Ast(format!("Substring k must be a positive integer, got {}", args[2])))?;
            Ok(Extractor::substring(inner, p, k as u32))
        }
        "Filter" => {
            arity(op, args, 2)?;
            Ok(Extractor::filter(parse_extractor(&args[0])?, parse_pred(&args[1])?))
        }
        "Split" => {
            arity(op, args, 2)?;
            let s = args[1].as_str().ok_or_else(|| ParseError::Ast("Split delimiter must be a string".into()))?;
            let mut cs = s.chars();
            match (cs.next(), cs.next()) {
                (Some(c), None) => Ok(Extractor::split(parse_extractor(&args[0])?, c)),
                _ => err(format!("Split delimiter must be one character, got {s:?}")),
            }
        }
        _ => err(format!("unknown extractor op {op:?}")),
    }
}

pub fn program_from_value(v: &Value) -> Result<Program, ParseError> {
    let v = desugar(v)?;
    let question = v.get("question").and_then(Value::as_str).ok_or_else(|| ParseError::Ast("missing question".into()))?;
    let keywords: Vec<String> = serde_json::from_value(v.get("keywords").cloned().unwrap_or(Value::Null))
        .map_err(|_| ParseError::Ast("keywords must be a list of strings".into()))?;
    let branches = v
        .get("branches")
        .and_then(Value::as_array)
        .ok_or_else(|| ParseError::Ast("missing branches".into()))?;
    if branches.is_empty() {
        return err("program has no branches");
    }
    let mut out = Vec::with_capacity(branches.len());
    for b in branches {
        let g = b.get("guard").ok_or_else(|| ParseError::Ast("branch without guard".into()))?;
        let e = b.get("extractor").ok_or_else(|| ParseError::Ast("branch without extractor".into()))?;
        out.push(Branch::new(parse_guard(g)?, parse_extractor(e)?));
    }
    let ctx = TaskContext { question: question.to_string(), keywords };
    ctx.validate().map_err(|e| ParseError::Ast(e.to_string()))?;
    Ok(Program::new(ctx, out))
}

pub fn parse_program(s: &str) -> Result<Program, ParseError> {
    program_from_value(&serde_json::from_str(s)?)
}
