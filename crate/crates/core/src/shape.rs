//! Symbolic tensor-shape signatures and their unification.
//!
//! The mini-language is deliberately tiny:
//!
//! ```text
//! get_outputs(ray_bundle[R]) -> {rgb:[R,3], depth:[R,1]}
//! get_density(positions[R,S,3]) -> [R,S,1]
//! ```
//!
//! Uppercase identifiers are symbolic dims, positive integers are literal
//! dims, and `{name:dims, ...}` describes a multi-output result.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dim {
    Sym(String),
    Lit(u64),
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Sym(s) => f.write_str(s),
            Dim::Lit(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShapeResult {
    Tensor(Vec<Dim>),
    /// Named outputs, kept in declaration order.
    Named(Vec<(String, Vec<Dim>)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeSignature {
    pub name: String,
    pub params: Vec<(String, Vec<Dim>)>,
    pub result: ShapeResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad shape signature `{input}`: {reason}")]
pub struct ShapeParseError {
    pub input: String,
    pub reason: String,
}

fn write_dims(f: &mut fmt::Formatter<'_>, dims: &[Dim]) -> fmt::Result {
    f.write_str("[")?;
    for (i, d) in dims.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{d}")?;
    }
    f.write_str("]")
}

impl fmt::Display for ShapeSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, (name, dims)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(name)?;
            write_dims(f, dims)?;
        }
        f.write_str(") -> ")?;
        match &self.result {
            ShapeResult::Tensor(dims) => write_dims(f, dims),
            ShapeResult::Named(outs) => {
                f.write_str("{")?;
                for (i, (name, dims)) in outs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{name}:")?;
                    write_dims(f, dims)?;
                }
                f.write_str("}")
            }
        }
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, expected: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(expected) {
            self.pos += expected.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let first = rest.chars().next()?;
        if !(first.is_ascii_alphabetic() || first == '_') {
            return None;
        }
        let len = rest
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
            .count();
        self.pos += len;
        Some(&rest[..len])
    }

    fn number(&mut self) -> Option<u64> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest.chars().take_while(|c| c.is_ascii_digit()).count();
        if len == 0 {
            return None;
        }
        self.pos += len;
        rest[..len].parse().ok()
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }
}

fn is_symbolic(ident: &str) -> bool {
    let mut chars = ident.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Parse a bracketed dim vector such as `[R,S,3]`.
pub fn parse_dims(text: &str) -> Result<Vec<Dim>, ShapeParseError> {
    let mut cur = Cursor { src: text, pos: 0 };
    let dims = dims(&mut cur, text)?;
    if !cur.at_end() {
        return Err(err(text, "trailing input after dims"));
    }
    Ok(dims)
}

fn err(input: &str, reason: &str) -> ShapeParseError {
    ShapeParseError {
        input: input.to_string(),
        reason: reason.to_string(),
    }
}

fn dims(cur: &mut Cursor<'_>, input: &str) -> Result<Vec<Dim>, ShapeParseError> {
    if !cur.eat("[") {
        return Err(err(input, "expected `[`"));
    }
    let mut out = Vec::new();
    if cur.eat("]") {
        return Ok(out);
    }
    loop {
        if let Some(n) = cur.number() {
            if n == 0 {
                return Err(err(input, "literal dims must be positive"));
            }
            out.push(Dim::Lit(n));
        } else if let Some(id) = cur.ident() {
            if !is_symbolic(id) {
                return Err(err(input, &format!("symbolic dim `{id}` must be uppercase")));
            }
            out.push(Dim::Sym(id.to_string()));
        } else {
            return Err(err(input, "expected a dim"));
        }
        if cur.eat("]") {
            return Ok(out);
        }
        if !cur.eat(",") {
            return Err(err(input, "expected `,` or `]`"));
        }
    }
}

impl FromStr for ShapeSignature {
    type Err = ShapeParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor { src: text, pos: 0 };
        let name = cur
            .ident()
            .ok_or_else(|| err(text, "expected export name"))?
            .to_string();
        if !cur.eat("(") {
            return Err(err(text, "expected `(`"));
        }
        let mut params = Vec::new();
        if !cur.eat(")") {
            loop {
                let pname = cur
                    .ident()
                    .ok_or_else(|| err(text, "expected parameter name"))?
                    .to_string();
                params.push((pname, dims(&mut cur, text)?));
                if cur.eat(")") {
                    break;
                }
                if !cur.eat(",") {
                    return Err(err(text, "expected `,` or `)`"));
                }
            }
        }
        if !cur.eat("->") {
            return Err(err(text, "expected `->`"));
        }
        let result = match cur.peek() {
            Some('[') => ShapeResult::Tensor(dims(&mut cur, text)?),
            Some('{') => {
                cur.eat("{");
                let mut outs: Vec<(String, Vec<Dim>)> = Vec::new();
                loop {
                    let oname = cur
                        .ident()
                        .ok_or_else(|| err(text, "expected output name"))?
                        .to_string();
                    if !cur.eat(":") {
                        return Err(err(text, "expected `:` after output name"));
                    }
                    if outs.iter().any(|(n, _)| *n == oname) {
                        return Err(err(text, &format!("duplicate output `{oname}`")));
                    }
                    outs.push((oname, dims(&mut cur, text)?));
                    if cur.eat("}") {
                        break;
                    }
                    if !cur.eat(",") {
                        return Err(err(text, "expected `,` or `}`"));
                    }
                }
                ShapeResult::Named(outs)
            }
            _ => return Err(err(text, "expected result dims")),
        };
        if !cur.at_end() {
            return Err(err(text, "trailing input"));
        }
        Ok(ShapeSignature {
            name,
            params,
            result,
        })
    }
}

impl Serialize for ShapeSignature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ShapeSignature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Binding of the declared signature's symbolic dims to what was found.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Unifier {
    pub bindings: BTreeMap<String, String>,
}

/// First conflicting position between two signatures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    /// `param 1`, `result`, `result.rgb`, ...
    pub slot: String,
    /// 1-based dim position; 0 when the conflict is structural (arity, rank, keys).
    pub dim: usize,
    pub reason: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim > 0 {
            write!(f, "{} dim {}: {}", self.slot, self.dim, self.reason)
        } else {
            write!(f, "{}: {}", self.slot, self.reason)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Side {
    Declared,
    Found,
}

/// Union-find over the symbolic dims of both sides. Each side's symbols live in
/// their own namespace, so `R` on the left and `R` on the right are distinct
/// variables that may be unified with each other.
#[derive(Default)]
struct Subst {
    parent: BTreeMap<(Side, String), (Side, String)>,
    value: BTreeMap<(Side, String), u64>,
}

enum Term {
    Var((Side, String)),
    Lit(u64),
}

impl Subst {
    fn find(&mut self, v: &(Side, String)) -> (Side, String) {
        let p = self.parent.get(v).cloned();
        match p {
            Some(p) if p != *v => {
                let root = self.find(&p);
                self.parent.insert(v.clone(), root.clone());
                root
            }
            _ => v.clone(),
        }
    }

    fn resolve(&mut self, side: Side, d: &Dim) -> Term {
        match d {
            Dim::Lit(n) => Term::Lit(*n),
            Dim::Sym(s) => {
                let root = self.find(&(side, s.clone()));
                match self.value.get(&root) {
                    Some(n) => Term::Lit(*n),
                    None => Term::Var(root),
                }
            }
        }
    }

    fn unify(&mut self, a: &Dim, b: &Dim) -> Result<(), String> {
        match (self.resolve(Side::Declared, a), self.resolve(Side::Found, b)) {
            (Term::Lit(x), Term::Lit(y)) => {
                if x == y {
                    Ok(())
                } else {
                    Err(format!("{a} (= {x}) vs {b} (= {y})"))
                }
            }
            (Term::Var(v), Term::Lit(n)) | (Term::Lit(n), Term::Var(v)) => {
                self.value.insert(v, n);
                Ok(())
            }
            (Term::Var(x), Term::Var(y)) => {
                if x != y {
                    // Keep the found-side root when possible so bindings read
                    // declared -> found.
                    let (child, root) = if x.0 == Side::Declared { (x, y) } else { (y, x) };
                    self.parent.insert(child, root);
                }
                Ok(())
            }
        }
    }
}

fn unify_slot(
    subst: &mut Subst,
    slot: &str,
    declared: &[Dim],
    found: &[Dim],
) -> Result<(), Mismatch> {
    if declared.len() != found.len() {
        return Err(Mismatch {
            slot: slot.to_string(),
            dim: 0,
            reason: format!("rank {} vs {}", declared.len(), found.len()),
        });
    }
    for (i, (a, b)) in declared.iter().zip(found).enumerate() {
        subst.unify(a, b).map_err(|reason| Mismatch {
            slot: slot.to_string(),
            dim: i + 1,
            reason,
        })?;
    }
    Ok(())
}

/// Unify two dim vectors, e.g. `[R,3]` against `[512,3]`.
pub fn unify_dims(declared: &[Dim], found: &[Dim]) -> Result<Unifier, Mismatch> {
    let mut subst = Subst::default();
    unify_slot(&mut subst, "dims", declared, found)?;
    Ok(bindings(&mut subst, declared.iter()))
}

fn bindings<'a>(subst: &mut Subst, dims: impl Iterator<Item = &'a Dim>) -> Unifier {
    let mut out = Unifier::default();
    for d in dims {
        if let Dim::Sym(s) = d {
            if out.bindings.contains_key(s) {
                continue;
            }
            let shown = match subst.resolve(Side::Declared, d) {
                Term::Lit(n) => n.to_string(),
                Term::Var((_, name)) => name,
            };
            out.bindings.insert(s.clone(), shown);
        }
    }
    out
}

/// Find a binding of symbolic dims that makes `declared` and `found` equal,
/// or report the first conflicting position. Parameter names are not
/// compared; parameters match by position and named outputs by key.
pub fn unify_shapes(declared: &ShapeSignature, found: &ShapeSignature) -> Result<Unifier, Mismatch> {
    let mut subst = Subst::default();
    if declared.params.len() != found.params.len() {
        return Err(Mismatch {
            slot: "params".into(),
            dim: 0,
            reason: format!("arity {} vs {}", declared.params.len(), found.params.len()),
        });
    }
    for (i, ((_, a), (_, b))) in declared.params.iter().zip(&found.params).enumerate() {
        unify_slot(&mut subst, &format!("param {}", i + 1), a, b)?;
    }
    match (&declared.result, &found.result) {
        (ShapeResult::Tensor(a), ShapeResult::Tensor(b)) => unify_slot(&mut subst, "result", a, b)?,
        (ShapeResult::Named(a), ShapeResult::Named(b)) => {
            let a_keys: Vec<&String> = {
                let mut k: Vec<_> = a.iter().map(|(n, _)| n).collect();
                k.sort();
                k
            };
            let b_keys: Vec<&String> = {
                let mut k: Vec<_> = b.iter().map(|(n, _)| n).collect();
                k.sort();
                k
            };
            if a_keys != b_keys {
                return Err(Mismatch {
                    slot: "result".into(),
                    dim: 0,
                    reason: format!("outputs {a_keys:?} vs {b_keys:?}"),
                });
            }
            for (name, dims) in a {
                let other = &b.iter().find(|(n, _)| n == name).expect("keys checked").1;
                unify_slot(&mut subst, &format!("result.{name}"), dims, other)?;
            }
        }
        _ => {
            return Err(Mismatch {
                slot: "result".into(),
                dim: 0,
                reason: "tensor vs named outputs".into(),
            })
        }
    }
    let all_dims = declared
        .params
        .iter()
        .flat_map(|(_, d)| d.iter())
        .chain(match &declared.result {
            ShapeResult::Tensor(d) => Box::new(d.iter()) as Box<dyn Iterator<Item = &Dim>>,
            ShapeResult::Named(outs) => Box::new(outs.iter().flat_map(|(_, d)| d.iter())),
        })
        .collect::<Vec<_>>();
    Ok(bindings(&mut subst, all_dims.into_iter()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(s: &str) -> ShapeSignature {
        s.parse().unwrap()
    }

    fn dims(s: &str) -> Vec<Dim> {
        parse_dims(s).unwrap()
    }

    #[test]
    fn identity_binds_symbol_to_itself() {
        let u = unify_dims(&dims("[R,3]"), &dims("[R,3]")).unwrap();
        assert_eq!(u.bindings.get("R").map(String::as_str), Some("R"));
    }

    #[test]
    fn literal_binding_is_forced() {
        let u = unify_dims(&dims("[R,3]"), &dims("[512,3]")).unwrap();
        assert_eq!(u.bindings.get("R").map(String::as_str), Some("512"));
    }

    #[test]
    fn conflicting_literal_reports_second_dim() {
        let m = unify_dims(&dims("[R,3]"), &dims("[N,4]")).unwrap_err();
        assert_eq!(m.dim, 2);
    }

    #[test]
    fn repeated_symbol_must_bind_consistently() {
        let m = unify_dims(&dims("[R,R]"), &dims("[2,3]")).unwrap_err();
        assert_eq!(m.dim, 2);
        assert!(unify_dims(&dims("[R,R]"), &dims("[N,N]")).is_ok());
    }

    #[test]
    fn named_outputs_round_trip_and_unify() {
        let a = sig("get_outputs(ray_bundle[R]) -> {rgb:[R,3], depth:[R,1]}");
        assert_eq!(a.to_string().parse::<ShapeSignature>().unwrap(), a);
        let b = sig("get_outputs(rays[N]) -> {depth:[N,1], rgb:[N,3]}");
        let u = unify_shapes(&a, &b).unwrap();
        assert_eq!(u.bindings["R"], "N");
        let c = sig("get_outputs(rays[N]) -> {rgb:[N,4], depth:[N,1]}");
        let m = unify_shapes(&a, &c).unwrap_err();
        assert_eq!((m.slot.as_str(), m.dim), ("result.rgb", 2));
    }

    #[test]
    fn parse_rejects_lowercase_and_zero_dims() {
        assert!(parse_dims("[r,3]").is_err());
        assert!(parse_dims("[R,0]").is_err());
        assert!("f(x[R]) [R]".parse::<ShapeSignature>().is_err());
    }

    #[test]
    fn symbols_bind_across_slots() {
        let a = sig("get_density(positions[R,S,3]) -> [R,S,1]");
        assert!(unify_shapes(&a, &sig("get_density(p[4096,48,3]) -> [4096,48,1]")).is_ok());
        let m = unify_shapes(&a, &sig("get_density(p[4096,48,3]) -> [4096,32,1]")).unwrap_err();
        assert_eq!((m.slot.as_str(), m.dim), ("result", 2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dim() -> impl Strategy<Value = Dim> {
            prop_oneof![
                (1u64..5).prop_map(Dim::Lit),
                prop::sample::select(vec!["R", "S", "N"]).prop_map(|s| Dim::Sym(s.into())),
            ]
        }

        proptest! {
            #[test]
            fn unify_is_symmetric_in_outcome(a in prop::collection::vec(dim(), 0..4),
                                             b in prop::collection::vec(dim(), 0..4)) {
                prop_assert_eq!(unify_dims(&a, &b).is_ok(), unify_dims(&b, &a).is_ok());
            }
        }
    }
}
