use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::matrix_core::ComplexMatrix;

/// Report tree with a canonical serialization: sorted keys, floats printed
/// with 17 significant digits, non-finite floats as strings, LF line endings.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Node>),
    Map(BTreeMap<String, Node>),
}

impl From<bool> for Node {
    fn from(v: bool) -> Self {
        Node::Bool(v)
    }
}

impl From<f64> for Node {
    fn from(v: f64) -> Self {
        Node::Float(v)
    }
}

impl From<usize> for Node {
    fn from(v: usize) -> Self {
        Node::Int(v as i64)
    }
}

impl From<u64> for Node {
    fn from(v: u64) -> Self {
        Node::Int(v as i64)
    }
}

impl From<&str> for Node {
    fn from(v: &str) -> Self {
        Node::Str(v.to_string())
    }
}

impl From<String> for Node {
    fn from(v: String) -> Self {
        Node::Str(v)
    }
}

impl From<Complex64> for Node {
    fn from(v: Complex64) -> Self {
        Node::List(vec![v.re.into(), v.im.into()])
    }
}

impl<T: Into<Node>> From<Vec<T>> for Node {
    fn from(v: Vec<T>) -> Self {
        Node::List(v.into_iter().map(Into::into).collect())
    }
}

impl<T: Into<Node>> From<Option<T>> for Node {
    fn from(v: Option<T>) -> Self {
        v.map_or(Node::Null, Into::into)
    }
}

impl From<&ComplexMatrix> for Node {
    fn from(m: &ComplexMatrix) -> Self {
        let mut map = BTreeMap::new();
        map.insert("n".into(), m.dim().into());
        map.insert(
            "entries".into(),
            Node::List(m.entries().iter().map(|&z| z.into()).collect()),
        );
        Node::Map(map)
    }
}

/// Builder for `Node::Map`.
#[derive(Debug, Clone, Default)]
pub struct Obj(BTreeMap<String, Node>);

impl Obj {
    pub fn new() -> Self {
        Obj::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<Node>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn set(&mut self, key: &str, value: impl Into<Node>) {
        self.0.insert(key.to_string(), value.into());
    }
}

impl From<Obj> for Node {
    fn from(o: Obj) -> Self {
        Node::Map(o.0)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "\"NaN\"".into()
    } else if v.is_infinite() {
        if v > 0.0 { "\"inf\"".into() } else { "\"-inf\"".into() }
    } else {
        format!("{:.16e}", v)
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn write_node(out: &mut String, node: &Node, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match node {
        Node::Null => out.push_str("null"),
        Node::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Node::Int(i) => write!(out, "{}", i).expect("write to string"),
        Node::Float(f) => out.push_str(&format_float(*f)),
        Node::Str(s) => out.push_str(&quote(s)),
        Node::List(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            if items.iter().all(|n| !matches!(n, Node::List(_) | Node::Map(_))) {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_node(out, item, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_node(out, item, indent + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Node::Map(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, value)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&quote(key));
                out.push_str(": ");
                write_node(out, value, indent + 1);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

pub fn to_canonical_json(node: &Node) -> String {
    let mut out = String::new();
    write_node(&mut out, node, 0);
    out.push('\n');
    out
}

/// One property verdict with its measurement and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub relation: &'static str,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            threshold,
            relation: "<=",
            pass: measured <= threshold,
        }
    }

    pub fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            threshold,
            relation: ">=",
            pass: measured >= threshold,
        }
    }

    /// Boolean outcome reported as `1 >= 1` or `0 >= 1`.
    pub fn holds(name: &str, ok: bool) -> Self {
        Check::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

impl From<&Check> for Node {
    fn from(c: &Check) -> Self {
        Obj::new()
            .with("name", c.name.as_str())
            .with("measured", c.measured)
            .with("threshold", c.threshold)
            .with("relation", c.relation)
            .with("pass", c.pass)
            .into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub inputs: Node,
    pub results: Node,
    pub checks: Vec<Check>,
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            2
        }
    }

    pub fn to_node(&self) -> Node {
        let mut o = Obj::new()
            .with("command", self.command.as_str())
            .with("seed", self.seed)
            .with("version", env!("CARGO_PKG_VERSION"))
            .with("inputs", self.inputs.clone())
            .with("results", self.results.clone())
            .with("checks", Node::List(self.checks.iter().map(Node::from).collect()))
            .with("all_passed", self.all_passed())
            .with("exit_code", Node::Int(self.exit_code() as i64));
        if let Some(t) = &self.timings_ms {
            o.set(
                "timings_ms",
                Node::Map(t.iter().map(|(k, v)| (k.clone(), Node::Float(*v))).collect()),
            );
        }
        o.into()
    }
}
