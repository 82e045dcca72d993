use std::fmt::{self, Write as _};

/// Argument value forms accepted by the grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    /// `["a", "b"]`
    StringList(Vec<String>),
    /// A bare identifier.
    VarRef(String),
    /// `{A, B}`
    VarSet(Vec<String>),
    /// `[A, B]`, accepted wherever a set of variables is.
    VarList(Vec<String>),
    /// `"text"` or `'text'`
    StringLit(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Call {
    pub func: String,
    /// Keyword arguments in source order; keys are unique.
    pub kwargs: Vec<(String, Value)>,
    /// A sole positional argument, as in `SET_TARGET(X)`.
    pub positional: Option<Value>,
}

impl Call {
    pub fn kwarg(&self, name: &str) -> Option<&Value> {
        self.kwargs.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Assign { var: String, call: Call },
    BareCall(Call),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramStmt {
    pub kind: StmtKind,
    pub line: usize,
    pub col: usize,
}

impl ProgramStmt {
    pub fn call(&self) -> &Call {
        match &self.kind {
            StmtKind::Assign { call, .. } | StmtKind::BareCall(call) => call,
        }
    }

    pub fn assigned_name(&self) -> Option<&str> {
        match &self.kind {
            StmtKind::Assign { var, .. } => Some(var),
            StmtKind::BareCall(_) => None,
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::StringList(items) => {
                let parts: Vec<String> = items.iter().map(|s| quote(s)).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Value::VarRef(name) => f.write_str(name),
            Value::VarSet(names) => write!(f, "{{{}}}", names.join(", ")),
            Value::VarList(names) => write!(f, "[{}]", names.join(", ")),
            Value::StringLit(s) => f.write_str(&quote(s)),
        }
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.func)?;
        if let Some(v) = &self.positional {
            write!(f, "{v}")?;
        }
        for (i, (k, v)) in self.kwargs.iter().enumerate() {
            if i > 0 || self.positional.is_some() {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_char(')')
    }
}

impl fmt::Display for ProgramStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            StmtKind::Assign { var, call } => write!(f, "{var} = {call}"),
            StmtKind::BareCall(call) => write!(f, "{call}"),
        }
    }
}

/// Renders statements back to program text, one per line.
pub fn render(stmts: &[ProgramStmt]) -> String {
    stmts.iter().map(|s| format!("{s}\n")).collect()
}
