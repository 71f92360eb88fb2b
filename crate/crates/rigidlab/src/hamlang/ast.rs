use std::fmt;

/// Variable slots in the fixed layout `q1..qd, p1..pd, xi1..xik, t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Base coordinate `q{i+1}`.
    Q(usize),
    /// Momentum coordinate `p{i+1}`.
    P(usize),
    /// Fiber coordinate `xi{i+1}`.
    Xi(usize),
    /// Time parameter.
    T,
}

/// Built-in functions of the expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Min,
    Max,
    Sqrt,
    Tanh,
    Bump,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Bump => "bump",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "bump" => Func::Bump,
            _ => return None,
        })
    }
}

/// Abstract syntax tree of a parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    /// Integer power of a base, per the grammar `factor := base ("^" integer)?`.
    Pow(Box<Node>, i32),
    Neg(Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    /// Depth of the tree (a leaf has depth 1).
    pub fn depth(&self) -> usize {
        match self {
            Node::Num(_) | Node::Var(_) => 1,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
            Node::Pow(a, _) | Node::Neg(a) => 1 + a.depth(),
            Node::Call(_, args) => 1 + args.iter().map(Node::depth).max().unwrap_or(0),
        }
    }

    /// True when the subtree contains `abs`, `min` or `max`.
    pub fn has_kink_ops(&self) -> bool {
        match self {
            Node::Num(_) | Node::Var(_) => false,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.has_kink_ops() || b.has_kink_ops()
            }
            Node::Pow(a, _) | Node::Neg(a) => a.has_kink_ops(),
            Node::Call(f, args) => {
                matches!(f, Func::Abs | Func::Min | Func::Max)
                    || args.iter().any(Node::has_kink_ops)
            }
        }
    }

    pub fn references(&self, pred: &mut dyn FnMut(Var) -> bool) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(v) => pred(*v),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.references(pred) || b.references(pred)
            }
            Node::Pow(a, _) | Node::Neg(a) => a.references(pred),
            Node::Call(_, args) => args.iter().any(|a| a.references(pred)),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Q(i) => write!(f, "q{}", i + 1),
            Var::P(i) => write!(f, "p{}", i + 1),
            Var::Xi(i) => write!(f, "xi{}", i + 1),
            Var::T => write!(f, "t"),
        }
    }
}

// Canonical printed form: fully parenthesized compounds, so that
// re-parsing reproduces the tree structurally.
impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(x) => write!(f, "{}", x),
            Node::Var(v) => write!(f, "{}", v),
            Node::Add(a, b) => write!(f, "({} + {})", a, b),
            Node::Sub(a, b) => write!(f, "({} - {})", a, b),
            Node::Mul(a, b) => write!(f, "({} * {})", a, b),
            Node::Div(a, b) => write!(f, "({} / {})", a, b),
            Node::Pow(a, n) => write!(f, "{}^{}", a, n),
            // Parenthesized so that `-a^n` round-trips with the same tree:
            // the grammar binds `^` outside unary minus.
            Node::Neg(a) => write!(f, "-({})", a),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", a)?;
                }
                write!(f, ")")
            }
        }
    }
}
