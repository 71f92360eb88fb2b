//! Built-in library of named Hamiltonians, generating functions, and
//! symplectomorphism families used by the experiment runner and the test
//! suites. Every entry carries a parsable expression source, so configs
//! can reference entries by name or inline equivalent expressions.

use thiserror::Error;

use crate::gfqi::{Gfqi, GfqiError, QuadraticForm};
use crate::hamlang::{Dims, Expression, HamlangError, Smoothness};
use crate::phase::{Domain, PhaseError, ScalarField};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("expression error: {0}")]
    Expression(#[from] HamlangError),
    #[error("phase error: {0}")]
    Phase(#[from] PhaseError),
    #[error("generating-function error: {0}")]
    Gfqi(#[from] GfqiError),
}

/// 2*pi to full precision, written out so generated sources stay exact.
pub const TWO_PI_LITERAL: &str = "6.283185307179586";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    /// A Hamiltonian on standard phase space.
    Hamiltonian,
    /// A fiberless generating function on the torus (position variables
    /// only, 1-periodic), optionally stabilized with a fiber quadratic.
    GeneratingFunction,
    /// A one-parameter family of symplectic maps indexed by `n >= 1`;
    /// `source` is the member at `n = 1` and `member_source(n)` the rest.
    SymplectomorphismFamily,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub kind: EntryKind,
    /// Number of position variables.
    pub d: usize,
    /// Fiber variables (generating functions only).
    pub k: usize,
    pub smoothness: Smoothness,
    source: String,
}

impl CatalogEntry {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dims(&self) -> Dims {
        Dims { d: self.d, k: self.k }
    }

    /// Parse the entry's expression (family entries parse their n = 1
    /// member). Smoothness downgrades (like the C^{1,1} flag on sources
    /// the parser only sees as Lipschitz) are applied here.
    pub fn expression(&self) -> Result<Expression, HamlangError> {
        let e = Expression::parse(&self.source, self.dims())?;
        Ok(match self.smoothness {
            Smoothness::C11 => e.flagged(Smoothness::C11),
            _ => e,
        })
    }

    /// The entry as a scalar field on phase space (Hamiltonian entries).
    pub fn scalar_field(&self) -> Result<ScalarField, CatalogError> {
        let e = self.expression()?;
        let domain = Domain::Full { dim: 2 * self.d };
        let f = ScalarField::from_expression(e, domain)?;
        Ok(match self.smoothness {
            Smoothness::C11 => f.with_smoothness(Smoothness::C11),
            _ => f,
        })
    }

    /// The entry as a generating function quadratic at infinity
    /// (generating-function entries; applies the declared stabilization).
    pub fn gfqi(&self) -> Result<Gfqi, CatalogError> {
        let base_dims = Dims { d: self.d, k: 0 };
        // the stored source is the base alone; the declared fiber count
        // selects the stabilizing quadratic
        let e = Expression::parse(&self.source, base_dims)?;
        let g = Gfqi::from_base_function(&e)?;
        if self.k == 0 {
            Ok(g)
        } else {
            let signs: Vec<f64> = (0..self.k)
                .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect();
            Ok(g.stabilize(&QuadraticForm::diagonal(&signs)?))
        }
    }

    /// The family member at index `n` (symplectomorphism families only).
    pub fn member_source(&self, n: usize) -> String {
        assert!(n >= 1);
        match self.name {
            "shear-family" => shear_source(n),
            "flow-family" => flow_source(n),
            _ => self.source.clone(),
        }
    }
}

fn shear_source(n: usize) -> String {
    let tpn = std::f64::consts::TAU * n as f64;
    format!("q1 + sin({:?} * p1) / {:?} * bump(p1)", tpn, tpn * tpn)
}

fn flow_source(n: usize) -> String {
    format!("(cos(q1) * bump(p1 / 2)) / {}", n)
}

/// All built-in entries, in listing order.
pub fn entries() -> Vec<CatalogEntry> {
    let e = |name, description, kind, d, k, smoothness, source: &str| CatalogEntry {
        name,
        description,
        kind,
        d,
        k,
        smoothness,
        source: source.to_string(),
    };
    use EntryKind::*;
    use Smoothness::*;
    vec![
        e(
            "free",
            "free particle, kinetic energy only",
            Hamiltonian,
            1,
            0,
            Smooth,
            "p1^2 / 2",
        ),
        e(
            "harmonic",
            "harmonic oscillator",
            Hamiltonian,
            1,
            0,
            Smooth,
            "(q1^2 + p1^2) / 2",
        ),
        e(
            "pendulum",
            "planar pendulum",
            Hamiltonian,
            1,
            0,
            Smooth,
            "p1^2 / 2 - cos(q1)",
        ),
        e(
            "pendulum-bump",
            "pendulum energy cut off smoothly outside a box",
            Hamiltonian,
            1,
            0,
            Smooth,
            "(p1^2 / 2 - cos(q1)) * bump(q1 / 4) * bump(p1 / 4)",
        ),
        e(
            "angular",
            "commuting partner of the harmonic oscillator in two degrees",
            Hamiltonian,
            2,
            0,
            Smooth,
            "q1 * p2 - q2 * p1",
        ),
        e(
            "c11-qabsq",
            "once differentiable with Lipschitz derivative, second derivative jumps at q1 = 0",
            Hamiltonian,
            1,
            0,
            C11,
            "q1 * abs(q1) / 2",
        ),
        e(
            "c11-pair",
            "kinetic partner for the C^{1,1} bracket example, compactly supported",
            Hamiltonian,
            1,
            0,
            C11,
            "p1^2 / 2 * bump(q1 / 2) * bump(p1 / 2)",
        ),
        e(
            "kink",
            "Lipschitz but not differentiable at q1 = 0",
            Hamiltonian,
            1,
            0,
            C0Lipschitz,
            "abs(q1)",
        ),
        e(
            "kink-bump",
            "compactly supported Lipschitz kink",
            Hamiltonian,
            1,
            0,
            C0Lipschitz,
            "abs(q1) * bump(q1 / 2) * bump(p1 / 2)",
        ),
        e(
            "cosine-gf",
            "fiberless generating function a cos(2 pi q) on the circle",
            GeneratingFunction,
            1,
            0,
            Smooth,
            &format!("0.5 * cos({} * q1)", TWO_PI_LITERAL),
        ),
        e(
            "torus2-gf",
            "sum of cosines on the two-torus",
            GeneratingFunction,
            2,
            0,
            Smooth,
            &format!(
                "0.5 * cos({tp} * q1) + 0.25 * cos({tp} * q2)",
                tp = TWO_PI_LITERAL
            ),
        ),
        e(
            "cosine-gf-stab2",
            "cosine generating function stabilized by a signature-(1,1) fiber quadratic",
            GeneratingFunction,
            1,
            2,
            Smooth,
            &format!("0.5 * cos({} * q1)", TWO_PI_LITERAL),
        ),
        e(
            "shear-family",
            "exactly symplectic shears (q + sin(2 pi n p)/(2 pi n)^2 bump(p), p) converging uniformly to the identity",
            SymplectomorphismFamily,
            1,
            0,
            Smooth,
            &shear_source(1),
        ),
        e(
            "flow-family",
            "Hamiltonians H/n whose time-1 flows converge uniformly to the identity",
            SymplectomorphismFamily,
            1,
            0,
            Smooth,
            &flow_source(1),
        ),
    ]
}

/// Entry lookup by name.
pub fn lookup(name: &str) -> Option<CatalogEntry> {
    entries().into_iter().find(|e| e.name == name)
}

/// Human-readable listing for the command line.
pub fn list_catalog() -> String {
    let mut out = String::new();
    for e in entries() {
        let kind = match e.kind {
            EntryKind::Hamiltonian => "hamiltonian",
            EntryKind::GeneratingFunction => "generating-function",
            EntryKind::SymplectomorphismFamily => "family",
        };
        let smooth = match e.smoothness {
            Smoothness::Smooth => "smooth",
            Smoothness::C11 => "C^{1,1}",
            Smoothness::C0Lipschitz => "Lipschitz",
        };
        out.push_str(&format!(
            "{:<18} {:<20} {:<10} d={} k={}  {}\n    {}\n",
            e.name, kind, smooth, e.d, e.k, e.description, e.source
        ));
    }
    out
}

/// Names of the smooth Hamiltonian entries (used by bracket sweeps).
pub fn smooth_hamiltonians() -> Vec<CatalogEntry> {
    entries()
        .into_iter()
        .filter(|e| e.kind == EntryKind::Hamiltonian && e.smoothness == Smoothness::Smooth)
        .collect()
}
