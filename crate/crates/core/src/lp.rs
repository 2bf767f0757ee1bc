//! Canonical sparse LP with dual-tagged constraints.
//!
//! Every constraint row carries a structured dual tag so that the KKT
//! derivation can name multipliers after the market families (lambda, rho,
//! mu, phi, nu, carbon price). Simple bounds that carry their own multiplier
//! families are stored as explicit rows, not variable bounds.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::Error;
use crate::Result;

/// Structured name of a variable or dual multiplier: family, entity, time.
///
/// Examples: `P_G[G2,7]`, `lambda[3,12]`, `rho1_max[G1,1]`, `p_co2[,2]`
/// (entity empty for per-period symbols).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub family: String,
    pub entity: String,
    pub t: usize,
}

impl Symbol {
    pub fn new(family: impl Into<String>, entity: impl Into<String>, t: usize) -> Self {
        Symbol { family: family.into(), entity: entity.into(), t }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}]", self.family, self.entity, self.t)
    }
}

/// Stable handle to a variable within one program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// Stable handle to a constraint row (and thus to its dual tag).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub usize);

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: Symbol,
    pub lower: f64,
    pub upper: f64,
    pub obj: f64,
}

/// Constraint direction. Builders normalize market inequalities to `Ge`
/// so one sign convention covers the whole KKT derivation; `Le` is still
/// accepted and flipped during derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub dual: Symbol,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }
}

/// A minimization LP over named variables with dual-tagged rows.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    /// Market id or other provenance label.
    pub market: String,
    vars: Vec<Variable>,
    rows: Vec<Row>,
    var_index: BTreeMap<Symbol, VarId>,
    dual_index: BTreeMap<Symbol, RowId>,
    /// Constant added to the linear objective.
    pub objective_constant: f64,
}

impl LinearProgram {
    pub fn new(market: impl Into<String>) -> Self {
        LinearProgram { market: market.into(), ..Default::default() }
    }

    /// Append a variable; the name must be unused.
    pub fn add_variable(
        &mut self,
        name: Symbol,
        bounds: (f64, f64),
        obj: f64,
    ) -> Result<VarId> {
        if bounds.0 > bounds.1 {
            return Err(Error::model(format!("variable {name}: lower bound exceeds upper")));
        }
        if !obj.is_finite() {
            return Err(Error::model(format!("variable {name}: non-finite objective coefficient")));
        }
        if self.var_index.contains_key(&name) {
            return Err(Error::model(format!("duplicate variable name {name}")));
        }
        let id = VarId(self.vars.len());
        self.var_index.insert(name.clone(), id);
        self.vars.push(Variable { name, lower: bounds.0, upper: bounds.1, obj });
        Ok(id)
    }

    /// Append a constraint row; the dual tag must be unused and every term
    /// must reference a declared variable exactly once.
    pub fn add_row(
        &mut self,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        dual: Symbol,
    ) -> Result<RowId> {
        if self.dual_index.contains_key(&dual) {
            return Err(Error::model(format!("duplicate dual tag {dual}")));
        }
        let mut seen = BTreeMap::new();
        for (v, _) in &terms {
            if v.0 >= self.vars.len() {
                return Err(Error::model(format!("row {dual}: unknown variable id {}", v.0)));
            }
            if seen.insert(*v, ()).is_some() {
                return Err(Error::model(format!(
                    "row {dual}: variable {} appears twice",
                    self.vars[v.0].name
                )));
            }
        }
        let id = RowId(self.rows.len());
        self.dual_index.insert(dual.clone(), id);
        self.rows.push(Row { terms, sense, rhs, dual });
        Ok(id)
    }

    pub fn var(&self, name: &Symbol) -> Option<VarId> {
        self.var_index.get(name).copied()
    }

    pub fn dual(&self, name: &Symbol) -> Option<RowId> {
        self.dual_index.get(name).copied()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn row(&self, id: RowId) -> &Row {
        &self.rows[id.0]
    }

    /// Objective value of an assignment given as a dense vector by `VarId`.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant
            + self.vars.iter().zip(values).map(|(v, x)| v.obj * x).sum::<f64>()
    }

    /// Turn a by-name assignment into a dense vector, requiring every
    /// variable to be present.
    pub fn dense_assignment(&self, by_name: &BTreeMap<Symbol, f64>) -> Result<Vec<f64>> {
        self.vars
            .iter()
            .map(|v| {
                by_name
                    .get(&v.name)
                    .copied()
                    .ok_or_else(|| Error::model(format!("assignment missing variable {}", v.name)))
            })
            .collect()
    }

    /// Signed residual of every row at an assignment, plus the objective.
    ///
    /// Equality rows report `activity - rhs`. Inequality rows report the
    /// violation (positive for an exceeded `<=` row, negative for an
    /// undershot `>=` row) and zero when satisfied.
    pub fn primal_residuals(&self, by_name: &BTreeMap<Symbol, f64>) -> Result<ResidualReport> {
        let values = self.dense_assignment(by_name)?;
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let activity = row.activity(&values);
                let residual = match row.sense {
                    Sense::Eq => activity - row.rhs,
                    Sense::Le => (activity - row.rhs).max(0.0),
                    Sense::Ge => (activity - row.rhs).min(0.0),
                };
                (row.dual.clone(), residual)
            })
            .collect();
        Ok(ResidualReport { rows, objective: self.objective_value(&values) })
    }

    /// Human-readable dump, one variable or constraint per line.
    pub fn dump(&self) -> String {
        use fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "minimize ({})", self.market);
        let terms: Vec<String> = self
            .vars
            .iter()
            .filter(|v| v.obj != 0.0)
            .map(|v| format!("{:+} {}", v.obj, v.name))
            .collect();
        let _ = writeln!(out, "  {} {:+}", terms.join(" "), self.objective_constant);
        let _ = writeln!(out, "subject to");
        for row in &self.rows {
            let terms: Vec<String> = row
                .terms
                .iter()
                .map(|(v, c)| format!("{:+} {}", c, self.vars[v.0].name))
                .collect();
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(out, "  {} {} {}  : {}", terms.join(" "), op, row.rhs, row.dual);
        }
        out
    }
}

/// Per-row signed violations and the objective value of an assignment.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub rows: Vec<(Symbol, f64)>,
    pub objective: f64,
}

impl ResidualReport {
    pub fn max_violation(&self) -> f64 {
        self.rows.iter().map(|(_, r)| r.abs()).fold(0.0, f64::max)
    }

    pub fn residual_of(&self, dual: &Symbol) -> Option<f64> {
        self.rows.iter().find(|(d, _)| d == dual).map(|(_, r)| *r)
    }
}
