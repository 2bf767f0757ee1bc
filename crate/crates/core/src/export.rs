//! MPS (fixed format) and LP format writers for the assembled MILP.
//!
//! Output is byte-deterministic: columns are ordered lexicographically by
//! structured name, rows keep assembly order, and numbers are rendered with
//! a fixed shortest-fit rule. Fixed MPS limits names to 8 characters, so
//! longer names are replaced by `C…`/`R…` codes and a sidecar name map is
//! produced.

use std::fmt::Write as _;

use crate::lp::Sense;
use crate::milp::MilpModel;

/// Rendered model plus the optional mangled-name sidecar (TSV,
/// `code<TAB>original`).
#[derive(Debug, Clone)]
pub struct MpsArtifact {
    pub mps: String,
    pub name_map: Option<String>,
    /// (code, original) pairs for every mangled name.
    pub mangled: Vec<(String, String)>,
}

const OBJ_ROW: &str = "COST";

fn fit_number(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 12 {
        return plain;
    }
    for precision in (1..=10).rev() {
        let s = format!("{v:.precision$e}");
        if s.len() <= 12 {
            return s;
        }
    }
    format!("{v:.2e}")
}

fn field(name: &str, width: usize) -> String {
    format!("{name:<width$}")
}

/// Write a fixed-format MPS document.
///
/// Binaries are declared through `INTORG`/`INTEND` markers with explicit
/// `[0, 1]` bounds; free continuous variables get `FR` bound records. The
/// constant objective term is encoded as a negated RHS entry on the cost
/// row, which standard readers either honor or ignore harmlessly.
pub fn write_mps(model: &MilpModel, name: &str) -> MpsArtifact {
    let mut mangled: Vec<(String, String)> = Vec::new();

    // Deterministic column order: lexicographic structured names.
    let mut col_order: Vec<usize> = (0..model.vars.len()).collect();
    col_order.sort_by_key(|&i| model.vars[i].name.to_string());

    let col_names: Vec<String> = {
        let mut names = vec![String::new(); model.vars.len()];
        for (rank, &i) in col_order.iter().enumerate() {
            let original = model.vars[i].name.to_string();
            names[i] = if original.len() <= 8 {
                original
            } else {
                let code = format!("C{rank:07}");
                mangled.push((code.clone(), original));
                code
            };
        }
        names
    };
    let row_names: Vec<String> = model
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.name.len() <= 8 {
                row.name.clone()
            } else {
                let code = format!("R{i:07}");
                mangled.push((code.clone(), row.name.clone()));
                code
            }
        })
        .collect();

    let mut out = String::new();
    let _ = writeln!(out, "NAME          {name}");
    let _ = writeln!(out, "ROWS");
    let _ = writeln!(out, " N  {OBJ_ROW}");
    for (row, rname) in model.rows.iter().zip(&row_names) {
        let tag = match row.sense {
            Sense::Le => "L",
            Sense::Eq => "E",
            Sense::Ge => "G",
        };
        let _ = writeln!(out, " {tag}  {rname}");
    }

    // Column-major coefficients.
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.vars.len()];
    for (r, row) in model.rows.iter().enumerate() {
        for (c, coeff) in &row.terms {
            by_col[*c].push((r, *coeff));
        }
    }

    let _ = writeln!(out, "COLUMNS");
    let mut in_integer_block = false;
    let mut marker = 0usize;
    for &c in &col_order {
        let var = &model.vars[c];
        if var.binary != in_integer_block {
            let kind = if var.binary { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(
                out,
                "    {}  {}           {}",
                field(&format!("MARKER{marker}"), 8),
                "'MARKER'",
                kind
            );
            marker += 1;
            in_integer_block = var.binary;
        }
        let mut entries: Vec<(String, f64)> = Vec::new();
        if var.obj != 0.0 {
            entries.push((OBJ_ROW.to_string(), var.obj));
        }
        for (r, coeff) in &by_col[c] {
            entries.push((row_names[*r].clone(), *coeff));
        }
        for pair in entries.chunks(2) {
            let mut line = format!(
                "    {}  {}  {}",
                field(&col_names[c], 8),
                field(&pair[0].0, 8),
                field(&fit_number(pair[0].1), 12)
            );
            if let Some((rname, v)) = pair.get(1) {
                let _ = write!(line, "   {}  {}", field(rname, 8), fit_number(*v));
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
    }
    if in_integer_block {
        let _ = writeln!(
            out,
            "    {}  {}           {}",
            field(&format!("MARKER{marker}"), 8),
            "'MARKER'",
            "'INTEND'"
        );
    }

    let _ = writeln!(out, "RHS");
    if model.objective_constant != 0.0 {
        let _ = writeln!(
            out,
            "    RHS       {}  {}",
            field(OBJ_ROW, 8),
            fit_number(-model.objective_constant)
        );
    }
    for (row, rname) in model.rows.iter().zip(&row_names) {
        if row.rhs != 0.0 {
            let _ = writeln!(
                out,
                "    RHS       {}  {}",
                field(rname, 8),
                fit_number(row.rhs)
            );
        }
    }

    let _ = writeln!(out, "BOUNDS");
    for &c in &col_order {
        let var = &model.vars[c];
        if var.binary {
            let _ = writeln!(out, " UP BND       {}  1", field(&col_names[c], 8));
        } else if var.lower.is_infinite() && var.upper.is_infinite() {
            let _ = writeln!(out, " FR BND       {}", field(&col_names[c], 8));
        } else {
            if var.lower.is_finite() {
                let _ = writeln!(
                    out,
                    " LO BND       {}  {}",
                    field(&col_names[c], 8),
                    fit_number(var.lower)
                );
            } else {
                let _ = writeln!(out, " MI BND       {}", field(&col_names[c], 8));
            }
            if var.upper.is_finite() {
                let _ = writeln!(
                    out,
                    " UP BND       {}  {}",
                    field(&col_names[c], 8),
                    fit_number(var.upper)
                );
            }
        }
    }
    let _ = writeln!(out, "ENDATA");

    let name_map = if mangled.is_empty() {
        None
    } else {
        let mut map = String::new();
        for (code, original) in &mangled {
            let _ = writeln!(map, "{code}\t{original}");
        }
        Some(map)
    };
    MpsArtifact { mps: out, name_map, mangled }
}

fn lp_name(name: &str) -> String {
    name.replace('[', "(").replace(']', ")")
}

/// Write a CPLEX-style LP format document with full numeric precision.
pub fn write_lp(model: &MilpModel) -> String {
    let mut out = String::new();
    let mut col_order: Vec<usize> = (0..model.vars.len()).collect();
    col_order.sort_by_key(|&i| model.vars[i].name.to_string());

    let _ = writeln!(out, "Minimize");
    let mut obj = String::from(" obj:");
    let mut any = false;
    for &c in &col_order {
        let var = &model.vars[c];
        if var.obj != 0.0 {
            let _ = write!(obj, " {:+} {}", var.obj, lp_name(&var.name.to_string()));
            any = true;
        }
    }
    if model.objective_constant != 0.0 {
        let _ = write!(obj, " {:+}", model.objective_constant);
        any = true;
    }
    if !any {
        let _ = write!(obj, " 0");
    }
    let _ = writeln!(out, "{obj}");

    let _ = writeln!(out, "Subject To");
    for row in &model.rows {
        let mut line = format!(" {}:", lp_name(&row.name).replace(':', "_"));
        for (c, coeff) in &row.terms {
            let _ = write!(line, " {:+} {}", coeff, lp_name(&model.vars[*c].name.to_string()));
        }
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        let _ = writeln!(out, "{line} {op} {}", row.rhs);
    }

    let _ = writeln!(out, "Bounds");
    for &c in &col_order {
        let var = &model.vars[c];
        if var.binary {
            continue;
        }
        if var.lower.is_infinite() && var.upper.is_infinite() {
            let _ = writeln!(out, " {} free", lp_name(&var.name.to_string()));
        } else {
            let lo = if var.lower.is_finite() { format!("{}", var.lower) } else { "-inf".into() };
            let hi = if var.upper.is_finite() { format!("{}", var.upper) } else { "+inf".into() };
            let _ = writeln!(out, " {lo} <= {} <= {hi}", lp_name(&var.name.to_string()));
        }
    }
    let binaries: Vec<String> = col_order
        .iter()
        .filter(|&&c| model.vars[c].binary)
        .map(|&c| lp_name(&model.vars[c].name.to_string()))
        .collect();
    if !binaries.is_empty() {
        let _ = writeln!(out, "Binary");
        for chunk in binaries.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    let _ = writeln!(out, "End");
    out
}
