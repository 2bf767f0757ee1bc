//! MPS round-trip and external-adapter contract tests.
//!
//! The re-import reader below is a minimal fixed-format MPS parser used
//! only as a test oracle for the writer; it is independent of the export
//! code path.

use std::collections::BTreeMap;

use trimarket::case::parse_case;
use trimarket::export::write_mps;
use trimarket::kkt::{build_coupled_system, Mode};
use trimarket::lp::Sense;
use trimarket::milp::{assemble_milp, estimate_big_m, MilpModel, MilpObjective};
use trimarket::solver::{
    ExternalCommandAdapter, HighsAdapter, MilpSolver, SolveLimits, SolveStatus,
};

fn micro1_model(objective: MilpObjective) -> MilpModel {
    let case = parse_case(include_str!("../fixtures/micro1.json")).unwrap();
    let sys = build_coupled_system(&case, Mode::Proposed).unwrap();
    let cfg = estimate_big_m(&sys, &case).unwrap();
    assemble_milp(&sys, &cfg, objective).unwrap()
}

mod mps_reader {
    use super::*;

    #[derive(Debug, Default)]
    pub struct ReadModel {
        pub row_sense: BTreeMap<String, Sense>,
        pub rhs: BTreeMap<String, f64>,
        pub columns: Vec<(String, bool)>, // name, integer
        pub entries: Vec<(String, String, f64)>, // column, row, coeff
        pub obj: BTreeMap<String, f64>,
        pub bounds: BTreeMap<String, (f64, f64)>,
    }

    pub fn parse(text: &str) -> ReadModel {
        let mut model = ReadModel::default();
        let mut section = String::new();
        let mut integer = false;
        for line in text.lines() {
            if !line.starts_with(' ') {
                section = line.split_whitespace().next().unwrap_or("").to_string();
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match section.as_str() {
                "ROWS" => {
                    if fields[0] != "N" {
                        let sense = match fields[0] {
                            "L" => Sense::Le,
                            "G" => Sense::Ge,
                            _ => Sense::Eq,
                        };
                        model.row_sense.insert(fields[1].to_string(), sense);
                    }
                }
                "COLUMNS" => {
                    if fields.len() >= 3 && fields[1] == "'MARKER'" {
                        integer = fields[2] == "'INTORG'";
                        continue;
                    }
                    let column = fields[0].to_string();
                    if !model.columns.iter().any(|(c, _)| *c == column) {
                        model.columns.push((column.clone(), integer));
                    }
                    let mut i = 1;
                    while i + 1 < fields.len() + 1 && i + 1 <= fields.len() {
                        let row = fields[i].to_string();
                        let value: f64 = fields[i + 1].parse().unwrap();
                        if row == "COST" {
                            model.obj.insert(column.clone(), value);
                        } else {
                            model.entries.push((column.clone(), row, value));
                        }
                        i += 2;
                    }
                }
                "RHS" => {
                    let mut i = 1;
                    while i + 1 <= fields.len() - 1 {
                        model
                            .rhs
                            .insert(fields[i].to_string(), fields[i + 1].parse().unwrap());
                        i += 2;
                    }
                }
                "BOUNDS" => {
                    let kind = fields[0];
                    let column = fields[2].to_string();
                    let entry = model
                        .bounds
                        .entry(column)
                        .or_insert((f64::NEG_INFINITY, f64::INFINITY));
                    match kind {
                        "FR" => {}
                        "MI" => entry.0 = f64::NEG_INFINITY,
                        "LO" => entry.0 = fields[3].parse().unwrap(),
                        "UP" => entry.1 = fields[3].parse().unwrap(),
                        other => panic!("unsupported bound kind {other}"),
                    }
                }
                _ => {}
            }
        }
        model
    }

    /// Rebuild a solver-ready model from parsed MPS data.
    pub fn to_milp(read: &ReadModel) -> MilpModel {
        let mut lp = trimarket::lp::LinearProgram::new("reimported");
        let mut ids = BTreeMap::new();
        for (idx, (column, integer)) in read.columns.iter().enumerate() {
            let bounds = if *integer {
                (0.0, 1.0)
            } else {
                read
                    .bounds
                    .get(column)
                    .copied()
                    .unwrap_or((f64::NEG_INFINITY, f64::INFINITY))
            };
            let obj = read.obj.get(column).copied().unwrap_or(0.0);
            let id = lp
                .add_variable(
                    trimarket::lp::Symbol::new("c", format!("{idx}"), 0),
                    bounds,
                    obj,
                )
                .unwrap();
            ids.insert(column.clone(), id);
        }
        let mut rows: BTreeMap<&String, Vec<(trimarket::lp::VarId, f64)>> = BTreeMap::new();
        for (column, row, value) in &read.entries {
            rows.entry(row).or_default().push((ids[column], *value));
        }
        for (r, (row, sense)) in read.row_sense.iter().enumerate() {
            let terms = rows.get(row).cloned().unwrap_or_default();
            let rhs = read.rhs.get(row).copied().unwrap_or(0.0);
            lp.add_row(terms, *sense, rhs, trimarket::lp::Symbol::new("r", format!("{r}"), 0))
                .unwrap();
        }
        let mut model = MilpModel::from_lp(&lp);
        for (column, integer) in &read.columns {
            if *integer {
                let idx = ids[column].0;
                model.vars[idx].binary = true;
            }
        }
        model
    }
}

#[test]
fn mps_reimport_reproduces_optimum_status() {
    let model = micro1_model(MilpObjective::Constant);
    let artifact = write_mps(&model, "micro1");
    let read = mps_reader::parse(&artifact.mps);
    assert_eq!(read.columns.len(), model.vars.len());
    assert_eq!(read.row_sense.len(), model.rows.len());

    let reimported = mps_reader::to_milp(&read);
    let direct = HighsAdapter.submit(&model, &SolveLimits::default()).unwrap();
    let roundtrip = HighsAdapter.submit(&reimported, &SolveLimits::default()).unwrap();
    assert_eq!(direct.status, roundtrip.status);
    assert_eq!(direct.status, SolveStatus::Optimal);
}

#[test]
fn mps_reimport_preserves_welfare_objective() {
    let model = micro1_model(MilpObjective::Welfare);
    let artifact = write_mps(&model, "micro1");
    let reimported = mps_reader::to_milp(&mps_reader::parse(&artifact.mps));

    let direct = HighsAdapter.submit(&model, &SolveLimits::default()).unwrap();
    let roundtrip = HighsAdapter.submit(&reimported, &SolveLimits::default()).unwrap();
    assert_eq!(direct.status, roundtrip.status);

    let obj = |m: &MilpModel, a: &BTreeMap<trimarket::lp::Symbol, f64>| -> f64 {
        m.vars
            .iter()
            .map(|v| v.obj * a[&v.name])
            .sum::<f64>()
    };
    let d = obj(&model, direct.assignment.as_ref().unwrap());
    let r = obj(&reimported, roundtrip.assignment.as_ref().unwrap());
    // The objective constant is carried in the RHS convention, compare the
    // linear parts only.
    assert!((d - r).abs() <= 1e-6 * d.abs().max(1.0), "{d} vs {r}");
}

#[test]
fn external_adapter_runs_a_stub_solver_and_unmangles_names() {
    let model = micro1_model(MilpObjective::Constant);
    // Reference solve to produce a canned solution file.
    let reference = HighsAdapter.submit(&model, &SolveLimits::default()).unwrap();
    let assignment = reference.assignment.clone().unwrap();

    let artifact = write_mps(&model, "micro1");
    let to_code: BTreeMap<&str, &str> = artifact
        .mangled
        .iter()
        .map(|(code, original)| (original.as_str(), code.as_str()))
        .collect();
    let mut sol = String::from("Model status\nOptimal\n\n# Primal solution values\nFeasible\n");
    sol.push_str(&format!("# Columns {}\n", model.vars.len()));
    for v in &model.vars {
        let name = v.name.to_string();
        let written = to_code.get(name.as_str()).copied().unwrap_or(&name);
        sol.push_str(&format!("{written} {}\n", assignment[&v.name]));
    }
    let dir = tempfile::tempdir().unwrap();
    let canned = dir.path().join("canned.sol");
    std::fs::write(&canned, sol).unwrap();

    // A stub "solver" that copies the canned solution into place.
    let adapter = ExternalCommandAdapter {
        binary: "/bin/sh".into(),
        args: Some(vec![
            "-c".into(),
            format!("cp {} {{solution}}", canned.display()),
        ]),
    };
    let result = adapter.submit(&model, &SolveLimits::default()).unwrap();
    assert_eq!(result.status, SolveStatus::Optimal);
    let external = result.assignment.unwrap();
    for v in &model.vars {
        assert!(
            (external[&v.name] - assignment[&v.name]).abs() <= 1e-9,
            "mismatch on {}",
            v.name
        );
    }
    // The returned point satisfies the model rows.
    let dense: Vec<f64> = model.vars.iter().map(|v| external[&v.name]).collect();
    assert!(model.max_violation(&dense) <= 1e-6);
}

#[test]
fn external_adapter_surfaces_missing_binary() {
    let model = micro1_model(MilpObjective::Constant);
    let adapter = ExternalCommandAdapter {
        binary: "/nonexistent/solver".into(),
        args: Some(vec!["{model}".into()]),
    };
    match adapter.submit(&model, &SolveLimits::default()) {
        Err(trimarket::Error::Adapter { adapter, .. }) => assert_eq!(adapter, "external"),
        other => panic!("expected adapter error, got {other:?}"),
    }
}
