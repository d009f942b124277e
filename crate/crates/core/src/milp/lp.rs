//! Deterministic LP text format writer and reader.
//!
//! The writer emits the classic sectioned layout (`Minimize`/`Maximize`,
//! `Subject To`, `Bounds`, `Generals`, `Binaries`, `End`) with explicit
//! coefficients and one bounds line per variable in declaration order, so a
//! model round-trips through the bundled reader unchanged and identical
//! models always produce byte-identical files.  Model name and big-M
//! metadata travel in leading comment lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Constraint, MilpMeta, MilpModel, ObjSense, Sense, VarKind, Variable};
use crate::error::{Error, Result};

/// Render a model as LP text.
pub fn write_lp(model: &MilpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ crossflow lp export");
    let _ = writeln!(out, "\\ name {}", model.name);
    let _ = writeln!(out, "\\ meta big_m {}", model.meta.big_m);
    let _ = writeln!(out, "\\ meta big_m1 {}", model.meta.big_m1);
    let _ = writeln!(out, "\\ meta epsilon {}", model.meta.epsilon);
    out.push_str(match model.sense {
        ObjSense::Minimize => "Minimize\n",
        ObjSense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    for (i, &(v, c)) in model.objective.iter().enumerate() {
        if i > 0 && i % 6 == 0 {
            out.push_str("\n     ");
        }
        push_term(&mut out, i == 0, c, &model.variables[v].name);
    }
    out.push('\n');
    out.push_str("Subject To\n");
    for row in &model.constraints {
        let _ = write!(out, " {}:", row.name);
        for (i, &(v, c)) in row.terms.iter().enumerate() {
            push_term(&mut out, i == 0, c, &model.variables[v].name);
        }
        let sense = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {} {}", sense, row.rhs);
    }
    out.push_str("Bounds\n");
    for var in &model.variables {
        let line = match (var.lower.is_finite(), var.upper.is_finite()) {
            (true, true) if var.lower == var.upper => {
                format!(" {} = {}", var.name, var.lower)
            }
            (true, true) => format!(" {} <= {} <= {}", var.lower, var.name, var.upper),
            (true, false) => format!(" {} >= {}", var.name, var.lower),
            (false, true) => format!(" -inf <= {} <= {}", var.name, var.upper),
            (false, false) => format!(" {} free", var.name),
        };
        out.push_str(&line);
        out.push('\n');
    }
    for (header, kind) in [("Generals", VarKind::Integer), ("Binaries", VarKind::Binary)] {
        out.push_str(header);
        out.push('\n');
        let mut on_line = 0;
        for var in model.variables.iter().filter(|v| v.kind == kind) {
            if on_line == 4 {
                out.push('\n');
                on_line = 0;
            }
            let _ = write!(out, " {}", var.name);
            on_line += 1;
        }
        if on_line > 0 {
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

fn push_term(out: &mut String, first: bool, coeff: f64, name: &str) {
    if first {
        if coeff < 0.0 {
            let _ = write!(out, " - {} {}", -coeff, name);
        } else {
            let _ = write!(out, " {} {}", coeff, name);
        }
    } else if coeff < 0.0 {
        let _ = write!(out, " - {} {}", -coeff, name);
    } else {
        let _ = write!(out, " + {} {}", coeff, name);
    }
}

/// Write a model to a file.
pub fn export_lp(model: &MilpModel, path: &Path) -> Result<()> {
    fs::write(path, write_lp(model)).map_err(|e| Error::io(path, e))
}

/// Read a model from a file.
pub fn import_lp(path: &Path) -> Result<MilpModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_lp(&text)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Bounds,
    Generals,
    Binaries,
    Done,
}

/// Parse LP text produced by [`write_lp`].
///
/// Variables take their order from the `Bounds` section (the writer emits
/// one line per variable) and their kinds from the `Generals` and
/// `Binaries` sections.
pub fn read_lp(text: &str) -> Result<MilpModel> {
    let fail = |line: usize, msg: &str| Error::LpParse {
        line,
        msg: msg.into(),
    };

    let mut name = String::new();
    let mut meta = MilpMeta {
        big_m: 0.0,
        big_m1: 0.0,
        epsilon: 0.0,
    };
    let mut sense = ObjSense::Minimize;
    let mut objective_src: Vec<(usize, String)> = Vec::new();
    let mut row_src: Vec<(usize, String)> = Vec::new();
    let mut bound_src: Vec<(usize, String)> = Vec::new();
    let mut generals: Vec<String> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();

    let mut section = Section::Preamble;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('\\') {
            let words: Vec<&str> = comment.split_whitespace().collect();
            match words.as_slice() {
                ["name", rest @ ..] => name = rest.join(" "),
                ["meta", key, value] => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| fail(lineno, "bad number in meta comment"))?;
                    match *key {
                        "big_m" => meta.big_m = v,
                        "big_m1" => meta.big_m1 = v,
                        "epsilon" => meta.epsilon = v,
                        _ => return Err(fail(lineno, "unknown meta key")),
                    }
                }
                _ => {}
            }
            continue;
        }
        match line {
            "Minimize" => {
                sense = ObjSense::Minimize;
                section = Section::Objective;
                continue;
            }
            "Maximize" => {
                sense = ObjSense::Maximize;
                section = Section::Objective;
                continue;
            }
            "Subject To" => {
                section = Section::Rows;
                continue;
            }
            "Bounds" => {
                section = Section::Bounds;
                continue;
            }
            "Generals" => {
                section = Section::Generals;
                continue;
            }
            "Binaries" => {
                section = Section::Binaries;
                continue;
            }
            "End" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Preamble => return Err(fail(lineno, "expected an objective header")),
            Section::Objective => objective_src.push((lineno, line.to_string())),
            Section::Rows => row_src.push((lineno, line.to_string())),
            Section::Bounds => bound_src.push((lineno, line.to_string())),
            Section::Generals => {
                generals.extend(line.split_whitespace().map(str::to_string));
            }
            Section::Binaries => {
                binaries.extend(line.split_whitespace().map(str::to_string));
            }
            Section::Done => return Err(fail(lineno, "content after End")),
        }
    }
    if section != Section::Done {
        return Err(fail(text.lines().count(), "missing End marker"));
    }

    // Variables, in bounds order.
    let mut variables: Vec<Variable> = Vec::with_capacity(bound_src.len());
    let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (lineno, line) in &bound_src {
        let words: Vec<&str> = line.split_whitespace().collect();
        let parse_num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| fail(*lineno, "bad number in bounds"))
        };
        let (vname, lower, upper) = match words.as_slice() {
            [n, "free"] => (n.to_string(), f64::NEG_INFINITY, f64::INFINITY),
            [n, "=", v] => {
                let v = parse_num(v)?;
                (n.to_string(), v, v)
            }
            [n, ">=", lo] => (n.to_string(), parse_num(lo)?, f64::INFINITY),
            ["-inf", "<=", n, "<=", hi] => (n.to_string(), f64::NEG_INFINITY, parse_num(hi)?),
            [lo, "<=", n, "<=", hi] => (n.to_string(), parse_num(lo)?, parse_num(hi)?),
            _ => return Err(fail(*lineno, "unrecognized bounds line")),
        };
        if index.insert(vname.clone(), variables.len()).is_some() {
            return Err(fail(*lineno, "duplicate variable in bounds"));
        }
        variables.push(Variable {
            name: vname,
            kind: VarKind::Continuous,
            lower,
            upper,
        });
    }
    for (names, kind) in [(&generals, VarKind::Integer), (&binaries, VarKind::Binary)] {
        for n in names {
            let &v = index
                .get(n)
                .ok_or_else(|| fail(0, "integrality section names unknown variable"))?;
            variables[v].kind = kind;
        }
    }

    // Objective: joined expression, possibly spanning lines, after "obj:".
    let joined = objective_src
        .iter()
        .map(|(_, l)| l.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let obj_line = objective_src.first().map(|&(l, _)| l).unwrap_or(0);
    let expr = joined
        .strip_prefix("obj:")
        .map(str::trim)
        .unwrap_or(joined.trim());
    let objective = parse_terms(expr, &index).map_err(|msg| fail(obj_line, &msg))?;

    let mut constraints = Vec::with_capacity(row_src.len());
    for (lineno, line) in &row_src {
        let (rname, rest) = line
            .split_once(':')
            .ok_or_else(|| fail(*lineno, "row without name"))?;
        let words: Vec<&str> = rest.split_whitespace().collect();
        let sense_pos = words
            .iter()
            .position(|w| matches!(*w, "<=" | ">=" | "="))
            .ok_or_else(|| fail(*lineno, "row without comparison"))?;
        let sense = match words[sense_pos] {
            "<=" => Sense::Le,
            ">=" => Sense::Ge,
            _ => Sense::Eq,
        };
        if sense_pos + 2 != words.len() {
            return Err(fail(*lineno, "expected a single right-hand side"));
        }
        let rhs: f64 = words[sense_pos + 1]
            .parse()
            .map_err(|_| fail(*lineno, "bad right-hand side"))?;
        let terms = parse_terms(&words[..sense_pos].join(" "), &index)
            .map_err(|msg| fail(*lineno, &msg))?;
        constraints.push(Constraint {
            name: rname.trim().to_string(),
            terms,
            sense,
            rhs,
        });
    }

    let model = MilpModel {
        name,
        sense,
        objective,
        variables,
        constraints,
        meta,
    };
    model.validate()?;
    Ok(model)
}

/// Parse `c1 name1 + c2 name2 - c3 name3 ...` with explicit coefficients.
fn parse_terms(
    expr: &str,
    index: &std::collections::HashMap<String, usize>,
) -> std::result::Result<Vec<(usize, f64)>, String> {
    let words: Vec<&str> = expr.split_whitespace().collect();
    let mut terms = Vec::new();
    let mut i = 0;
    let mut sign = 1.0;
    while i < words.len() {
        match words[i] {
            "+" => {
                sign = 1.0;
                i += 1;
            }
            "-" => {
                sign = -1.0;
                i += 1;
            }
            _ => {
                let coeff: f64 = words[i]
                    .parse()
                    .map_err(|_| format!("bad coefficient {:?}", words[i]))?;
                let name = *words
                    .get(i + 1)
                    .ok_or_else(|| "coefficient without variable".to_string())?;
                let &v = index
                    .get(name)
                    .ok_or_else(|| format!("unknown variable {name:?}"))?;
                terms.push((v, sign * coeff));
                sign = 1.0;
                i += 2;
            }
        }
    }
    Ok(terms)
}
