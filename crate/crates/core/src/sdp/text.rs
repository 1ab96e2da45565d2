//! Sparse-triplet text serialization of lowered problems, for offline
//! debugging and cross-backend replay.
//!
//! Format (whitespace separated, one record per line):
//!
//! ```text
//! sdp-problem v1
//! matvar <index> <side> <cone:0|1> <name>
//! sclvar <index> <name>
//! eq <rhs>
//! t m <var> <row> <col> <coef>
//! t s <var> <coef>
//! end
//! objective
//! t ...
//! end
//! ```
//!
//! Floats are written with the shortest round-trip representation, so a
//! write/read cycle reproduces the problem bit-exactly.

use super::{LinTerm, LinearEq, PsdConstraint, SdpError, SdpProblem, VarRef};
use std::io::{BufRead, Write};

pub fn write_problem<W: Write>(problem: &SdpProblem, mut out: W) -> Result<(), SdpError> {
    let p = problem.lowered();
    writeln!(out, "sdp-problem v1")?;
    let coned: Vec<bool> = {
        let mut v = vec![false; p.matrix_vars.len()];
        for c in &p.psd_constraints {
            if let PsdConstraint::VarPsd { var } = c {
                v[*var] = true;
            }
        }
        v
    };
    for (i, mv) in p.matrix_vars.iter().enumerate() {
        writeln!(
            out,
            "matvar {} {} {} {}",
            i,
            mv.side,
            u8::from(coned[i]),
            sanitize(&mv.name)
        )?;
    }
    for (i, sv) in p.scalar_vars.iter().enumerate() {
        writeln!(out, "sclvar {} {}", i, sanitize(&sv.name))?;
    }
    for eq in &p.equalities {
        writeln!(out, "eq {}", eq.rhs)?;
        for t in &eq.terms {
            write_term(&mut out, t)?;
        }
        writeln!(out, "end")?;
    }
    if let Some(obj) = &p.objective {
        writeln!(out, "objective")?;
        for t in obj {
            write_term(&mut out, t)?;
        }
        writeln!(out, "end")?;
    }
    Ok(())
}

fn write_term<W: Write>(out: &mut W, t: &LinTerm) -> Result<(), SdpError> {
    match t.var {
        VarRef::Mat { var, row, col } => {
            writeln!(out, "t m {} {} {} {}", var, row, col, t.coeff)?
        }
        VarRef::Scalar(s) => writeln!(out, "t s {} {}", s, t.coeff)?,
    }
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

pub fn read_problem<R: BufRead>(reader: R) -> Result<SdpProblem, SdpError> {
    let mut problem = SdpProblem::new();
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| SdpError::Parse("empty input".into()))?
        .map_err(SdpError::Io)?;
    if header.trim() != "sdp-problem v1" {
        return Err(SdpError::Parse(format!("unexpected header `{}`", header)));
    }
    #[derive(PartialEq)]
    enum Section {
        Top,
        Eq(LinearEq),
        Objective(Vec<LinTerm>),
    }
    let mut section = Section::Top;
    let mut cone_vars = Vec::new();
    for line in lines {
        let line = line.map_err(SdpError::Io)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match (&mut section, fields[0]) {
            (Section::Top, "matvar") => {
                if fields.len() < 4 {
                    return Err(SdpError::Parse(format!("bad matvar line `{}`", line)));
                }
                let side: usize = parse(fields[2])?;
                let cone: u8 = parse(fields[3])?;
                let name = fields.get(4).copied().unwrap_or("m").to_string();
                let idx = problem.add_matrix_var(name, side);
                if cone == 1 {
                    cone_vars.push(idx);
                }
            }
            (Section::Top, "sclvar") => {
                let name = fields.get(2).copied().unwrap_or("s").to_string();
                problem.add_scalar_var(name);
            }
            (Section::Top, "eq") => {
                let rhs: f64 = parse(fields.get(1).copied().unwrap_or(""))?;
                section = Section::Eq(LinearEq { terms: vec![], rhs });
            }
            (Section::Top, "objective") => {
                section = Section::Objective(vec![]);
            }
            (Section::Eq(eq), "t") => eq.terms.push(parse_term(&fields)?),
            (Section::Objective(obj), "t") => obj.push(parse_term(&fields)?),
            (Section::Eq(_), "end") => {
                let Section::Eq(eq) = std::mem::replace(&mut section, Section::Top) else {
                    unreachable!()
                };
                problem.equalities.push(eq);
            }
            (Section::Objective(_), "end") => {
                let Section::Objective(obj) = std::mem::replace(&mut section, Section::Top)
                else {
                    unreachable!()
                };
                problem.objective = Some(obj);
            }
            _ => return Err(SdpError::Parse(format!("unexpected line `{}`", line))),
        }
    }
    for v in cone_vars {
        problem.require_var_psd(v);
    }
    problem.check_well_formed()?;
    Ok(problem)
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, SdpError> {
    s.parse().map_err(|_| SdpError::Parse(format!("bad token `{}`", s)))
}

fn parse_term(fields: &[&str]) -> Result<LinTerm, SdpError> {
    match fields.get(1) {
        Some(&"m") => {
            if fields.len() != 6 {
                return Err(SdpError::Parse("matrix term needs 4 arguments".into()));
            }
            Ok(LinTerm {
                var: VarRef::Mat { var: parse(fields[2])?, row: parse(fields[3])?, col: parse(fields[4])? },
                coeff: parse(fields[5])?,
            })
        }
        Some(&"s") => {
            if fields.len() != 4 {
                return Err(SdpError::Parse("scalar term needs 2 arguments".into()));
            }
            Ok(LinTerm { var: VarRef::Scalar(parse(fields[2])?), coeff: parse(fields[3])? })
        }
        _ => Err(SdpError::Parse("term must be `t m ...` or `t s ...`".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::super::solve::{solve, SolveOptions};
    use super::*;

    #[test]
    fn roundtrip_preserves_solution_status() {
        let mut p = SdpProblem::new();
        let x = p.add_matrix_var("X", 2);
        p.require_var_psd(x);
        p.add_scalar_var("a");
        p.add_equality(
            vec![
                LinTerm { var: VarRef::Mat { var: x, row: 0, col: 0 }, coeff: 1.0 / 3.0 },
                LinTerm { var: VarRef::Mat { var: x, row: 1, col: 1 }, coeff: 1.0 },
                LinTerm { var: VarRef::Scalar(0), coeff: -0.25 },
            ],
            1.0,
        );
        let mut buf = Vec::new();
        write_problem(&p, &mut buf).unwrap();
        let q = read_problem(&buf[..]).unwrap();
        assert_eq!(q.matrix_vars.len(), 1);
        assert_eq!(q.scalar_vars.len(), 1);
        assert_eq!(q.equalities.len(), 1);
        // coefficients survive exactly
        assert_eq!(q.equalities[0].terms[0].coeff, 1.0 / 3.0);
        let s1 = solve(&p, &SolveOptions::default());
        let s2 = solve(&q, &SolveOptions::default());
        assert_eq!(s1.status, s2.status);
        // and a second serialization is byte-identical
        let mut buf2 = Vec::new();
        write_problem(&q, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
