//! Free-format MPS export, with a `QUADOBJ` section for quadratic terms.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use super::program::ConvexProgram;
use crate::error::Result;

fn token(name: &str, fallback: String, used: &mut HashSet<String>) -> String {
    let clean: String = name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    let cand = if clean.is_empty() { fallback.clone() } else { clean };
    let out = if used.contains(&cand) {
        format!("{cand}_{fallback}")
    } else {
        cand
    };
    used.insert(out.clone());
    out
}

/// Writes `prog` in free MPS. The objective row is `OBJ`; the constant term
/// goes to its RHS entry with the negated sign per convention.
pub fn write_mps<W: Write>(prog: &ConvexProgram, name: &str, mut w: W) -> Result<()> {
    let mut used = HashSet::new();
    used.insert("OBJ".to_string());
    let cols: Vec<String> = prog
        .names
        .iter()
        .enumerate()
        .map(|(j, n)| token(n, format!("C{j}"), &mut used))
        .collect();
    let eq: Vec<String> = prog
        .equalities
        .iter()
        .enumerate()
        .map(|(r, row)| token(&row.name, format!("E{r}"), &mut used))
        .collect();
    let le: Vec<String> = prog
        .inequalities
        .iter()
        .enumerate()
        .map(|(r, row)| token(&row.name, format!("L{r}"), &mut used))
        .collect();

    writeln!(w, "NAME {name}")?;
    writeln!(w, "ROWS")?;
    writeln!(w, " N OBJ")?;
    for r in &eq {
        writeln!(w, " E {r}")?;
    }
    for r in &le {
        writeln!(w, " L {r}")?;
    }

    let mut by_col: Vec<Vec<(&str, f64)>> = vec![Vec::new(); prog.num_vars()];
    for (j, &c) in prog.linear.iter().enumerate() {
        if c != 0.0 {
            by_col[j].push(("OBJ", c));
        }
    }
    for (rows, names) in [(&prog.equalities, &eq), (&prog.inequalities, &le)] {
        for (row, rn) in rows.iter().zip(names) {
            let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, a) in &row.coeffs {
                *merged.entry(j).or_default() += a;
            }
            for (j, a) in merged {
                by_col[j].push((rn.as_str(), a));
            }
        }
    }
    writeln!(w, "COLUMNS")?;
    for (j, entries) in by_col.iter().enumerate() {
        if entries.is_empty() {
            writeln!(w, " {} OBJ 0", cols[j])?;
        }
        for (r, a) in entries {
            writeln!(w, " {} {} {:e}", cols[j], r, a)?;
        }
    }

    writeln!(w, "RHS")?;
    if prog.constant != 0.0 {
        writeln!(w, " RHS OBJ {:e}", -prog.constant)?;
    }
    for (rows, names) in [(&prog.equalities, &eq), (&prog.inequalities, &le)] {
        for (row, rn) in rows.iter().zip(names) {
            if row.rhs != 0.0 {
                writeln!(w, " RHS {} {:e}", rn, row.rhs)?;
            }
        }
    }

    writeln!(w, "BOUNDS")?;
    for j in 0..prog.num_vars() {
        let (lo, hi) = (prog.lower[j], prog.upper[j]);
        let c = &cols[j];
        if lo == hi {
            writeln!(w, " FX BND {c} {lo:e}")?;
            continue;
        }
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => writeln!(w, " FR BND {c}")?,
            (false, true) => {
                writeln!(w, " MI BND {c}")?;
                writeln!(w, " UP BND {c} {hi:e}")?;
            }
            (true, fin_hi) => {
                if lo != 0.0 {
                    writeln!(w, " LO BND {c} {lo:e}")?;
                }
                if fin_hi {
                    writeln!(w, " UP BND {c} {hi:e}")?;
                }
            }
        }
    }

    let mut quad: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(i, j, v) in &prog.quadratic {
        *quad.entry((i, j)).or_default() += v;
    }
    quad.retain(|_, v| *v != 0.0);
    if !quad.is_empty() {
        writeln!(w, "QUADOBJ")?;
        for ((i, j), v) in quad {
            writeln!(w, " {} {} {:e}", cols[i], cols[j], v)?;
        }
    }
    writeln!(w, "ENDATA")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_qp_layout() {
        let mut p = ConvexProgram::new();
        let x = p.add_free_var("x");
        let y = p.add_var("y", 0.0, 4.0);
        p.add_quadratic(x, x, 2.0);
        p.add_linear(y, -1.0);
        p.add_eq("sum", vec![(x, 1.0), (y, 1.0)], 2.0);
        p.add_le("cap", vec![(y, 1.0)], 3.0);
        let mut buf = Vec::new();
        write_mps(&p, "t", &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains(" E sum\n L cap\n"));
        assert!(s.contains(" y OBJ -1e0\n"));
        assert!(s.contains(" FR BND x\n"));
        assert!(s.contains(" UP BND y 4e0\n"));
        assert!(s.contains("QUADOBJ\n x x 2e0\n"));
        assert!(s.ends_with("ENDATA\n"));
    }
}
