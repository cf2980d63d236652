//! Text dump of a problem in the CPLEX LP interchange format, for
//! cross-checking against external solvers.

use std::io::{self, Write};

use super::{RowSense, StandardFormLp};

fn var_name(j: usize) -> String {
    format!("x{j}")
}

fn write_linear<W: Write>(w: &mut W, coeffs: &[f64]) -> io::Result<()> {
    let mut first = true;
    for (j, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        if first {
            write!(w, "{c} {}", var_name(j))?;
            first = false;
        } else if c < 0.0 {
            write!(w, " - {} {}", -c, var_name(j))?;
        } else {
            write!(w, " + {c} {}", var_name(j))?;
        }
    }
    if first {
        write!(w, "0 {}", var_name(0))?;
    }
    Ok(())
}

/// Write `lp` in CPLEX LP format.
pub fn write_lp_format<W: Write>(w: &mut W, lp: &StandardFormLp) -> io::Result<()> {
    writeln!(w, "Minimize")?;
    write!(w, " obj: ")?;
    write_linear(w, &lp.objective)?;
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for (i, row) in lp.rows.iter().enumerate() {
        write!(w, " r{i}: ")?;
        write_linear(w, &row.coeffs)?;
        let op = match row.sense {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        };
        writeln!(w, " {op} {}", row.rhs)?;
    }
    writeln!(w, "Bounds")?;
    for j in 0..lp.num_vars() {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => writeln!(w, " {lo} <= {} <= {hi}", var_name(j))?,
            (true, false) => writeln!(w, " {} >= {lo}", var_name(j))?,
            (false, true) => writeln!(w, " -inf <= {} <= {hi}", var_name(j))?,
            (false, false) => writeln!(w, " {} free", var_name(j))?,
        }
    }
    writeln!(w, "End")
}

#[cfg(test)]
mod tests {
    use super::super::{LpRow, RowSense, StandardFormLp};
    use super::*;

    #[test]
    fn dump_contains_sections_and_rows() {
        let mut lp = StandardFormLp::new(2);
        lp.objective = vec![1.0, -2.5];
        lp.lower = vec![0.0, f64::NEG_INFINITY];
        lp.upper = vec![f64::INFINITY, 4.0];
        lp.rows.push(LpRow {
            coeffs: vec![1.0, 1.0],
            sense: RowSense::Le,
            rhs: 3.0,
        });
        let mut buf = Vec::new();
        write_lp_format(&mut buf, &lp).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Minimize"));
        assert!(text.contains("Subject To"));
        assert!(text.contains("r0: 1 x0 + 1 x1 <= 3"));
        assert!(text.contains("Bounds"));
        assert!(text.contains("x0 >= 0"));
        assert!(text.contains("-inf <= x1 <= 4"));
        assert!(text.trim_end().ends_with("End"));
    }
}
