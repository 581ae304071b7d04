// Classic DIMACS WCNF: a `p wcnf <vars> <clauses> <top>` header, then one
// `<weight> <lits...> 0` line per clause, hard clauses weighted `top`.

use std::io::{BufRead, Write};

use super::{Lit, MaxSatError, WcnfInstance};

pub fn write_wcnf<W: Write>(instance: &WcnfInstance, mut w: W) -> Result<(), MaxSatError> {
    let top = instance.top()?;
    writeln!(
        w,
        "p wcnf {} {} {}",
        instance.num_vars(),
        instance.num_clauses(),
        top
    )?;
    let mut line = String::new();
    let mut emit = |w: &mut W, weight: u64, lits: &[Lit]| -> std::io::Result<()> {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "{weight}");
        for l in lits {
            let _ = write!(line, " {l}");
        }
        writeln!(w, "{line} 0")
    };
    for c in instance.hard() {
        emit(&mut w, top, c)?;
    }
    for (weight, c) in instance.soft() {
        emit(&mut w, *weight, c)?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> MaxSatError {
    MaxSatError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_wcnf<R: BufRead>(r: R) -> Result<WcnfInstance, MaxSatError> {
    let mut header: Option<(usize, usize, u64)> = None;
    let mut instance = WcnfInstance::default();
    let mut found = 0usize;
    // A clause may span several lines; it ends at the literal 0.
    let mut pending: Vec<i64> = Vec::new();
    let mut pending_line = 0;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let no = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('c') {
            continue;
        }
        if t.starts_with('p') {
            if header.is_some() {
                return Err(parse_err(no, "duplicate header"));
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 5 || parts[1] != "wcnf" {
                return Err(parse_err(no, "expected `p wcnf <vars> <clauses> <top>`"));
            }
            let nv: usize = parts[2]
                .parse()
                .map_err(|_| parse_err(no, format!("bad variable count `{}`", parts[2])))?;
            if nv > i32::MAX as usize {
                return Err(parse_err(no, "variable count overflows"));
            }
            let nc: usize = parts[3]
                .parse()
                .map_err(|_| parse_err(no, format!("bad clause count `{}`", parts[3])))?;
            let top: u64 = parts[4]
                .parse()
                .map_err(|_| parse_err(no, format!("bad top weight `{}`", parts[4])))?;
            if top == 0 {
                return Err(parse_err(no, "top weight must be positive"));
            }
            header = Some((nv, nc, top));
            instance = WcnfInstance::new(nv);
            continue;
        }
        let Some((nv, _, top)) = header else {
            return Err(parse_err(no, "clause before header"));
        };
        for tok in t.split_whitespace() {
            let x: i64 = tok
                .parse()
                .map_err(|_| parse_err(no, format!("bad number `{tok}`")))?;
            if pending.is_empty() {
                pending_line = no;
                if x <= 0 {
                    return Err(parse_err(no, format!("weight must be positive, got {x}")));
                }
                pending.push(x);
                continue;
            }
            if x != 0 {
                if x.unsigned_abs() as usize > nv {
                    return Err(parse_err(no, format!("literal {x} exceeds {nv} variables")));
                }
                pending.push(x);
                continue;
            }
            let weight = pending[0] as u64;
            let lits: Vec<Lit> = pending[1..].iter().map(|&l| l as Lit).collect();
            pending.clear();
            found += 1;
            match weight.cmp(&top) {
                std::cmp::Ordering::Equal => instance.add_hard(lits)?,
                std::cmp::Ordering::Less => instance.add_soft(weight, lits)?,
                std::cmp::Ordering::Greater => {
                    return Err(parse_err(
                        pending_line,
                        format!("weight {weight} exceeds top {top}"),
                    ))
                }
            }
        }
    }
    if !pending.is_empty() {
        return Err(parse_err(pending_line, "clause not terminated by 0"));
    }
    let Some((_, nc, _)) = header else {
        return Err(parse_err(0, "missing header"));
    };
    if found != nc {
        return Err(MaxSatError::ClauseCount {
            expected: nc,
            found,
        });
    }
    Ok(instance)
}
