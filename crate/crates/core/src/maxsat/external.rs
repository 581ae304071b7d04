use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::{MaxSatError, SolveResult, SolveStatus, WcnfInstance};

/// Runs `program args... <wcnf_path>` and parses its `s`/`o`/`v` output
/// lines. The reported model is checked against `instance`; its cost is
/// recomputed rather than trusted.
pub fn solve_external(
    program: &str,
    args: &[String],
    wcnf_path: &Path,
    instance: &WcnfInstance,
    timeout: Option<Duration>,
) -> Result<SolveResult, MaxSatError> {
    let mut child = Command::new(program)
        .args(args)
        .arg(wcnf_path)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| MaxSatError::External(format!("cannot start `{program}`: {e}")))?;
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        stdout.read_to_string(&mut s).map(|_| s)
    });
    let start = Instant::now();
    let mut timed_out = false;
    loop {
        if child.try_wait()?.is_some() {
            break;
        }
        if timeout.is_some_and(|t| start.elapsed() >= t) {
            let _ = child.kill();
            let _ = child.wait();
            timed_out = true;
            break;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    let out = reader
        .join()
        .map_err(|_| MaxSatError::External("output reader panicked".into()))??;
    let mut result = parse_output(&out, instance)?;
    if timed_out && result.status == SolveStatus::Optimal {
        result.status = SolveStatus::Timeout;
    }
    Ok(result)
}

/// Parses solver output in the usual `s`/`v` line format against
/// `instance`.
pub fn parse_output(out: &str, instance: &WcnfInstance) -> Result<SolveResult, MaxSatError> {
    let n = instance.num_vars();
    let mut status: Option<&str> = None;
    let mut model: Option<Vec<bool>> = None;
    for line in out.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("s ") {
            status = Some(rest.trim());
        } else if let Some(rest) = line.strip_prefix("v ") {
            let m = model.get_or_insert_with(|| vec![false; n]);
            let rest = rest.trim();
            // Newer solvers print the model as one 0/1 character per variable.
            if rest.len() == n && rest.chars().all(|c| c == '0' || c == '1') {
                for (i, c) in rest.chars().enumerate() {
                    m[i] = c == '1';
                }
                continue;
            }
            for tok in rest.split_whitespace() {
                let l: i64 = tok
                    .parse()
                    .map_err(|_| MaxSatError::External(format!("bad model literal `{tok}`")))?;
                if l == 0 {
                    continue;
                }
                let v = l.unsigned_abs() as usize;
                if v > n {
                    return Err(MaxSatError::External(format!("model literal {l} out of range")));
                }
                m[v - 1] = l > 0;
            }
        }
    }
    match status {
        Some("UNSATISFIABLE") => Ok(SolveResult {
            status: SolveStatus::HardUnsat,
            model: None,
            cost: None,
        }),
        Some(s @ ("OPTIMUM FOUND" | "SATISFIABLE" | "UNKNOWN")) => {
            let Some(m) = model else {
                return Ok(SolveResult {
                    status: SolveStatus::Timeout,
                    model: None,
                    cost: None,
                });
            };
            if !instance.satisfies_hard(&m) {
                return Err(MaxSatError::External("model violates a hard clause".into()));
            }
            let cost = instance.cost(&m);
            Ok(SolveResult {
                status: if s == "OPTIMUM FOUND" {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::Timeout
                },
                model: Some(m),
                cost: Some(cost),
            })
        }
        Some(other) => Err(MaxSatError::External(format!("unknown status `{other}`"))),
        None => Err(MaxSatError::External("no status line".into())),
    }
}

/// Formats a result the way `parse_output` reads it back: a status line,
/// an `o` line with the cost, and an integer `v` line.
pub fn format_output(result: &SolveResult) -> String {
    let mut out = String::new();
    let status = match (result.status, &result.model) {
        (SolveStatus::HardUnsat, _) => "UNSATISFIABLE",
        (SolveStatus::Optimal, _) => "OPTIMUM FOUND",
        (SolveStatus::Timeout, Some(_)) => "SATISFIABLE",
        (SolveStatus::Timeout, None) => "UNKNOWN",
    };
    if let Some(c) = result.cost {
        out.push_str(&format!("o {c}\n"));
    }
    out.push_str(&format!("s {status}\n"));
    if let Some(m) = &result.model {
        out.push('v');
        for (i, &b) in m.iter().enumerate() {
            let v = i as i64 + 1;
            out.push_str(&format!(" {}", if b { v } else { -v }));
        }
        out.push('\n');
    }
    out
}
