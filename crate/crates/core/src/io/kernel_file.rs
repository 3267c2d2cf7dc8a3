//! Line-oriented kernel files.
//!
//! ```text
//! # comments and blank lines are ignored
//! states: H I D
//! death: D
//! min_age: 40
//! max_age: 90
//! max_sojourn: 50
//! force_absorption: true
//! calendar_start: 0
//! calendar_modifiers: 1 0.98 0.96
//! increments:
//! # from to age time sojourn probability
//! H I * * 1 0.05
//! H D 60 3 2 0.01
//! ```
//!
//! `min_age` defaults to 0, `force_absorption` to false, and the calendar
//! keys are optional (`calendar_start` defaults to 0). A `*` age expands to
//! every entry age in `[min_age, max_age)` at which the transition is
//! admissible. A `*` time sets the calendar-independent base row; a numeric
//! time sets an explicit row for that entry time, whose unlisted cells are
//! zero. Setting the same cell twice is an error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{file_error, IoError};
use crate::format::g17;
use crate::smk::{CalendarModifier, Kernel, KernelBuilder, StateSpace};

/// Whitespace-separated tokens with their 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &line[s..k]));
                start = None;
            }
            (false, None) => start = Some(k),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out.into_iter()
        .map(|(byte, tok)| (line[..byte].chars().count() + 1, tok))
        .collect()
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, column: usize, tok: &str, what: &str) -> Result<T, IoError> {
    tok.parse()
        .map_err(|_| parse_error(line, column, format!("invalid {what} `{tok}`")))
}

#[derive(Default)]
struct Manifest {
    states: Option<(usize, Vec<String>)>,
    death: Option<(usize, usize, String)>,
    min_age: Option<u32>,
    max_age: Option<u32>,
    max_sojourn: Option<u32>,
    force_absorption: Option<bool>,
    calendar_start: Option<i64>,
    calendar_modifiers: Option<(usize, Vec<f64>)>,
}

/// Parses a kernel file without validating the resulting kernel.
pub fn parse_kernel_unchecked(text: &str) -> Result<Kernel, IoError> {
    let mut manifest = Manifest::default();
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let mut saw_increments = false;

    for (ln, raw) in lines.by_ref() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let Some(colon) = line.find(':') else {
            return Err(parse_error(ln, 1, "expected `key: value`"));
        };
        let key = line[..colon].trim();
        let value_col = line[..colon + 1].chars().count() + 1;
        let toks: Vec<(usize, &str)> = tokens(&line[colon + 1..])
            .into_iter()
            .map(|(c, t)| (c + value_col - 1, t))
            .collect();
        let key_col = line.chars().take_while(|c| c.is_whitespace()).count() + 1;
        if key == "increments" {
            if let Some((c, _)) = toks.first() {
                return Err(parse_error(ln, *c, "`increments:` takes no value"));
            }
            saw_increments = true;
            break;
        }
        let single = || -> Result<(usize, &str), IoError> {
            match toks.as_slice() {
                [one] => Ok(*one),
                [] => Err(parse_error(ln, value_col, format!("missing value for `{key}`"))),
                [_, (c, _), ..] => Err(parse_error(ln, *c, format!("`{key}` takes one value"))),
            }
        };
        let duplicate = || parse_error(ln, key_col, format!("duplicate key `{key}`"));
        match key {
            "states" => {
                if manifest.states.is_some() {
                    return Err(duplicate());
                }
                if toks.is_empty() {
                    return Err(parse_error(ln, value_col, "no states listed"));
                }
                manifest.states = Some((ln, toks.iter().map(|(_, t)| t.to_string()).collect()));
            }
            "death" => {
                if manifest.death.is_some() {
                    return Err(duplicate());
                }
                let (c, t) = single()?;
                manifest.death = Some((ln, c, t.to_string()));
            }
            "min_age" | "max_age" | "max_sojourn" => {
                let (c, t) = single()?;
                let v: u32 = parse_num(ln, c, t, key)?;
                let slot = match key {
                    "min_age" => &mut manifest.min_age,
                    "max_age" => &mut manifest.max_age,
                    _ => &mut manifest.max_sojourn,
                };
                if slot.replace(v).is_some() {
                    return Err(duplicate());
                }
            }
            "force_absorption" => {
                let (c, t) = single()?;
                let v = match t {
                    "true" => true,
                    "false" => false,
                    _ => return Err(parse_error(ln, c, format!("expected true or false, found `{t}`"))),
                };
                if manifest.force_absorption.replace(v).is_some() {
                    return Err(duplicate());
                }
            }
            "calendar_start" => {
                let (c, t) = single()?;
                if manifest.calendar_start.replace(parse_num(ln, c, t, key)?).is_some() {
                    return Err(duplicate());
                }
            }
            "calendar_modifiers" => {
                if manifest.calendar_modifiers.is_some() {
                    return Err(duplicate());
                }
                let factors = toks
                    .iter()
                    .map(|(c, t)| parse_num(ln, *c, t, "calendar factor"))
                    .collect::<Result<Vec<f64>, _>>()?;
                manifest.calendar_modifiers = Some((ln, factors));
            }
            _ => return Err(parse_error(ln, key_col, format!("unknown key `{key}`"))),
        }
    }

    let eof = text.lines().count() + 1;
    if !saw_increments {
        return Err(parse_error(eof, 1, "missing `increments:` section"));
    }
    let missing = |k: &str| parse_error(eof, 1, format!("manifest is missing `{k}`"));
    let (states_line, labels) = manifest.states.ok_or_else(|| missing("states"))?;
    let (death_line, death_col, death) = manifest.death.ok_or_else(|| missing("death"))?;
    let max_age = manifest.max_age.ok_or_else(|| missing("max_age"))?;
    let max_sojourn = manifest.max_sojourn.ok_or_else(|| missing("max_sojourn"))?;
    let min_age = manifest.min_age.unwrap_or(0);

    if !labels.contains(&death) {
        return Err(parse_error(death_line, death_col, format!("unknown state `{death}`")));
    }
    let states = StateSpace::new(labels, &death).map_err(|e| parse_error(states_line, 1, e.to_string()))?;
    let n = states.len();
    let death_idx = states.death();
    let mut builder = KernelBuilder::new(states, min_age, max_age, max_sojourn)
        .map_err(|e| parse_error(eof, 1, e.to_string()))?
        .force_absorption(manifest.force_absorption.unwrap_or(false));
    match (manifest.calendar_modifiers, manifest.calendar_start) {
        (Some((ln, factors)), start) => {
            let modifier = CalendarModifier::new(start.unwrap_or(0), factors)
                .map_err(|e| parse_error(ln, 1, e.to_string()))?;
            builder = builder.calendar_modifier(modifier);
        }
        (None, Some(_)) => return Err(parse_error(eof, 1, "`calendar_start` without `calendar_modifiers`")),
        (None, None) => {}
    }

    let mut seen: BTreeSet<(usize, usize, u32, Option<i64>, u32)> = BTreeSet::new();
    for (ln, raw) in lines {
        let line = raw.split('#').next().unwrap_or("");
        let toks = tokens(line);
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 6 {
            let col = toks.get(6).map_or(toks[toks.len() - 1].0, |t| t.0);
            return Err(parse_error(
                ln,
                col,
                format!("expected 6 fields (from to age time sojourn probability), found {}", toks.len()),
            ));
        }
        let state = |(c, t): (usize, &str)| {
            builder
                .states()
                .index_of(t)
                .map_err(|_| parse_error(ln, c, format!("unknown state `{t}`")))
        };
        let from = state(toks[0])?;
        let to = state(toks[1])?;
        let ages: Vec<u32> = match toks[2].1 {
            "*" => Vec::new(),
            t => {
                let age: u32 = parse_num(ln, toks[2].0, t, "age")?;
                if age < min_age || age > max_age {
                    return Err(parse_error(
                        ln,
                        toks[2].0,
                        format!("age {age} outside [{min_age}, {max_age}]"),
                    ));
                }
                vec![age]
            }
        };
        let time: Option<i64> = match toks[3].1 {
            "*" => None,
            t => Some(parse_num(ln, toks[3].0, t, "time")?),
        };
        let sojourn: u32 = parse_num(ln, toks[4].0, toks[4].1, "sojourn")?;
        if sojourn == 0 || sojourn > max_sojourn {
            return Err(parse_error(
                ln,
                toks[4].0,
                format!("sojourn {sojourn} outside 1..={max_sojourn}"),
            ));
        }
        let p: f64 = parse_num(ln, toks[5].0, toks[5].1, "probability")?;
        if !p.is_finite() {
            return Err(parse_error(ln, toks[5].0, format!("probability `{}` is not finite", toks[5].1)));
        }
        let ages = if ages.is_empty() {
            (min_age..max_age)
                .filter(|a| {
                    let end = a + sojourn;
                    end < max_age || (to == death_idx && end == max_age)
                })
                .collect()
        } else {
            ages
        };
        for age in ages {
            if !seen.insert((from, to, age, time, sojourn)) {
                return Err(parse_error(
                    ln,
                    1,
                    format!(
                        "increment {} -> {} age {age} time {} sojourn {sojourn} set twice",
                        toks[0].1,
                        toks[1].1,
                        time.map_or("*".to_string(), |t| t.to_string())
                    ),
                ));
            }
            let result = match time {
                None => builder.set(from, to, age, sojourn, p).map(|_| ()),
                Some(t) => builder.set_at_time(from, to, age, t, sojourn, p).map(|_| ()),
            };
            result.map_err(|e| parse_error(ln, 1, e.to_string()))?;
        }
    }
    debug_assert!(n >= 2);
    Ok(builder.build_unchecked())
}

/// Parses and validates a kernel file's contents.
pub fn parse_kernel(text: &str) -> Result<Kernel, IoError> {
    let kernel = parse_kernel_unchecked(text)?;
    let report = super::validate_kernel(&kernel);
    if report.is_valid() {
        Ok(kernel)
    } else {
        Err(IoError::Invalid(report))
    }
}

/// Reads a kernel file without validating it.
pub fn read_kernel_unchecked(path: impl AsRef<Path>) -> Result<Kernel, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(file_error(path))?;
    parse_kernel_unchecked(&text)
}

/// Reads and validates a kernel file.
pub fn load_kernel(path: impl AsRef<Path>) -> Result<Kernel, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(file_error(path))?;
    parse_kernel(&text)
}

/// Renders a kernel in the file format, one record per nonzero increment.
/// Explicit rows that are entirely zero keep one zero record so they
/// survive a round trip.
pub fn export_kernel(kernel: &Kernel) -> String {
    let states = kernel.states();
    let n = states.len();
    let m = kernel.max_sojourn() as usize;
    let mut out = String::new();
    let _ = writeln!(out, "states: {}", states.labels().join(" "));
    let _ = writeln!(out, "death: {}", states.label(states.death()));
    let _ = writeln!(out, "min_age: {}", kernel.min_age());
    let _ = writeln!(out, "max_age: {}", kernel.max_age());
    let _ = writeln!(out, "max_sojourn: {}", kernel.max_sojourn());
    let _ = writeln!(out, "force_absorption: {}", kernel.force_absorption());
    if let Some(c) = kernel.calendar_modifier() {
        let factors: Vec<String> = c.factors().iter().map(|f| g17(*f)).collect();
        let _ = writeln!(out, "calendar_start: {}", c.start());
        let _ = writeln!(out, "calendar_modifiers: {}", factors.join(" "));
    }
    out.push_str("increments:\n");
    let record = |out: &mut String, from: usize, to: usize, age: u32, time: &str, d: usize, p: f64| {
        let _ = writeln!(
            out,
            "{} {} {age} {time} {d} {}",
            states.label(from),
            states.label(to),
            g17(p)
        );
    };
    for from in 0..n {
        for age in kernel.min_age()..=kernel.max_age() {
            let row = kernel.base_row(from, age);
            for to in 0..n {
                for d in 1..=m {
                    let p = row[to * m + d - 1];
                    if p != 0.0 {
                        record(&mut out, from, to, age, "*", d, p);
                    }
                }
            }
        }
    }
    for (&(from, age, time), row) in kernel.explicit_rows() {
        let time = time.to_string();
        let mut wrote = false;
        for to in 0..n {
            for d in 1..=m {
                let p = row[to * m + d - 1];
                if p != 0.0 {
                    record(&mut out, from, to, age, &time, d, p);
                    wrote = true;
                }
            }
        }
        if !wrote {
            record(&mut out, from, states.death(), age, &time, 1, 0.0);
        }
    }
    out
}

pub fn write_kernel(kernel: &Kernel, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, export_kernel(kernel)).map_err(file_error(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::geometric_kernel;

    const SMALL: &str = "\
# two states
states: H D
death: D
min_age: 40
max_age: 43
max_sojourn: 3
force_absorption: true
increments:
H D * * 1 0.2   # any age
H D 41 * 2 0.5
";

    #[test]
    fn parses_wildcards_and_specific_ages() {
        let k = parse_kernel(SMALL).unwrap();
        assert_eq!(k.increment(0, 1, 40, 0, 1).unwrap(), 0.2);
        assert_eq!(k.increment(0, 1, 41, 7, 1).unwrap(), 0.2);
        assert_eq!(k.increment(0, 1, 42, 7, 1).unwrap(), 1.0);
        // 0.5 as written plus the 0.3 top-up on the last sojourn
        assert!((k.increment(0, 1, 41, 0, 2).unwrap() - 0.8).abs() < 1e-15);
        // forced top-up on the final admissible sojourn
        assert!((k.increment(0, 1, 40, 0, 3).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let bad = SMALL.replace("H D 41 * 2 0.5", "H X 41 * 2 0.5");
        match parse_kernel(&bad) {
            Err(IoError::Parse { line, column, message }) => {
                assert_eq!((line, column), (10, 3));
                assert!(message.contains("unknown state `X`"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = SMALL.replace("H D 41 * 2 0.5", "H D 41 * 2 0,5");
        assert!(matches!(
            parse_kernel(&bad),
            Err(IoError::Parse { line: 10, column: 12, .. })
        ));
        let bad = SMALL.replace("max_sojourn: 3", "max_sojourn 3");
        assert!(matches!(parse_kernel(&bad), Err(IoError::Parse { line: 6, .. })));
        let bad = format!("{SMALL}H D 40 * 1 0.1\n");
        assert!(matches!(parse_kernel(&bad), Err(IoError::Parse { line: 11, .. })));
    }

    #[test]
    fn explicit_rows_override_the_base() {
        let text = format!("{SMALL}H D 40 5 1 0.9\nH D 41 6 1 0\n");
        let k = parse_kernel(&text).unwrap();
        assert_eq!(k.increment(0, 1, 40, 5, 1).unwrap(), 0.9);
        assert_eq!(k.increment(0, 1, 40, 4, 1).unwrap(), 0.2);
        assert_eq!(k.increment(0, 1, 41, 6, 2).unwrap(), 1.0);
    }

    #[test]
    fn round_trip_is_identical() {
        let text = format!(
            "{}H D 40 5 1 0.9\nH D 41 6 1 0\n",
            SMALL.replace("increments:", "calendar_start: 2\ncalendar_modifiers: 1 0.7\nincrements:")
        );
        let k = parse_kernel(&text).unwrap();
        assert_eq!(parse_kernel(&export_kernel(&k)).unwrap(), k);
        let geo = geometric_kernel(0.3, 20, 60).unwrap();
        assert_eq!(parse_kernel(&export_kernel(&geo)).unwrap(), geo);
    }

    #[test]
    fn invalid_kernels_are_reported() {
        let text = SMALL.replace("H D 41 * 2 0.5", "H D 41 * 2 0.85");
        match parse_kernel(&text) {
            Err(IoError::Invalid(report)) => {
                assert_eq!(report.violations.len(), 1);
                assert!(report.violation_lines()[0].starts_with("row-mass-exceeded: state H age 41 time *"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
