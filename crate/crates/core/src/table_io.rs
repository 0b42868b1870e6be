//! Text persistence for solved tables.
//!
//! ```text
//! # USS1
//! # n=<n>
//! # d=<d>
//! # m=<grid size>
//! # tol_x=<bisection tolerance>
//! # tie_tol=<indifference tolerance>
//! v,<i>,<k>,<m values>        one row per (i, k), i in 1..=n+1
//! a,<i>,<k>,<m values>        one row per (i, k), i in 1..=n
//! b,<i>,<k>,<m values>
//! ```
//!
//! Numbers are written with 17 significant digits so that loading
//! reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::bellman::{ProblemSpec, ThresholdTable, ValueTable, TIE_TOL, TOL_X};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "USS1";

fn write_row<W: Write>(out: &mut W, kind: char, i: usize, k: usize, row: &[f64]) -> Result<()> {
    write!(out, "{kind},{i},{k}")?;
    for v in row {
        write!(out, ",{v:.16e}")?;
    }
    writeln!(out)?;
    Ok(())
}

pub fn write_tables<W: Write>(out: W, vt: &ValueTable, tt: &ThresholdTable) -> Result<()> {
    if vt.spec() != tt.spec() {
        return Err(Error::Config(
            "value and threshold tables belong to different problems".into(),
        ));
    }
    let spec = vt.spec();
    let mut out = BufWriter::new(out);
    writeln!(out, "# {FORMAT_VERSION}")?;
    writeln!(out, "# n={}", spec.n())?;
    writeln!(out, "# d={}", spec.d())?;
    writeln!(out, "# m={}", spec.grid_size())?;
    writeln!(out, "# tol_x={TOL_X:e}")?;
    writeln!(out, "# tie_tol={TIE_TOL:e}")?;
    for i in 1..=spec.n() + 1 {
        for k in 0..=spec.d() {
            write_row(&mut out, 'v', i, k, vt.row(i, k))?;
        }
    }
    for i in 1..=spec.n() {
        for k in 0..=spec.d() {
            write_row(&mut out, 'a', i, k, tt.lower_row(i, k))?;
        }
    }
    for i in 1..=spec.n() {
        for k in 0..=spec.d() {
            write_row(&mut out, 'b', i, k, tt.upper_row(i, k))?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Default)]
struct Header {
    version: bool,
    n: Option<usize>,
    d: Option<usize>,
    m: Option<usize>,
}

fn parse_header(line: &str, lineno: usize, header: &mut Header) -> Result<()> {
    let body = line.trim_start_matches('#').trim();
    if body == FORMAT_VERSION {
        header.version = true;
        return Ok(());
    }
    let Some((key, value)) = body.split_once('=') else {
        return Ok(());
    };
    let parse = |v: &str| {
        v.trim().parse::<usize>().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad value for {key}: {e}"),
        })
    };
    match key.trim() {
        "n" => header.n = Some(parse(value)?),
        "d" => header.d = Some(parse(value)?),
        "m" => header.m = Some(parse(value)?),
        _ => {}
    }
    Ok(())
}

pub fn read_tables<R: BufRead>(input: R) -> Result<(ValueTable, ThresholdTable)> {
    let mut header = Header::default();
    let mut spec: Option<ProblemSpec> = None;
    let (mut values, mut lower, mut upper) = (Vec::new(), Vec::new(), Vec::new());
    let mut expected_next = ('v', 1usize, 0usize);

    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if spec.is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "header line after data".into(),
                });
            }
            parse_header(&line, lineno, &mut header)?;
            continue;
        }
        let spec = match spec {
            Some(s) => s,
            None => {
                if !header.version {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("missing {FORMAT_VERSION} version header"),
                    });
                }
                let (Some(n), Some(d), Some(m)) = (header.n, header.d, header.m) else {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "header must define n, d and m".into(),
                    });
                };
                *spec.insert(ProblemSpec::new(n, d, m)?)
            }
        };

        let mut fields = line.split(',');
        let bad = |msg: String| Error::Parse { line: lineno, msg };
        let kind = fields.next().unwrap_or_default();
        let i: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("missing time index".into()))?;
        let k: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("missing block index".into()))?;
        let kind = kind.chars().next().filter(|_| kind.len() == 1);
        if (kind, i, k) != (Some(expected_next.0), expected_next.1, expected_next.2) {
            return Err(bad(format!(
                "expected row {},{},{}",
                expected_next.0, expected_next.1, expected_next.2
            )));
        }
        let target = match expected_next.0 {
            'v' => &mut values,
            'a' => &mut lower,
            _ => &mut upper,
        };
        let before = target.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|e| bad(format!("bad number {f:?}: {e}")))?;
            target.push(v);
        }
        if target.len() - before != spec.grid_size() {
            return Err(bad(format!(
                "row has {} values, expected {}",
                target.len() - before,
                spec.grid_size()
            )));
        }

        expected_next = next_row(&spec, expected_next);
    }

    let spec = spec.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "no table rows".into(),
    })?;
    if expected_next != ('.', 0, 0) {
        return Err(Error::Parse {
            line: 0,
            msg: format!(
                "table truncated before row {},{},{}",
                expected_next.0, expected_next.1, expected_next.2
            ),
        });
    }
    Ok((
        ValueTable::from_raw(spec, values)?,
        ThresholdTable::from_raw(spec, lower, upper)?,
    ))
}

fn next_row(spec: &ProblemSpec, (kind, i, k): (char, usize, usize)) -> (char, usize, usize) {
    if k < spec.d() {
        return (kind, i, k + 1);
    }
    let last_i = if kind == 'v' { spec.n() + 1 } else { spec.n() };
    if i < last_i {
        return (kind, i + 1, 0);
    }
    match kind {
        'v' => ('a', 1, 0),
        'a' => ('b', 1, 0),
        _ => ('.', 0, 0),
    }
}

pub fn save(path: &Path, vt: &ValueTable, tt: &ThresholdTable) -> Result<()> {
    write_tables(File::create(path)?, vt, tt)
}

pub fn load(path: &Path) -> Result<(ValueTable, ThresholdTable)> {
    read_tables(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::{compute_thresholds, solve_value_table};

    fn tables(n: usize, d: usize, m: usize) -> (ValueTable, ThresholdTable) {
        let vt = solve_value_table(&ProblemSpec::new(n, d, m).unwrap());
        let tt = compute_thresholds(&vt).unwrap();
        (vt, tt)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for (n, d, m) in [(1, 0, 2), (7, 2, 33), (25, 1, 101)] {
            let (vt, tt) = tables(n, d, m);
            let mut buf = Vec::new();
            write_tables(&mut buf, &vt, &tt).unwrap();
            let (vt2, tt2) = read_tables(buf.as_slice()).unwrap();
            assert_eq!(vt, vt2);
            assert_eq!(tt, tt2);
        }
    }

    #[test]
    fn header_carries_version_and_spec() {
        let (vt, tt) = tables(3, 1, 5);
        let mut buf = Vec::new();
        write_tables(&mut buf, &vt, &tt).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let head: Vec<&str> = text.lines().take(6).collect();
        assert_eq!(head[0], "# USS1");
        assert_eq!(&head[1..4], &["# n=3", "# d=1", "# m=5"]);
        assert!(head[4].starts_with("# tol_x="));
        // 4 value stages + 3 + 3 threshold stages, two blocks each
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 20);
    }

    #[test]
    fn truncated_and_malformed_files_are_rejected() {
        let (vt, tt) = tables(3, 1, 5);
        let mut buf = Vec::new();
        write_tables(&mut buf, &vt, &tt).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let truncated: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            read_tables(truncated.as_bytes()),
            Err(Error::Parse { .. })
        ));

        let no_version = text.replacen("# USS1", "# USS0", 1);
        assert!(read_tables(no_version.as_bytes()).is_err());

        let bad_number = text.replacen("v,1,0,", "v,1,0,abc,", 1);
        assert!(matches!(
            read_tables(bad_number.as_bytes()),
            Err(Error::Parse { line: 7, .. })
        ));
    }

    #[test]
    fn save_and_load_through_a_file() {
        let (vt, tt) = tables(10, 2, 21);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.uss");
        save(&path, &vt, &tt).unwrap();
        let (vt2, tt2) = load(&path).unwrap();
        assert_eq!(vt.raw(), vt2.raw());
        assert_eq!(tt.raw(), tt2.raw());
        assert!(matches!(
            load(&dir.path().join("missing")),
            Err(Error::Io(_))
        ));
    }
}
