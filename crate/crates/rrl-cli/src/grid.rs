//! Parameter grid syntax: a bare number, a comma list, or `lo:hi:count`
//! with an optional `:log` suffix for geometric spacing.

use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.contains(',') {
            let vals = s
                .split(',')
                .map(|part| {
                    part.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad grid element {part:?}"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if vals.is_empty() {
                return Err("empty grid".into());
            }
            return check_finite(vals);
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [one] => {
                let v = one.parse::<f64>().map_err(|_| format!("bad grid value {one:?}"))?;
                check_finite(vec![v])
            }
            [lo, hi, count] | [lo, hi, count, _] => {
                let log = match parts.as_slice() {
                    [_, _, _] => false,
                    [_, _, _, tag] if *tag == "log" => true,
                    [_, _, _, tag] => return Err(format!("unknown grid suffix {tag:?}")),
                    _ => unreachable!(),
                };
                let lo = lo.parse::<f64>().map_err(|_| format!("bad grid bound {lo:?}"))?;
                let hi = hi.parse::<f64>().map_err(|_| format!("bad grid bound {hi:?}"))?;
                let count =
                    count.parse::<usize>().map_err(|_| format!("bad grid count {count:?}"))?;
                if count == 0 {
                    return Err("grid count must be positive".into());
                }
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(format!("bad grid range {lo}..{hi}"));
                }
                if count == 1 {
                    if lo != hi {
                        return Err("single-point grid needs equal bounds".into());
                    }
                    return Ok(Grid(vec![lo]));
                }
                if log && lo <= 0.0 {
                    return Err("log spacing needs a positive lower bound".into());
                }
                let n = count as f64 - 1.0;
                let vals = (0..count)
                    .map(|k| {
                        if log {
                            lo * (hi / lo).powf(k as f64 / n)
                        } else {
                            lo + (hi - lo) * k as f64 / n
                        }
                    })
                    .collect();
                Ok(Grid(vals))
            }
            _ => Err(format!("bad grid spec {s:?}")),
        }
    }
}

fn check_finite(vals: Vec<f64>) -> Result<Grid, String> {
    if vals.iter().any(|v| !v.is_finite()) {
        return Err("grid values must be finite".into());
    }
    Ok(Grid(vals))
}
