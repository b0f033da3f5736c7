//! Line-oriented text format for trajectories.
//!
//! ```text
//! mems-trajectory 1
//! kind parabolic
//! lambda 1.0000000000000000e0
//! dt ...
//! touch_eps ...
//! termination completed
//! touch_time none
//! k 16
//! samples 3
//! velocity no
//! g <t> <g_1> ... <g_K>
//! v <v_1> ... <v_K>            (only when velocity = yes)
//! s <supnorm> <l2norm> <energy> <mass> [<velocity_norm>]
//! ```
//!
//! Every float carries 17 significant digits, so reading back is exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::galerkin::{GalerkinState, Kind, Series, Termination, Trajectory};

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "mems-trajectory";

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse(format!("{what}: cannot read '{s}' as a number")))
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Parabolic => "parabolic",
        Kind::Hyperbolic => "hyperbolic",
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Completed => "completed",
        Termination::Touchdown => "touchdown",
        Termination::Diverged => "diverged",
    }
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_f64).collect::<Vec<_>>().join(" ")
}

/// Render a trajectory in the text format.
pub fn format_trajectory(traj: &Trajectory) -> Result<String> {
    if traj.is_empty() {
        return Err(Error::InsufficientSamples("cannot write an empty trajectory".into()));
    }
    let k = traj.states[0].coeffs.len();
    let with_v = traj.states[0].velocity.is_some();
    let s = &traj.series;
    if [s.supnorm.len(), s.l2norm.len(), s.energy.len(), s.mass.len()]
        .iter()
        .any(|&l| l != traj.len())
    {
        return Err(Error::LengthMismatch {
            expected: traj.len(),
            got: s.supnorm.len(),
        });
    }
    let mut out = String::new();
    out += &format!("{MAGIC} {TRAJECTORY_FORMAT_VERSION}\n");
    out += &format!("kind {}\n", kind_name(traj.kind));
    out += &format!("lambda {}\n", fmt_f64(traj.lambda));
    out += &format!("dt {}\n", fmt_f64(traj.dt));
    out += &format!("touch_eps {}\n", fmt_f64(traj.touch_eps));
    out += &format!("termination {}\n", termination_name(traj.termination));
    out += &match traj.touch_time {
        Some(t) => format!("touch_time {}\n", fmt_f64(t)),
        None => "touch_time none\n".to_string(),
    };
    out += &format!("k {k}\n");
    out += &format!("samples {}\n", traj.len());
    out += &format!("velocity {}\n", if with_v { "yes" } else { "no" });
    for (i, st) in traj.states.iter().enumerate() {
        if st.coeffs.len() != k || st.velocity.is_some() != with_v {
            return Err(Error::LengthMismatch {
                expected: k,
                got: st.coeffs.len(),
            });
        }
        out += &format!("g {} {}\n", fmt_f64(st.t), join(st.coeffs.iter().copied()));
        if let Some(v) = &st.velocity {
            out += &format!("v {}\n", join(v.iter().copied()));
        }
        let mut row = vec![s.supnorm[i], s.l2norm[i], s.energy[i], s.mass[i]];
        if let Some(vn) = &s.velocity_norm {
            row.push(vn[i]);
        }
        out += &format!("s {}\n", join(row));
    }
    Ok(out)
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let text = format_trajectory(traj)?;
    fs::write(path, text)?;
    Ok(())
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let (i, l) = self
            .it
            .next()
            .ok_or_else(|| Error::Parse(format!("unexpected end of file, expected {what}")))?;
        Ok((i + 1, l.split_whitespace().collect()))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let (line, parts) = self.next(key)?;
        match parts.as_slice() {
            [k, v] if *k == key => Ok(v),
            _ => Err(Error::Parse(format!("line {line}: expected '{key} <value>'"))),
        }
    }
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let mut lines = Lines {
        it: text.lines().enumerate(),
    };
    let (_, head) = lines.next("header")?;
    if head.len() != 2 || head[0] != MAGIC {
        return Err(Error::Parse("not a trajectory file".into()));
    }
    let version: u32 = head[1]
        .parse()
        .map_err(|_| Error::Parse(format!("bad format version '{}'", head[1])))?;
    if version != TRAJECTORY_FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch {
            found: version,
            supported: TRAJECTORY_FORMAT_VERSION,
        });
    }
    let kind = match lines.keyed("kind")? {
        "parabolic" => Kind::Parabolic,
        "hyperbolic" => Kind::Hyperbolic,
        other => return Err(Error::Parse(format!("unknown kind '{other}'"))),
    };
    let lambda = parse_f64(lines.keyed("lambda")?, "lambda")?;
    let dt = parse_f64(lines.keyed("dt")?, "dt")?;
    let touch_eps = parse_f64(lines.keyed("touch_eps")?, "touch_eps")?;
    let termination = match lines.keyed("termination")? {
        "completed" => Termination::Completed,
        "touchdown" => Termination::Touchdown,
        "diverged" => Termination::Diverged,
        other => return Err(Error::Parse(format!("unknown termination '{other}'"))),
    };
    let touch_time = match lines.keyed("touch_time")? {
        "none" => None,
        v => Some(parse_f64(v, "touch_time")?),
    };
    let k: usize = lines
        .keyed("k")?
        .parse()
        .map_err(|_| Error::Parse("bad k".into()))?;
    let n: usize = lines
        .keyed("samples")?
        .parse()
        .map_err(|_| Error::Parse("bad sample count".into()))?;
    let with_v = match lines.keyed("velocity")? {
        "yes" => true,
        "no" => false,
        other => return Err(Error::Parse(format!("velocity must be yes or no, got '{other}'"))),
    };
    if n == 0 {
        return Err(Error::InsufficientSamples("trajectory file holds no samples".into()));
    }
    let numbers = |line: usize, tag: &str, parts: &[&str], want: usize| -> Result<Vec<f64>> {
        if parts.first() != Some(&tag) || parts.len() != want + 1 {
            return Err(Error::Parse(format!(
                "line {line}: expected '{tag}' followed by {want} numbers"
            )));
        }
        parts[1..].iter().map(|s| parse_f64(s, tag)).collect()
    };
    let mut states = Vec::with_capacity(n);
    let mut series = Series {
        velocity_norm: if with_v { Some(Vec::new()) } else { None },
        ..Series::default()
    };
    for _ in 0..n {
        let (line, parts) = lines.next("a 'g' line")?;
        let g = numbers(line, "g", &parts, k + 1)?;
        let velocity = if with_v {
            let (line, parts) = lines.next("a 'v' line")?;
            Some(numbers(line, "v", &parts, k)?)
        } else {
            None
        };
        let (line, parts) = lines.next("an 's' line")?;
        let s = numbers(line, "s", &parts, if with_v { 5 } else { 4 })?;
        series.supnorm.push(s[0]);
        series.l2norm.push(s[1]);
        series.energy.push(s[2]);
        series.mass.push(s[3]);
        if let Some(vn) = series.velocity_norm.as_mut() {
            vn.push(s[4]);
        }
        states.push(GalerkinState {
            t: g[0],
            coeffs: g[1..].to_vec(),
            velocity,
        });
    }
    if let Some((i, l)) = lines.it.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::Parse(format!("line {}: trailing content '{l}'", i + 1)));
    }
    Ok(Trajectory {
        kind,
        lambda,
        dt,
        touch_eps,
        states,
        series,
        termination,
        touch_time,
    })
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    parse_trajectory(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, with_v: bool) -> Trajectory {
        let states: Vec<GalerkinState> = (0..n)
            .map(|i| GalerkinState {
                t: i as f64 * 0.1 + 1e-17,
                coeffs: vec![1.0 / (i + 3) as f64, -std::f64::consts::PI * i as f64, 1e-300],
                velocity: with_v.then(|| vec![0.1 * i as f64, f64::MIN_POSITIVE, -2.5]),
            })
            .collect();
        let f = |i: usize| (i as f64).sqrt() / 7.0;
        Trajectory {
            kind: if with_v { Kind::Hyperbolic } else { Kind::Parabolic },
            lambda: 1.0 / 3.0,
            dt: 0.1,
            touch_eps: 1e-4,
            series: Series {
                supnorm: (0..n).map(f).collect(),
                l2norm: (0..n).map(|i| f(i) * 2.0).collect(),
                energy: (0..n).map(|i| f(i) * 3.0).collect(),
                mass: (0..n).map(|i| -f(i)).collect(),
                velocity_norm: with_v.then(|| (0..n).map(|i| f(i) + 0.5).collect()),
            },
            states,
            termination: Termination::Touchdown,
            touch_time: Some(0.12345678901234568),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for with_v in [false, true] {
            let t = sample(100, with_v);
            let back = parse_trajectory(&format_trajectory(&t).unwrap()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn newer_version_rejected() {
        let text = format_trajectory(&sample(3, false))
            .unwrap()
            .replacen("mems-trajectory 1", "mems-trajectory 2", 1);
        assert!(matches!(
            parse_trajectory(&text),
            Err(Error::FormatVersionMismatch { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn empty_rejected_on_write() {
        let mut t = sample(1, false);
        t.states.clear();
        assert!(matches!(format_trajectory(&t), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = format_trajectory(&sample(4, true)).unwrap();
        let cut: String = text.lines().take(14).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_trajectory(&cut), Err(Error::Parse(_))));
    }
}
