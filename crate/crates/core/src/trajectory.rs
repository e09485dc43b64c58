//! The trajectory sample schema shared by policy rollouts and the analytic
//! baseline, and its CSV encoding.

use std::io::{self, Write};

use crate::env::{distance, CarState, Point};

pub const TRAJECTORY_HEADER: &str = "t,x_p,y_p,phi,u,x_e,y_e,L";

/// One sample. `u` is the control held from `t` until the next sample
/// (zero on the final sample).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x_p: f64,
    pub y_p: f64,
    pub phi: f64,
    pub u: f64,
    pub x_e: f64,
    pub y_e: f64,
    pub l: f64,
}

impl TrajectoryRow {
    pub fn new(t: f64, car: CarState, u: f64, target: Point) -> Self {
        Self {
            t,
            x_p: car.x,
            y_p: car.y,
            phi: car.phi,
            u,
            x_e: target[0],
            y_e: target[1],
            l: distance(car.position(), target),
        }
    }

    pub fn car(&self) -> CarState {
        CarState {
            x: self.x_p,
            y: self.y_p,
            phi: self.phi,
        }
    }

    fn fields(&self) -> [f64; 8] {
        [self.t, self.x_p, self.y_p, self.phi, self.u, self.x_e, self.y_e, self.l]
    }
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(mut w: W, rows: &[TrajectoryRow]) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for row in rows {
        let line: Vec<String> = row.fields().iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn to_csv_string(rows: &[TrajectoryRow]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

/// Parses the output of [`write_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<TrajectoryRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRAJECTORY_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.parse::<f64>().map_err(|e| format!("{f:?}: {e}")))
                .collect::<Result<_, _>>()?;
            if v.len() != 8 {
                return Err(format!("expected 8 fields, got {}", v.len()));
            }
            Ok(TrajectoryRow {
                t: v[0],
                x_p: v[1],
                y_p: v[2],
                phi: v[3],
                u: v[4],
                x_e: v[5],
                y_e: v[6],
                l: v[7],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trips_exactly(vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 8)) {
            let row = TrajectoryRow {
                t: vals[0], x_p: vals[1], y_p: vals[2], phi: vals[3],
                u: vals[4], x_e: vals[5], y_e: vals[6], l: vals[7],
            };
            let parsed = parse_csv(&to_csv_string(&[row])).unwrap();
            prop_assert_eq!(parsed.len(), 1);
            for (a, b) in parsed[0].fields().iter().zip(row.fields()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn header_is_fixed() {
        let text = to_csv_string(&[]);
        assert_eq!(text, "t,x_p,y_p,phi,u,x_e,y_e,L\n");
        assert!(parse_csv("a,b\n").is_err());
    }
}
