use std::cmp::Ordering;
use std::io::Write;

use num_rational::BigRational;
use num_traits::Signed;

use crate::error::{Error, Result};
use crate::odesolve::{csv_err, Trajectory};
use crate::scalar::Scalar;

pub type Point = [f64; 2];

/// Segment `segment_a` of path `sample_a` properly crosses segment `segment_b` of
/// path `sample_b`. Always stored with `(sample_a, segment_a) < (sample_b, segment_b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub sample_a: usize,
    pub segment_a: usize,
    pub sample_b: usize,
    pub segment_b: usize,
    pub point: Point,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CrossingReport {
    pub crossings: Vec<Crossing>,
}

impl CrossingReport {
    pub fn count(&self) -> usize {
        self.crossings.len()
    }

    /// Samples involved in at least one crossing.
    pub fn samples(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.crossings.iter().flat_map(|c| [c.sample_a, c.sample_b]).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Writes `sample_a,segment_a,sample_b,segment_b,x,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sample_a", "segment_a", "sample_b", "segment_b", "x", "y"])
            .map_err(csv_err)?;
        for c in &self.crossings {
            w.write_record([
                c.sample_a.to_string(),
                c.segment_a.to_string(),
                c.sample_b.to_string(),
                c.segment_b.to_string(),
                c.point[0].to_string(),
                c.point[1].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("crossing csv", e))
    }
}

/// Splits a batched trajectory into one polyline per sample. Only planar states are
/// supported; project higher-dimensional states first or skip the check.
pub fn planar_paths<T: Scalar>(traj: &Trajectory<T>) -> Result<Vec<Vec<Point>>> {
    let first = &traj.states[0];
    if first.cols() != 2 {
        return Err(Error::NonPlanar(first.cols()));
    }
    Ok((0..first.rows())
        .map(|r| {
            traj.states
                .iter()
                .map(|s| [s.get(r, 0).to_f64_lossy(), s.get(r, 1).to_f64_lossy()])
                .collect()
        })
        .collect())
}

/// Sign of the cross product `(b - a) x (c - a)`, exact for all finite inputs.
pub fn orientation(a: Point, b: Point, c: Point) -> Ordering {
    let left = (b[0] - a[0]) * (c[1] - a[1]);
    let right = (b[1] - a[1]) * (c[0] - a[0]);
    let det = left - right;
    // Shewchuk's first-stage bound; covers the rounding of the differences too.
    let bound = (3.0 + 16.0 * f64::EPSILON) * f64::EPSILON * (left.abs() + right.abs());
    if det > bound {
        return Ordering::Greater;
    }
    if -det > bound {
        return Ordering::Less;
    }
    orientation_exact(a, b, c)
}

fn orientation_exact(a: Point, b: Point, c: Point) -> Ordering {
    let q = |v: f64| BigRational::from_float(v).expect("finite coordinate");
    let (ax, ay, bx, by, cx, cy) = (q(a[0]), q(a[1]), q(b[0]), q(b[1]), q(c[0]), q(c[1]));
    let det = (bx - &ax) * (cy - &ay) - (by - ay) * (cx - ax);
    if det.is_positive() {
        Ordering::Greater
    } else if det.is_negative() {
        Ordering::Less
    } else {
        Ordering::Equal
    }
}

/// Whether the open segments `pq` and `rs` cross at a single interior point.
/// Touching, collinear overlap, and endpoint contact do not count.
pub fn segments_cross(p: Point, q: Point, r: Point, s: Point) -> bool {
    let o1 = orientation(p, q, r);
    let o2 = orientation(p, q, s);
    let o3 = orientation(r, s, p);
    let o4 = orientation(r, s, q);
    o1 != Ordering::Equal && o3 != Ordering::Equal && o1 == o2.reverse() && o3 == o4.reverse()
}

fn intersection_point(p: Point, q: Point, r: Point, s: Point) -> Point {
    let d1 = [q[0] - p[0], q[1] - p[1]];
    let d2 = [s[0] - r[0], s[1] - r[1]];
    let denom = d1[0] * d2[1] - d1[1] * d2[0];
    let t = ((r[0] - p[0]) * d2[1] - (r[1] - p[1]) * d2[0]) / denom;
    [p[0] + t * d1[0], p[1] + t * d1[1]]
}

struct Segment {
    sample: usize,
    index: usize,
    p: Point,
    q: Point,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

/// All proper crossings between segments of the given polylines. Adjacent segments
/// of one path and segment pairs that share an endpoint are excluded.
pub fn detect_crossings(paths: &[Vec<Point>]) -> Result<CrossingReport> {
    let mut segments = Vec::new();
    for (sample, path) in paths.iter().enumerate() {
        if path.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trajectory {sample}")));
        }
        for (index, w) in path.windows(2).enumerate() {
            let (p, q) = (w[0], w[1]);
            segments.push(Segment {
                sample,
                index,
                p,
                q,
                x_min: p[0].min(q[0]),
                x_max: p[0].max(q[0]),
                y_min: p[1].min(q[1]),
                y_max: p[1].max(q[1]),
            });
        }
    }
    segments.sort_by(|a, b| a.x_min.total_cmp(&b.x_min));

    let mut crossings = Vec::new();
    for (i, a) in segments.iter().enumerate() {
        for b in &segments[i + 1..] {
            if b.x_min > a.x_max {
                break;
            }
            if b.y_min > a.y_max || a.y_min > b.y_max {
                continue;
            }
            if a.sample == b.sample && a.index.abs_diff(b.index) <= 1 {
                continue;
            }
            if a.p == b.p || a.p == b.q || a.q == b.p || a.q == b.q {
                continue;
            }
            if segments_cross(a.p, a.q, b.p, b.q) {
                let (first, second) = if (a.sample, a.index) < (b.sample, b.index) {
                    (a, b)
                } else {
                    (b, a)
                };
                crossings.push(Crossing {
                    sample_a: first.sample,
                    segment_a: first.index,
                    sample_b: second.sample,
                    segment_b: second.index,
                    point: intersection_point(first.p, first.q, second.p, second.q),
                });
            }
        }
    }
    crossings.sort_by_key(|c| (c.sample_a, c.segment_a, c.sample_b, c.segment_b));
    Ok(CrossingReport { crossings })
}
