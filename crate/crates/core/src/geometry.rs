//! Planar geometry predicates shared by every model.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Crack, SampleGeometry, Side};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Unit vector at `theta_deg` from +x.
    pub fn from_angle_deg(theta_deg: f64) -> Self {
        let (s, c) = theta_deg.to_radians().sin_cos();
        Self::new(c, s)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Both tips of an interior crack, the one with smaller x first (ties by y).
pub fn tip_positions(crack: &Crack) -> Result<(Point, Point)> {
    if !crack.is_interior() {
        return Err(Error::NoTips(crack.id));
    }
    let half = Point::from_angle_deg(crack.theta_deg) * (crack.length / 2.0);
    let a = crack.center - half;
    let b = crack.center + half;
    if (a.x, a.y) <= (b.x, b.y) {
        Ok((a, b))
    } else {
        Ok((b, a))
    }
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Distance from `p` to an open polyline given by its vertices.
pub fn point_polyline_distance(p: Point, vertices: &[Point]) -> f64 {
    match vertices {
        [] => f64::INFINITY,
        [only] => p.dist(*only),
        _ => vertices
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Distance from a tip to the body of `target`; lateral boundaries are
/// measured horizontally.
pub fn tip_to_body_distance(tip: Point, target: &Crack, geometry: &SampleGeometry) -> f64 {
    match target.side() {
        Some(Side::Left) => tip.x.abs(),
        Some(Side::Right) => (tip.x - geometry.w).abs(),
        None => {
            let half = Point::from_angle_deg(target.theta_deg) * (target.length / 2.0);
            point_segment_distance(tip, target.center - half, target.center + half)
        }
    }
}

/// Closed interval on the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Orthogonal (horizontal) projection of a crack: length `ℓ·|cos θ|` centred
/// on the crack centre.
pub fn horizontal_projection(crack: &Crack) -> Interval {
    let half = 0.5 * crack.length * crack.theta_rad().cos().abs();
    Interval::new(crack.center.x - half, crack.center.x + half)
}

/// Sorts and merges overlapping (or touching) intervals.
pub fn merge_intervals(intervals: &[Interval]) -> Vec<Interval> {
    let mut sorted: Vec<Interval> = intervals.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
    let mut merged: Vec<Interval> = Vec::with_capacity(sorted.len());
    for iv in sorted {
        match merged.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => merged.push(iv),
        }
    }
    merged
}

/// True when the union of the intervals covers `[0, w]`.
pub fn spans_width(intervals: &[Interval], geometry: &SampleGeometry) -> bool {
    merge_intervals(intervals)
        .iter()
        .any(|iv| iv.lo <= 0.0 && iv.hi >= geometry.w)
}
