//! Non-decreasing piecewise-linear functions of time.
//!
//! A [`Plf`] is described by breakpoints `(t, v)` with strictly increasing
//! times, a constant value before the first breakpoint, linear interpolation
//! between breakpoints, and a non-negative slope after the last one. The set
//! is closed under the operations the maturity computations need: sums,
//! scaling, and the clamp `max(0, f - c)`, all without approximation.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Plf {
    points: Vec<(f64, f64)>,
    tail_slope: f64,
}

impl Plf {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
            tail_slope: 0.0,
        }
    }

    /// `max(0, t - start)` scaled by `rate`.
    pub fn ramp(start: f64, rate: f64) -> Self {
        Self {
            points: vec![(start, 0.0)],
            tail_slope: rate,
        }
    }

    /// Builds a function from breakpoints. Points with equal times are
    /// collapsed (the later value wins), so callers must not rely on jumps.
    pub fn from_points(points: Vec<(f64, f64)>, tail_slope: f64) -> Self {
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for (t, v) in points {
            match out.last_mut() {
                Some(last) if last.0 == t => last.1 = v,
                _ => out.push((t, v)),
            }
        }
        Self {
            points: out,
            tail_slope,
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    pub fn is_zero(&self) -> bool {
        self.tail_slope == 0.0 && self.points.iter().all(|p| p.1 == 0.0)
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        interpolate(&self.points, self.tail_slope, t)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            points: self.points.iter().map(|&(t, v)| (t, v * factor)).collect(),
            tail_slope: self.tail_slope * factor,
        }
    }

    pub fn add(&self, other: &Plf) -> Self {
        if self.points.is_empty() {
            return other.clone();
        }
        if other.points.is_empty() {
            return self.clone();
        }
        let mut times: Vec<f64> = self.breakpoints().chain(other.breakpoints()).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let points = times
            .into_iter()
            .map(|t| (t, self.eval(t) + other.eval(t)))
            .collect();
        Self {
            points,
            tail_slope: self.tail_slope + other.tail_slope,
        }
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = &'a Plf>) -> Self {
        items.into_iter().fold(Plf::zero(), |acc, f| acc.add(f))
    }

    /// `max(0, f(t) - c)`. Exact for non-decreasing `f`: the single upward
    /// crossing of level `c` becomes a new breakpoint.
    pub fn excess_over(&self, c: f64) -> Self {
        if self.points.is_empty() {
            return if c < 0.0 {
                Self::constant(-c)
            } else {
                Self::zero()
            };
        }
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(self.points.len() + 1);
        let mut prev: Option<(f64, f64)> = None;
        for &(t, v) in &self.points {
            if let Some((pt, pv)) = prev {
                if pv < c && v > c {
                    let cross = pt + (c - pv) * (t - pt) / (v - pv);
                    if cross > pt && cross < t {
                        out.push((cross, 0.0));
                    }
                }
            }
            out.push((t, (v - c).max(0.0)));
            prev = Some((t, v));
        }
        let (last_t, last_v) = self.points[self.points.len() - 1];
        if last_v < c && self.tail_slope > 0.0 {
            let cross = last_t + (c - last_v) / self.tail_slope;
            out.push((cross, 0.0));
        }
        let tail_slope = if last_v >= c || self.tail_slope > 0.0 {
            self.tail_slope
        } else {
            0.0
        };
        Self::from_points(out, tail_slope)
    }

    /// The limit of the function as `t` grows, `+inf` with a positive tail.
    pub fn sup(&self) -> f64 {
        if self.tail_slope > 0.0 {
            f64::INFINITY
        } else {
            self.points.last().map_or(0.0, |p| p.1)
        }
    }

    /// Smallest `t` in `[lo, hi]` with `f(t) >= target`, by a breakpoint scan.
    /// `hi` may be `+inf`. Returns `None` if the window never reaches the target.
    pub fn earliest_crossing(&self, target: f64, lo: f64, hi: f64) -> Option<f64> {
        if lo > hi {
            return None;
        }
        if self.eval(lo) >= target {
            return Some(lo);
        }
        // Candidate segment ends: breakpoints inside (lo, hi], then the tail.
        let mut seg_start = lo;
        let mut seg_val = self.eval(lo);
        for &(t, v) in self.points.iter().filter(|p| p.0 > lo) {
            if t > hi {
                break;
            }
            if v >= target {
                let cross = if v == seg_val {
                    t
                } else {
                    seg_start + (target - seg_val) * (t - seg_start) / (v - seg_val)
                };
                return Some(cross.clamp(seg_start, t));
            }
            seg_start = t;
            seg_val = v;
        }
        let slope = if self.points.last().is_none_or(|p| seg_start >= p.0) {
            self.tail_slope
        } else {
            // hi falls strictly inside a segment.
            let end_val = self.eval(hi);
            if end_val < target {
                return None;
            }
            let cross = seg_start + (target - seg_val) * (hi - seg_start) / (end_val - seg_val);
            return Some(cross.clamp(seg_start, hi));
        };
        if slope <= 0.0 {
            return None;
        }
        let cross = seg_start + (target - seg_val) / slope;
        (cross <= hi).then_some(cross)
    }
}

/// Evaluates breakpoints `points` (strictly increasing times) at `t`, holding
/// the first value on the left and extending with `tail_slope` on the right.
pub(crate) fn interpolate(points: &[(f64, f64)], tail_slope: f64, t: f64) -> f64 {
    let Some(&(first_t, first_v)) = points.first() else {
        return 0.0;
    };
    if t <= first_t {
        return first_v;
    }
    let (last_t, last_v) = points[points.len() - 1];
    if t >= last_t {
        return last_v + tail_slope * (t - last_t);
    }
    // first index with time > t; guaranteed in 1..len
    let hi = points.partition_point(|p| p.0 <= t);
    let (t0, v0) = points[hi - 1];
    let (t1, v1) = points[hi];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Smallest `t` in `[lo, hi]` with `f(t) >= target` for an opaque
/// non-decreasing `f`, by bisection to absolute tolerance `eps`.
pub fn earliest_crossing_by<F: Fn(f64) -> f64>(
    f: F,
    target: f64,
    lo: f64,
    hi: f64,
    eps: f64,
) -> Option<f64> {
    if lo > hi || !hi.is_finite() {
        return None;
    }
    if f(lo) >= target {
        return Some(lo);
    }
    if f(hi) < target {
        return None;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > eps {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f(mid) >= target {
            b = mid;
        } else {
            a = mid;
        }
    }
    Some(b)
}
