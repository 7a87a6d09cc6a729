//! Planar geometry in kilometres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Result<Self> {
        let finite = [min.x, min.y, max.x, max.y].iter().all(|v| v.is_finite());
        if !finite || max.x <= min.x || max.y <= min.y {
            return Err(Error::InvalidInput(format!(
                "degenerate region ({}, {})-({}, {})",
                min.x, min.y, max.x, max.y
            )));
        }
        Ok(Rect { min, max })
    }

    /// Rectangle anchored at the origin.
    pub fn with_size(width: f64, height: f64) -> Result<Self> {
        Rect::new(Point::new(0.0, 0.0), Point::new(width, height))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    /// Centres of the four quadrants, ordered SW, SE, NW, NE.
    pub fn quadrant_centers(&self) -> [Point; 4] {
        let (w, h) = (self.width(), self.height());
        let at = |fx: f64, fy: f64| Point::new(self.min.x + fx * w, self.min.y + fy * h);
        [at(0.25, 0.25), at(0.75, 0.25), at(0.25, 0.75), at(0.75, 0.75)]
    }
}

/// Area of a simple polygon (shoelace).
pub(crate) fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, a) in poly.iter().enumerate() {
        let b = poly[(i + 1) % poly.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc.abs()
}

/// Sutherland-Hodgman clip of a convex polygon against a rectangle.
pub(crate) fn clip_to_rect(poly: &[Point], rect: &Rect) -> Vec<Point> {
    // (inside test, intersection with the boundary line)
    type Edge = (fn(Point, &Rect) -> bool, fn(Point, Point, &Rect) -> Point);
    let edges: [Edge; 4] = [
        (|p, r| p.x >= r.min.x, |a, b, r| lerp_x(a, b, r.min.x)),
        (|p, r| p.x <= r.max.x, |a, b, r| lerp_x(a, b, r.max.x)),
        (|p, r| p.y >= r.min.y, |a, b, r| lerp_y(a, b, r.min.y)),
        (|p, r| p.y <= r.max.y, |a, b, r| lerp_y(a, b, r.max.y)),
    ];
    let mut out: Vec<Point> = poly.to_vec();
    for (inside, cut) in edges {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        for (i, &cur) in input.iter().enumerate() {
            let prev = input[(i + input.len() - 1) % input.len()];
            match (inside(prev, rect), inside(cur, rect)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cut(prev, cur, rect)),
                (false, true) => {
                    out.push(cut(prev, cur, rect));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}

fn lerp_x(a: Point, b: Point, x: f64) -> Point {
    let t = (x - a.x) / (b.x - a.x);
    Point::new(x, a.y + t * (b.y - a.y))
}

fn lerp_y(a: Point, b: Point, y: f64) -> Point {
    let t = (y - a.y) / (b.y - a.y);
    Point::new(a.x + t * (b.x - a.x), y)
}
