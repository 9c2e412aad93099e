use serde::{Deserialize, Serialize};

/// A point in continuous image coordinates. Pixel `(x, y)` covers the unit
/// square `[x, x+1) × [y, y+1)`, so its center sits at `(x + 0.5, y + 0.5)`.
/// `y` grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn pixel_center(x: usize, y: usize) -> Self {
        Self::new(x as f64 + 0.5, y as f64 + 0.5)
    }

    pub fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }

    pub fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        self.sub(other).norm()
    }

    /// Rotates about `center` by `degrees`, using the image frame (a positive
    /// angle turns the +x axis toward +y, i.e. clockwise on screen).
    pub fn rotate_about(self, center: Point, degrees: f64) -> Point {
        let (s, c) = degrees.to_radians().sin_cos();
        let d = self.sub(center);
        Point::new(center.x + d.x * c - d.y * s, center.y + d.x * s + d.y * c)
    }
}

/// Unit vector along a line at `degrees` in the image frame.
pub fn direction(degrees: f64) -> Point {
    let (s, c) = degrees.to_radians().sin_cos();
    Point::new(c, s)
}

/// Unit normal of a line at `degrees` pointing toward smaller `y` (cranial).
pub fn upward_normal(degrees: f64) -> Point {
    let (s, c) = degrees.to_radians().sin_cos();
    Point::new(s, -c)
}

/// Folds an undirected line angle into `(-90, 90]`.
pub fn normalize_line_angle(degrees: f64) -> f64 {
    let mut a = degrees % 180.0;
    if a <= -90.0 {
        a += 180.0;
    } else if a > 90.0 {
        a -= 180.0;
    }
    a
}
