use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cross-section of an H-shaped dipole, symmetric about both axes.
///
/// Lengths are in meters and describe the upper-right quadrant: the pole face sits at
/// `y = gap_height / 2`, shims are raised strips on the outer edge of each pole face,
/// and each coil side consists of an upper and a lower block in the window between
/// pole and return leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    /// Pole-to-pole distance.
    pub gap_height: f64,
    pub pole_half_width: f64,
    pub pole_height: f64,
    pub shim_width: f64,
    pub shim_height: f64,
    /// Horizontal distance between pole side and coil.
    pub coil_clearance: f64,
    pub coil_width: f64,
    /// Vertical clearance of each coil block from pole face level and yoke.
    pub coil_margin: f64,
    /// Horizontal distance between coil and return leg.
    pub window_margin: f64,
    pub leg_width: f64,
    pub yoke_thickness: f64,
    /// Air between yoke and the outer boundary.
    pub air_margin: f64,
    /// Turns per coil side.
    pub turns: f64,
    /// Target element size in the gap and near the shims at refinement level 0.
    pub gap_mesh_size: f64,
    /// Element size in the bulk relative to the gap size (at least 2).
    pub bulk_ratio: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            gap_height: 0.068,
            pole_half_width: 0.10,
            pole_height: 0.16,
            shim_width: 0.012,
            shim_height: 0.002,
            coil_clearance: 0.01,
            coil_width: 0.10,
            coil_margin: 0.005,
            window_margin: 0.01,
            leg_width: 0.08,
            yoke_thickness: 0.08,
            air_margin: 0.08,
            turns: 180.0,
            gap_mesh_size: 0.068 / 12.0,
            bulk_ratio: 2.5,
        }
    }
}

/// Region tags used by the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Air,
    Iron,
    /// Conductor carrying current in +z.
    CoilPositive,
    /// Conductor carrying current in −z.
    CoilNegative,
}

impl Region {
    pub fn tag(self) -> u8 {
        match self {
            Region::Air => 0,
            Region::Iron => 1,
            Region::CoilPositive => 2,
            Region::CoilNegative => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Region::Air,
            1 => Region::Iron,
            2 => Region::CoilPositive,
            3 => Region::CoilNegative,
            _ => return None,
        })
    }
}

/// Absolute coordinates of the quadrant breakpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub half_gap: f64,
    pub shim_inner_x: f64,
    pub shim_face_y: f64,
    pub pole_x: f64,
    pub coil_x0: f64,
    pub coil_x1: f64,
    pub coil_y0: f64,
    pub coil_y1: f64,
    pub leg_x0: f64,
    pub yoke_x1: f64,
    pub yoke_y0: f64,
    pub yoke_y1: f64,
    pub bound_x: f64,
    pub bound_y: f64,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gap_height", self.gap_height),
            ("pole_half_width", self.pole_half_width),
            ("pole_height", self.pole_height),
            ("shim_width", self.shim_width),
            ("shim_height", self.shim_height),
            ("coil_clearance", self.coil_clearance),
            ("coil_width", self.coil_width),
            ("coil_margin", self.coil_margin),
            ("window_margin", self.window_margin),
            ("leg_width", self.leg_width),
            ("yoke_thickness", self.yoke_thickness),
            ("air_margin", self.air_margin),
            ("turns", self.turns),
            ("gap_mesh_size", self.gap_mesh_size),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
            }
        }
        if self.shim_height >= 0.5 * self.gap_height {
            return Err(Error::Geometry("shims close the gap".into()));
        }
        if self.shim_width >= self.pole_half_width {
            return Err(Error::Geometry("shim wider than the pole half-width".into()));
        }
        if 2.0 * self.coil_margin >= self.pole_height {
            return Err(Error::Geometry("coil margins overlap in the window".into()));
        }
        if !(self.bulk_ratio >= 2.0) {
            return Err(Error::Geometry(format!(
                "bulk_ratio must be at least 2, got {}",
                self.bulk_ratio
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let half_gap = 0.5 * self.gap_height;
        let pole_x = self.pole_half_width;
        let coil_x0 = pole_x + self.coil_clearance;
        let coil_x1 = coil_x0 + self.coil_width;
        let leg_x0 = coil_x1 + self.window_margin;
        let yoke_x1 = leg_x0 + self.leg_width;
        let yoke_y0 = half_gap + self.pole_height;
        let yoke_y1 = yoke_y0 + self.yoke_thickness;
        Layout {
            half_gap,
            shim_inner_x: pole_x - self.shim_width,
            shim_face_y: half_gap - self.shim_height,
            pole_x,
            coil_x0,
            coil_x1,
            coil_y0: half_gap + self.coil_margin,
            coil_y1: yoke_y0 - self.coil_margin,
            leg_x0,
            yoke_x1,
            yoke_y0,
            yoke_y1,
            bound_x: yoke_x1 + self.air_margin,
            bound_y: yoke_y1 + self.air_margin,
        }
    }

    /// Region containing the point; points on interfaces are ambiguous.
    pub fn region_at(&self, x: f64, y: f64) -> Region {
        let l = self.layout();
        let (ax, ay) = (x.abs(), y.abs());
        let within = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
        let iron = (ax <= l.pole_x && within(ay, l.half_gap, l.yoke_y0))
            || (within(ax, l.shim_inner_x, l.pole_x) && within(ay, l.shim_face_y, l.half_gap))
            || (ax <= l.yoke_x1 && within(ay, l.yoke_y0, l.yoke_y1))
            || (within(ax, l.leg_x0, l.yoke_x1) && ay <= l.yoke_y0);
        if iron {
            return Region::Iron;
        }
        if within(ax, l.coil_x0, l.coil_x1) && within(ay, l.coil_y0, l.coil_y1) {
            return if x < 0.0 {
                Region::CoilPositive
            } else {
                Region::CoilNegative
            };
        }
        Region::Air
    }

    /// Area of `[-bound_x, bound_x] × [-bound_y, bound_y]`.
    pub fn domain_area(&self) -> f64 {
        let l = self.layout();
        4.0 * l.bound_x * l.bound_y
    }

    /// Cross-section of one coil side (upper plus lower block).
    pub fn coil_side_area(&self) -> f64 {
        let l = self.layout();
        2.0 * (l.coil_x1 - l.coil_x0) * (l.coil_y1 - l.coil_y0)
    }

    /// Current density magnitude in A/m² for the given excitation current.
    pub fn current_density(&self, current: f64) -> f64 {
        self.turns * current / self.coil_side_area()
    }

    /// Whether the point lies in the air gap between the poles, outside the shims.
    pub fn in_gap(&self, x: f64, y: f64) -> bool {
        let l = self.layout();
        let (ax, ay) = (x.abs(), y.abs());
        if ax >= l.pole_x || ay >= l.half_gap {
            return false;
        }
        !(ax >= l.shim_inner_x && ay >= l.shim_face_y)
    }

    /// Inner corners of the four shims, the points closest to the gap center.
    pub fn shim_tips(&self) -> [[f64; 2]; 4] {
        let l = self.layout();
        [
            [l.shim_inner_x, l.shim_face_y],
            [-l.shim_inner_x, l.shim_face_y],
            [l.shim_inner_x, -l.shim_face_y],
            [-l.shim_inner_x, -l.shim_face_y],
        ]
    }

    pub fn distance_to_shim(&self, p: [f64; 2]) -> f64 {
        self.shim_tips()
            .iter()
            .map(|t| ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// Uniform lattice over the gap with spacing `gap_height / 10`, strictly inside the air.
    pub fn candidate_probes(&self) -> Vec<[f64; 2]> {
        let l = self.layout();
        let step = self.gap_height / 10.0;
        let nx = ((l.pole_x / step) - 1e-9).floor() as i64;
        let ny = ((l.shim_face_y / step) - 1e-9).floor() as i64;
        let mut out = Vec::new();
        for j in -ny..=ny {
            for i in -nx..=nx {
                let p = [i as f64 * step, j as f64 * step];
                if self.in_gap(p[0], p[1]) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Points on the horizontal midplane spanning 80% of the pole width.
    pub fn axis_probes(&self, count: usize) -> Vec<[f64; 2]> {
        let half = 0.8 * self.pole_half_width;
        if count == 1 {
            return vec![[0.0, 0.0]];
        }
        (0..count)
            .map(|i| [-half + 2.0 * half * i as f64 / (count - 1) as f64, 0.0])
            .collect()
    }
}
