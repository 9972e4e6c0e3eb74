//! Coordinates, antenna frames and deployment topologies inside a
//! rectangular room.
//!
//! The room spans `[0, lx] x [0, ly] x [0, lz]` with the origin at a floor
//! corner. Walls are numbered 0..4: `x = 0`, `y = 0`, `x = lx`, `y = ly`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// `theta` is measured from the +z axis in `[0, pi]`, `phi` from +x in
/// `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spherical {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl Spherical {
    pub fn to_cartesian(self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(self.r * st * cp, self.r * st * sp, self.r * ct)
    }
}

pub fn cart_to_sph(p: Vec3) -> Spherical {
    let r = p.norm();
    if r == 0.0 {
        return Spherical {
            r: 0.0,
            theta: 0.0,
            phi: 0.0,
        };
    }
    let theta = (p.z / r).clamp(-1.0, 1.0).acos();
    let phi = if p.x == 0.0 && p.y == 0.0 {
        0.0
    } else {
        let a = p.y.atan2(p.x);
        // atan2 returns pi for the negative x axis; the range is half-open.
        if a >= PI {
            -PI
        } else {
            a
        }
    };
    Spherical { r, theta, phi }
}

/// Position and orientation of one patch element.
///
/// Local +x is the boresight (patch normal), local +z is `up` (the theta = 0
/// axis) and local +y completes a right-handed frame as `up x boresight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaPose {
    pub position: Vec3,
    pub boresight: Vec3,
    pub up: Vec3,
}

const FRAME_TOLERANCE: f64 = 1e-9;

impl AntennaPose {
    pub fn new(position: Vec3, boresight: Vec3, up: Vec3) -> Result<Self> {
        if !position.is_finite() || !boresight.is_finite() || !up.is_finite() {
            return Err(Error::Geometry("non-finite antenna pose".into()));
        }
        if (boresight.norm() - 1.0).abs() > FRAME_TOLERANCE
            || (up.norm() - 1.0).abs() > FRAME_TOLERANCE
            || boresight.dot(up).abs() > FRAME_TOLERANCE
        {
            return Err(Error::Geometry(format!(
                "boresight {boresight:?} and up {up:?} are not orthonormal"
            )));
        }
        Ok(AntennaPose {
            position,
            boresight,
            up,
        })
    }

    pub fn lateral(&self) -> Vec3 {
        self.up.cross(self.boresight)
    }

    /// Coordinates of `target - position` in the local frame.
    pub fn to_local(&self, target: Vec3) -> Vec3 {
        let d = target - self.position;
        Vec3::new(d.dot(self.boresight), d.dot(self.lateral()), d.dot(self.up))
    }
}

pub fn to_local_spherical(pose: &AntennaPose, target: Vec3) -> Result<Spherical> {
    if target == pose.position || (target - pose.position).norm() == 0.0 {
        return Err(Error::Geometry(format!(
            "target {target:?} coincides with antenna position"
        )));
    }
    Ok(cart_to_sph(pose.to_local(target)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
}

impl Room {
    pub fn new(lx: f64, ly: f64, lz: f64) -> Result<Self> {
        let room = Room { lx, ly, lz };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lx, self.ly, self.lz]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "room extents must be positive, got {self:?}"
            )))
        }
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(self.lx / 2.0, self.ly / 2.0, self.lz / 2.0)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0.0..=self.lx).contains(&p.x)
            && (0.0..=self.ly).contains(&p.y)
            && (0.0..=self.lz).contains(&p.z)
    }

    /// Inward unit normal, horizontal extent and a point on wall `i`.
    fn wall(&self, i: usize) -> Wall {
        match i {
            0 => Wall {
                index: 0,
                normal: Vec3::X,
                width: self.ly,
                origin: Vec3::new(0.0, 0.0, 0.0),
            },
            1 => Wall {
                index: 1,
                normal: Vec3::Y,
                width: self.lx,
                origin: Vec3::new(self.lx, 0.0, 0.0),
            },
            2 => Wall {
                index: 2,
                normal: -Vec3::X,
                width: self.ly,
                origin: Vec3::new(self.lx, self.ly, 0.0),
            },
            3 => Wall {
                index: 3,
                normal: -Vec3::Y,
                width: self.lx,
                origin: Vec3::new(0.0, self.ly, 0.0),
            },
            _ => unreachable!("a rectangular room has four walls"),
        }
    }
}

impl Default for Room {
    fn default() -> Self {
        Room {
            lx: 40.0,
            ly: 40.0,
            lz: 10.0,
        }
    }
}

struct Wall {
    index: usize,
    normal: Vec3,
    width: f64,
    /// Left end of the wall at floor level, as seen from inside the room.
    origin: Vec3,
}

impl Wall {
    /// Left-to-right direction seen from inside; equals the element's local +y.
    fn tangent(&self) -> Vec3 {
        Vec3::Z.cross(self.normal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Candelabrum,
    #[serde(rename = "single-strip-1wall")]
    SingleStrip1Wall,
    #[serde(rename = "single-strip-4walls")]
    SingleStrip4Walls,
    #[serde(rename = "double-strip-1wall")]
    DoubleStrip1Wall,
    #[serde(rename = "double-strip-4walls")]
    DoubleStrip4Walls,
    #[serde(rename = "quad-strip-1wall")]
    QuadStrip1Wall,
    #[serde(rename = "quad-strip-4walls")]
    QuadStrip4Walls,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 7] = [
        TopologyKind::Candelabrum,
        TopologyKind::SingleStrip1Wall,
        TopologyKind::SingleStrip4Walls,
        TopologyKind::DoubleStrip1Wall,
        TopologyKind::DoubleStrip4Walls,
        TopologyKind::QuadStrip1Wall,
        TopologyKind::QuadStrip4Walls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Candelabrum => "candelabrum",
            TopologyKind::SingleStrip1Wall => "single-strip-1wall",
            TopologyKind::SingleStrip4Walls => "single-strip-4walls",
            TopologyKind::DoubleStrip1Wall => "double-strip-1wall",
            TopologyKind::DoubleStrip4Walls => "double-strip-4walls",
            TopologyKind::QuadStrip1Wall => "quad-strip-1wall",
            TopologyKind::QuadStrip4Walls => "quad-strip-4walls",
        }
    }

    /// `(walls, strips per wall, element spacing in wavelengths)` for strip
    /// deployments.
    pub fn strip_layout(self) -> Option<(usize, usize, f64)> {
        match self {
            TopologyKind::Candelabrum => None,
            TopologyKind::SingleStrip1Wall => Some((1, 1, 0.5)),
            TopologyKind::SingleStrip4Walls => Some((4, 1, 2.0)),
            TopologyKind::DoubleStrip1Wall => Some((1, 2, 1.0)),
            TopologyKind::DoubleStrip4Walls => Some((4, 2, 4.0)),
            TopologyKind::QuadStrip1Wall => Some((1, 4, 2.0)),
            TopologyKind::QuadStrip4Walls => Some((4, 4, 8.0)),
        }
    }

    /// The one-wall deployment with the same strip count.
    pub fn single_wall_counterpart(self) -> Option<TopologyKind> {
        match self {
            TopologyKind::SingleStrip4Walls => Some(TopologyKind::SingleStrip1Wall),
            TopologyKind::DoubleStrip4Walls => Some(TopologyKind::DoubleStrip1Wall),
            TopologyKind::QuadStrip4Walls => Some(TopologyKind::QuadStrip1Wall),
            _ => None,
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TopologyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = TopologyKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown topology '{s}', expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Vertical distance between stacked strips.
pub const STRIP_VERTICAL_SPACING: f64 = 2.0;

/// Ceiling-mounted co-located array: planar panels arranged on a horizontal
/// polygon around the ceiling center, each facing outward and tilted down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CandelabrumLayout {
    pub panels: usize,
    pub rows: usize,
    pub cols: usize,
    pub spacing_wavelengths: f64,
    /// Distance of panel centers from the vertical axis through the room center.
    pub radius: f64,
    /// Downward tilt of each panel boresight below horizontal.
    pub tilt_deg: f64,
    /// Panel centers hang this far below the ceiling.
    pub drop: f64,
}

impl Default for CandelabrumLayout {
    fn default() -> Self {
        CandelabrumLayout {
            panels: 8,
            rows: 8,
            cols: 8,
            spacing_wavelengths: 0.5,
            radius: 0.5,
            tilt_deg: 45.0,
            drop: 0.5,
        }
    }
}

impl CandelabrumLayout {
    pub fn element_count(&self) -> usize {
        self.panels * self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub kind: TopologyKind,
    pub poses: Vec<AntennaPose>,
}

impl Topology {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Writes `index,x,y,z,bx,by,bz,ux,uy,uz` rows with 6 decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,x,y,z,bx,by,bz,ux,uy,uz")?;
        for (i, p) in self.poses.iter().enumerate() {
            let (q, b, u) = (p.position, p.boresight, p.up);
            writeln!(
                out,
                "{i},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                q.x, q.y, q.z, b.x, b.y, b.z, u.x, u.y, u.z
            )?;
        }
        Ok(())
    }
}

pub fn build_topology(kind: TopologyKind, room: &Room, m: usize, lambda: f64) -> Result<Topology> {
    build_topology_with(kind, room, m, lambda, &CandelabrumLayout::default())
}

pub fn build_topology_with(
    kind: TopologyKind,
    room: &Room,
    m: usize,
    lambda: f64,
    candelabrum: &CandelabrumLayout,
) -> Result<Topology> {
    room.validate()?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Config(format!(
            "wavelength must be positive, got {lambda}"
        )));
    }
    if m == 0 {
        return Err(Error::Config("antenna count must be positive".into()));
    }
    let poses = match kind.strip_layout() {
        Some((walls, strips, spacing)) => {
            strips_on_walls(room, m, walls, strips, spacing * lambda)?
        }
        None => candelabrum_poses(room, m, lambda, candelabrum)?,
    };
    debug_assert_eq!(poses.len(), m);
    Ok(Topology { kind, poses })
}

fn strips_on_walls(
    room: &Room,
    m: usize,
    walls: usize,
    strips: usize,
    spacing: f64,
) -> Result<Vec<AntennaPose>> {
    if m % (walls * strips) != 0 {
        return Err(Error::Config(format!(
            "{m} antennas cannot be split evenly over {walls} wall(s) x {strips} strip(s)"
        )));
    }
    let per_strip = m / (walls * strips);
    let span = (per_strip - 1) as f64 * spacing;
    let heights: Vec<f64> = (0..strips)
        .map(|j| room.lz / 2.0 + (j as f64 - (strips - 1) as f64 / 2.0) * STRIP_VERTICAL_SPACING)
        .collect();
    if heights.iter().any(|&h| h < 0.0 || h > room.lz) {
        return Err(Error::Config(format!(
            "{strips} strips at {STRIP_VERTICAL_SPACING} m spacing do not fit in a {} m tall room",
            room.lz
        )));
    }

    let mut poses = Vec::with_capacity(m);
    for w in 0..walls {
        let wall = room.wall(w);
        if span > wall.width {
            return Err(Error::Config(format!(
                "strip of {per_strip} elements spans {span:.3} m, wider than wall {} ({} m)",
                wall.index, wall.width
            )));
        }
        let t = wall.tangent();
        for &h in &heights {
            for i in 0..per_strip {
                let s = wall.width / 2.0 + (i as f64 - (per_strip - 1) as f64 / 2.0) * spacing;
                let mut position = wall.origin + t * s;
                position.z = h;
                poses.push(AntennaPose::new(position, wall.normal, Vec3::Z)?);
            }
        }
    }
    Ok(poses)
}

fn candelabrum_poses(
    room: &Room,
    m: usize,
    lambda: f64,
    layout: &CandelabrumLayout,
) -> Result<Vec<AntennaPose>> {
    if layout.element_count() != m {
        return Err(Error::Config(format!(
            "candelabrum of {} panels x {}x{} holds {} elements, not {m}",
            layout.panels,
            layout.rows,
            layout.cols,
            layout.element_count()
        )));
    }
    let d = layout.spacing_wavelengths * lambda;
    let tilt = layout.tilt_deg.to_radians();
    let (st, ct) = tilt.sin_cos();
    let c = room.center();
    let hub = Vec3::new(c.x, c.y, room.lz - layout.drop);

    let mut poses = Vec::with_capacity(m);
    for k in 0..layout.panels {
        let az = TAU * k as f64 / layout.panels as f64;
        let outward = Vec3::new(az.cos(), az.sin(), 0.0);
        let boresight = (outward * ct - Vec3::Z * st).normalized();
        let up = (outward * st + Vec3::Z * ct).normalized();
        let lateral = up.cross(boresight);
        let center = hub + outward * layout.radius;
        for row in 0..layout.rows {
            let dz = (row as f64 - (layout.rows - 1) as f64 / 2.0) * d;
            for col in 0..layout.cols {
                let dy = (col as f64 - (layout.cols - 1) as f64 / 2.0) * d;
                let position = center + lateral * dy + up * dz;
                if !room.contains(position) {
                    return Err(Error::Config(format!(
                        "candelabrum element at {position:?} lies outside the room"
                    )));
                }
                poses.push(AntennaPose::new(position, boresight, up)?);
            }
        }
    }
    Ok(poses)
}
