use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::HILAR_PROXY_RADIUS_MM;
use crate::volume::ClassLabel;

/// Grid shape used by every generated case.
pub const PHANTOM_DIMS: [usize; 3] = [64, 48, 48];
/// Shell depth the generator targets when placing peripheral and central lesions.
pub const TARGET_SHELL_DEPTH_MM: f64 = 15.0;

pub const GGO_HU: [i16; 2] = [-800, -500];
pub const CONSOLIDATION_HU: [i16; 2] = [-100, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomClass {
    CovidLike,
    OtherLike,
}

impl PhantomClass {
    pub fn label(self) -> ClassLabel {
        match self {
            PhantomClass::CovidLike => ClassLabel::Covid,
            PhantomClass::OtherLike => ClassLabel::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LesionTexture {
    Ggo,
    Consolidation,
}

impl LesionTexture {
    pub fn label(self) -> u8 {
        match self {
            LesionTexture::Ggo => 1,
            LesionTexture::Consolidation => 2,
        }
    }

    fn hu_range(self) -> [i16; 2] {
        match self {
            LesionTexture::Ggo => GGO_HU,
            LesionTexture::Consolidation => CONSOLIDATION_HU,
        }
    }
}

/// Axis-aligned ellipsoid in millimetres, measured from voxel (0, 0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.center_mm[a]) / self.radii_mm[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    pub fn volume_mm3(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radii_mm.iter().product::<f64>()
    }

    fn max_radius(&self) -> f64 {
        self.radii_mm.iter().cloned().fold(0.0, f64::max)
    }

    /// Euclidean distance from an interior point to the surface.
    pub fn depth_of(&self, p: [f64; 3]) -> f64 {
        let e = self.radii_mm;
        let y: Vec<f64> = (0..3)
            .map(|a| {
                let v = (p[a] - self.center_mm[a]).abs();
                // A tiny offset keeps the secular equation well defined on the axes.
                v.max(1e-7)
            })
            .collect();
        let f = |t: f64| -> f64 { (0..3).map(|a| (e[a] * y[a] / (e[a] * e[a] + t)).powi(2)).sum::<f64>() - 1.0 };
        let e_min = e.iter().cloned().fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (-e_min * e_min, 0.0);
        if f(hi) > 0.0 {
            return 0.0;
        }
        for _ in 0..200 {
            let mid = lo + (hi - lo) / 2.0;
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = hi;
        (0..3)
            .map(|a| {
                let x = e[a] * e[a] * y[a] / (e[a] * e[a] + t);
                (x - y[a]).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Distance along `dir` (unit, mm) from interior `origin` to the surface.
    fn exit_distance(&self, origin: [f64; 3], dir: [f64; 3]) -> f64 {
        let (mut a, mut b, mut c) = (0.0, 0.0, -1.0);
        for k in 0..3 {
            let o = (origin[k] - self.center_mm[k]) / self.radii_mm[k];
            let d = dir[k] / self.radii_mm[k];
            a += d * d;
            b += 2.0 * o * d;
            c += o * o;
        }
        (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)
    }

    /// Farthest distance along `dir` from `origin` whose depth is still at
    /// least `depth`; `None` if `origin` itself is shallower. Depth only
    /// decreases along rays leaving a symmetry axis, so bisection applies.
    fn reach_at_depth(&self, origin: [f64; 3], dir: [f64; 3], depth: f64) -> Option<f64> {
        if self.depth_of(origin) < depth {
            return None;
        }
        let (mut lo, mut hi) = (0.0, self.exit_distance(origin, dir));
        for _ in 0..60 {
            let mid = (lo + hi) / 2.0;
            if self.depth_of(step(origin, dir, mid)) >= depth {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }
}

fn step(origin: [f64; 3], dir: [f64; 3], s: f64) -> [f64; 3] {
    std::array::from_fn(|a| origin[a] + s * dir[a])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    pub texture: LesionTexture,
    pub shape: Ellipsoid,
    pub hu: i16,
    pub activation: f32,
    /// Placement intent: within the subpleural shell (true) or deep in the lung.
    pub peripheral: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub case_id: String,
    pub class: PhantomClass,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    /// Patient-left lung (label 1, low x in RAI).
    pub left_lung: Ellipsoid,
    /// Patient-right lung (label 2).
    pub right_lung: Ellipsoid,
    /// Left lung: z below the plane is lobe 1, else lobe 2.
    pub left_lobe_split_mm: f64,
    /// Right lung: lobes 3 / 4 / 5 separated by two z planes.
    pub right_lobe_splits_mm: [f64; 2],
    pub parenchyma_hu: i16,
    pub tissue_hu: i16,
    pub noise_hu: f64,
    pub lesions: Vec<LesionSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Left,
    Right,
}

impl PhantomSpec {
    pub fn check(&self) -> Result<()> {
        if self.dims.contains(&0) || self.spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParameter("phantom dims and spacing must be positive".into()));
        }
        if !(self.noise_hu.is_finite() && self.noise_hu >= 0.0) {
            return Err(Error::InvalidParameter("noise must be a nonnegative HU sigma".into()));
        }
        let lungs = [&self.left_lung, &self.right_lung];
        let shapes = lungs.into_iter().chain(self.lesions.iter().map(|l| &l.shape));
        for s in shapes {
            if s.radii_mm.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return Err(Error::InvalidParameter("ellipsoid radii must be positive".into()));
            }
        }
        for (i, l) in self.lesions.iter().enumerate() {
            let [lo, hi] = l.texture.hu_range();
            if l.hu < lo || l.hu > hi {
                return Err(Error::InvalidParameter(format!(
                    "lesion {i}: HU {} outside [{lo}, {hi}] for {:?}",
                    l.hu, l.texture
                )));
            }
            if !(l.activation.is_finite() && l.activation >= 0.0) {
                return Err(Error::InvalidParameter(format!("lesion {i}: activation must be >= 0")));
            }
        }
        Ok(())
    }

    fn lung(&self, side: Side) -> &Ellipsoid {
        match side {
            Side::Left => &self.left_lung,
            Side::Right => &self.right_lung,
        }
    }

    /// Lungs centred in the field as fractions of its extent.
    fn base(case_id: &str, class: PhantomClass, spacing_mm: [f64; 3], seed: u64) -> PhantomSpec {
        let f: [f64; 3] = std::array::from_fn(|a| PHANTOM_DIMS[a] as f64 * spacing_mm[a]);
        let lung = |cx: f64| Ellipsoid {
            center_mm: [cx * f[0], 0.5 * f[1], 0.5 * f[2]],
            radii_mm: [0.2 * f[0], 0.38 * f[1], 0.42 * f[2]],
        };
        let (left, right) = (lung(0.27), lung(0.73));
        let (cz, rz) = (left.center_mm[2], left.radii_mm[2]);
        PhantomSpec {
            case_id: case_id.to_string(),
            class,
            dims: PHANTOM_DIMS,
            spacing_mm,
            left_lung: left,
            right_lung: right,
            left_lobe_split_mm: cz,
            right_lobe_splits_mm: [cz - 0.25 * rz, cz + 0.2 * rz],
            parenchyma_hu: -860,
            tissue_hu: 40,
            noise_hu: 15.0,
            lesions: Vec::new(),
            seed,
        }
    }

    /// Four peripheral GGO spheres, two per lung.
    pub fn covid_like_default(seed: u64) -> PhantomSpec {
        let mut s = PhantomSpec::base("covid-like-default", PhantomClass::CovidLike, [3.0, 3.0, 4.0], seed);
        for side in [Side::Left, Side::Right] {
            for dz in [-15.0, 15.0] {
                let shape = s.peripheral_shape(side, dz, 0.0, [7.0; 3]).expect("default lungs fit the lesion");
                s.lesions.push(LesionSpec {
                    texture: LesionTexture::Ggo,
                    shape,
                    hu: -650,
                    activation: 0.8,
                    peripheral: true,
                });
            }
        }
        s
    }

    /// One central consolidation ellipsoid in the right lung.
    pub fn other_like_default(seed: u64) -> PhantomSpec {
        let mut s = PhantomSpec::base("other-like-default", PhantomClass::OtherLike, [3.0, 3.0, 4.0], seed);
        let lung = s.right_lung;
        s.lesions.push(LesionSpec {
            texture: LesionTexture::Consolidation,
            shape: Ellipsoid {
                center_mm: lung.center_mm,
                radii_mm: [10.0, 8.0, 8.0],
            },
            hu: -40,
            activation: 0.6,
            peripheral: false,
        });
        s
    }

    /// Axis point of `side`'s lung at height offset `dz` and the in-plane
    /// unit direction at angle `theta` from straight lateral.
    fn in_plane_ray(&self, side: Side, dz: f64, theta: f64) -> ([f64; 3], [f64; 3]) {
        let lung = self.lung(side);
        let lateral = match side {
            Side::Left => -1.0,
            Side::Right => 1.0,
        };
        let origin = [lung.center_mm[0], lung.center_mm[1], lung.center_mm[2] + dz];
        (origin, [lateral * theta.cos(), theta.sin(), 0.0])
    }

    /// Lesion hugging the pleura: as far out along the ray as keeps one voxel of clearance.
    fn peripheral_shape(&self, side: Side, dz: f64, theta: f64, radii: [f64; 3]) -> Option<Ellipsoid> {
        let reach = radii.iter().cloned().fold(0.0, f64::max);
        let (origin, dir) = self.in_plane_ray(side, dz, theta);
        let s = self.lung(side).reach_at_depth(origin, dir, reach + self.max_spacing())?;
        Some(Ellipsoid {
            center_mm: step(origin, dir, s),
            radii_mm: radii,
        })
    }

    /// Lesion deep enough that none of it lies within the target shell.
    fn central_shape(&self, side: Side, dz: f64, theta: f64, radii: [f64; 3], fraction: f64) -> Option<Ellipsoid> {
        let reach = radii.iter().cloned().fold(0.0, f64::max);
        let (origin, dir) = self.in_plane_ray(side, dz, theta);
        let depth = TARGET_SHELL_DEPTH_MM + reach + self.max_spacing();
        let s = self.lung(side).reach_at_depth(origin, dir, depth)?;
        Some(Ellipsoid {
            center_mm: step(origin, dir, fraction * s),
            radii_mm: radii,
        })
    }

    fn max_spacing(&self) -> f64 {
        self.spacing_mm.iter().cloned().fold(0.0, f64::max)
    }

    /// In-plane centroid estimate of both lungs, volume weighted.
    fn hilar_center(&self) -> [f64; 2] {
        let (l, r) = (&self.left_lung, &self.right_lung);
        let (vl, vr) = (l.volume_mm3(), r.volume_mm3());
        std::array::from_fn(|a| (vl * l.center_mm[a] + vr * r.center_mm[a]) / (vl + vr))
    }
}

/// Which generation recipe a corpus uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Three class signals (bilateral spread, peripheral placement, GGO texture);
    /// covid-like cases carry at least two, other-like at most one.
    Mixed,
    /// Both classes have bilateral GGO; only lesion placement differs.
    PeripheralOnly,
}

/// Randomization ranges for sampled specs. Pairs are inclusive `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomRanges {
    pub spacing_xy_mm: [f64; 2],
    pub spacing_z_mm: [f64; 2],
    pub lung_scale: [f64; 2],
    pub lesions_per_lung: [usize; 2],
    pub ggo_radius_mm: [f64; 2],
    pub consolidation_radius_mm: [f64; 2],
    pub ggo_hu: [i16; 2],
    pub consolidation_hu: [i16; 2],
    pub parenchyma_hu: [i16; 2],
    pub noise_hu: [f64; 2],
    pub activation: [f32; 2],
    /// Lesion centres lie within this fraction of the lung's z semi-axis
    /// around its centre, for peripheral and central lesions alike.
    pub z_band: f64,
}

impl Default for PhantomRanges {
    fn default() -> Self {
        PhantomRanges {
            spacing_xy_mm: [2.8, 3.2],
            spacing_z_mm: [3.6, 4.4],
            lung_scale: [0.92, 1.05],
            lesions_per_lung: [2, 3],
            ggo_radius_mm: [6.0, 8.0],
            consolidation_radius_mm: [6.0, 9.0],
            ggo_hu: [-780, -520],
            consolidation_hu: [-90, -10],
            parenchyma_hu: [-880, -830],
            noise_hu: [10.0, 20.0],
            activation: [0.3, 1.0],
            z_band: 0.3,
        }
    }
}

impl PhantomRanges {
    pub fn check(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        let ok = ordered(self.spacing_xy_mm)
            && ordered(self.spacing_z_mm)
            && ordered(self.lung_scale)
            && ordered(self.ggo_radius_mm)
            && ordered(self.consolidation_radius_mm)
            && ordered(self.noise_hu)
            && ordered([f64::from(self.activation[0]), f64::from(self.activation[1])])
            && self.lesions_per_lung[0] >= 1
            && self.lesions_per_lung[0] <= self.lesions_per_lung[1]
            && self.ggo_hu[0] <= self.ggo_hu[1]
            && self.consolidation_hu[0] <= self.consolidation_hu[1]
            && self.parenchyma_hu[0] <= self.parenchyma_hu[1]
            && self.spacing_xy_mm[0] > 0.0
            && self.spacing_z_mm[0] > 0.0
            && self.ggo_radius_mm[0] > 0.0
            && self.consolidation_radius_mm[0] > 0.0
            && self.lung_scale[0] > 0.0
            && self.lung_scale[1] <= 1.05
            && self.activation[0] >= 0.0
            && (0.0..=0.5).contains(&self.z_band);
        let hu_ok = GGO_HU[0] <= self.ggo_hu[0]
            && self.ggo_hu[1] <= GGO_HU[1]
            && CONSOLIDATION_HU[0] <= self.consolidation_hu[0]
            && self.consolidation_hu[1] <= CONSOLIDATION_HU[1];
        if ok && hu_ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("phantom ranges are inconsistent".into()))
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] < r[1] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

/// Class signals a sampled case carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Signals {
    bilateral: bool,
    peripheral: bool,
    ggo: bool,
}

fn draw_signals(class: PhantomClass, profile: Profile, rng: &mut ChaCha8Rng) -> Signals {
    let covid = class == PhantomClass::CovidLike;
    match profile {
        Profile::PeripheralOnly => Signals {
            bilateral: true,
            peripheral: covid,
            ggo: true,
        },
        Profile::Mixed => {
            // 40% carry all (covid) or none (other) of the signals; the rest
            // differ from that in exactly one signal.
            let flipped = match rng.random_range(0..5) {
                0 | 1 => None,
                k => Some(k - 2),
            };
            let base = covid;
            Signals {
                bilateral: base ^ (flipped == Some(0)),
                peripheral: base ^ (flipped == Some(1)),
                ggo: base ^ (flipped == Some(2)),
            }
        }
    }
}

impl PhantomSpec {
    /// Random spec drawn from `ranges`; fully determined by `seed`.
    pub fn sample(
        case_id: &str,
        class: PhantomClass,
        profile: Profile,
        ranges: &PhantomRanges,
        seed: u64,
    ) -> Result<PhantomSpec> {
        use rand::SeedableRng;
        ranges.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xy = uniform(&mut rng, ranges.spacing_xy_mm);
        let spacing = [xy, xy, uniform(&mut rng, ranges.spacing_z_mm)];
        let mut spec = PhantomSpec::base(case_id, class, spacing, seed);
        for lung in [&mut spec.left_lung, &mut spec.right_lung] {
            for a in 0..3 {
                lung.radii_mm[a] *= uniform(&mut rng, ranges.lung_scale);
            }
        }
        let rz = spec.left_lung.radii_mm[2];
        spec.left_lobe_split_mm += uniform(&mut rng, [-0.1, 0.1]) * rz;
        let rz = spec.right_lung.radii_mm[2];
        spec.right_lobe_splits_mm[0] += uniform(&mut rng, [-0.05, 0.05]) * rz;
        spec.right_lobe_splits_mm[1] += uniform(&mut rng, [-0.05, 0.05]) * rz;
        spec.parenchyma_hu = rng.random_range(ranges.parenchyma_hu[0]..=ranges.parenchyma_hu[1]);
        spec.noise_hu = uniform(&mut rng, ranges.noise_hu);

        let signals = draw_signals(class, profile, &mut rng);
        let sides: Vec<Side> = if signals.bilateral {
            vec![Side::Left, Side::Right]
        } else if rng.random_bool(0.7) {
            vec![Side::Right]
        } else {
            vec![Side::Left]
        };
        let texture = if signals.ggo {
            LesionTexture::Ggo
        } else {
            LesionTexture::Consolidation
        };
        for side in sides {
            let count = rng.random_range(ranges.lesions_per_lung[0]..=ranges.lesions_per_lung[1]);
            let kept = spec.lesions.len();
            let mut placed = 0;
            for attempt in 0..count * 200 {
                if placed == count {
                    break;
                }
                if attempt > 0 && attempt % 50 == 0 {
                    // start this lung over so crowded early picks cannot starve later ones
                    spec.lesions.truncate(kept);
                    placed = 0;
                }
                if let Some(lesion) = spec.try_place(side, texture, signals.peripheral, ranges, &mut rng) {
                    spec.lesions.push(lesion);
                    placed += 1;
                }
            }
            if placed < count {
                return Err(Error::InvalidParameter(format!(
                    "{case_id}: could not place {count} lesions in the {side:?} lung"
                )));
            }
        }
        spec.check()?;
        Ok(spec)
    }

    fn try_place(
        &self,
        side: Side,
        texture: LesionTexture,
        peripheral: bool,
        ranges: &PhantomRanges,
        rng: &mut ChaCha8Rng,
    ) -> Option<LesionSpec> {
        let radii = match texture {
            LesionTexture::Ggo => [uniform(rng, ranges.ggo_radius_mm); 3],
            LesionTexture::Consolidation => {
                let r = ranges.consolidation_radius_mm;
                [uniform(rng, r), uniform(rng, r), uniform(rng, r)]
            }
        };
        let reach = radii.iter().cloned().fold(0.0, f64::max);
        let band = ranges.z_band * self.lung(side).radii_mm[2];
        let dz = uniform(rng, [-band, band]);
        let shape = if peripheral {
            let theta = uniform(rng, [-1.2, 1.2]);
            self.peripheral_shape(side, dz, theta, radii)?
        } else {
            let theta = uniform(rng, [-std::f64::consts::PI, std::f64::consts::PI]);
            self.central_shape(side, dz, theta, radii, uniform(rng, [0.0, 1.0]))?
        };
        // surfaces further apart than a voxel diagonal stay separate components
        let gap = self.spacing_mm.iter().map(|s| s * s).sum::<f64>().sqrt() + 0.5;
        for other in &self.lesions {
            let d = (0..3)
                .map(|a| (shape.center_mm[a] - other.shape.center_mm[a]).powi(2))
                .sum::<f64>()
                .sqrt();
            if d < reach + other.shape.max_radius() + gap {
                return None;
            }
        }
        if peripheral {
            let h = self.hilar_center();
            let d = (shape.center_mm[0] - h[0]).hypot(shape.center_mm[1] - h[1]);
            if d < HILAR_PROXY_RADIUS_MM + reach + 2.0 * self.max_spacing() {
                return None;
            }
        }
        let [lo, hi] = match texture {
            LesionTexture::Ggo => ranges.ggo_hu,
            LesionTexture::Consolidation => ranges.consolidation_hu,
        };
        Some(LesionSpec {
            texture,
            shape,
            hu: rng.random_range(lo..=hi),
            activation: if ranges.activation[0] < ranges.activation[1] {
                rng.random_range(ranges.activation[0]..=ranges.activation[1])
            } else {
                ranges.activation[0]
            },
            peripheral,
        })
    }
}
