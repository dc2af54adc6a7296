//! Procedural street scenes rendered as pinhole crops and 360° panoramas.
//!
//! The world is a set of vertical cylindrical arcs (buildings, vegetation,
//! cars, persons, poles) standing on a ground plane around a camera at height
//! `camera_height`. Every label is a pure function of the viewing direction,
//! so the two renderings of one scene agree exactly wherever they overlap.
//! Panoramas are equirectangular: azimuth is linear in x with the forward
//! direction at the image centre, elevation is linear in y.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::classmap::ids;
use super::sample::{Domain, Image, LabelMap, SampleRecord};
use crate::error::{Error, Result};

/// Global photometric change applied to every pixel of one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppearanceShift {
    pub brightness: f64,
    pub contrast: f64,
    pub color_cast: [f64; 3],
    pub noise_std: f64,
}

impl Default for AppearanceShift {
    fn default() -> Self {
        Self {
            brightness: 0.0,
            contrast: 1.0,
            color_cast: [0.0; 3],
            noise_std: 0.02,
        }
    }
}

impl AppearanceShift {
    /// Default target-domain look: darker, flatter, warm cast, more sensor noise.
    pub fn panoramic_default() -> Self {
        Self {
            brightness: -0.12,
            contrast: 0.7,
            color_cast: [0.08, 0.0, -0.08],
            noise_std: 0.05,
        }
    }

    fn apply<R: Rng + ?Sized>(&self, c: [f64; 3], rng: &mut R) -> [f32; 3] {
        let mut out = [0.0f32; 3];
        for k in 0..3 {
            let v = (c[k] - 0.5) * self.contrast + 0.5 + self.brightness + self.color_cast[k];
            let n = if self.noise_std > 0.0 {
                gaussian(rng) * self.noise_std
            } else {
                0.0
            };
            out[k] = (v + n).clamp(0.0, 1.0) as f32;
        }
        out
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Inclusive count range for one entity kind.
pub type CountRange = [usize; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    pub seed: u64,
    /// `[height, width]` of the equirectangular panorama.
    pub panorama_size: [usize; 2],
    /// Vertical field of view of the panorama in degrees.
    pub panorama_vfov_deg: f64,
    /// `[height, width]` of the pinhole image.
    pub pinhole_size: [usize; 2],
    pub pinhole_hfov_deg: f64,
    /// Pinhole yaw is drawn uniformly from `±view_yaw_jitter_deg`.
    pub view_yaw_jitter_deg: f64,
    pub camera_height: f64,
    pub buildings: CountRange,
    pub vegetation: CountRange,
    pub cars: CountRange,
    pub persons: CountRange,
    pub poles: CountRange,
    pub source_appearance: AppearanceShift,
    pub target_appearance: AppearanceShift,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            panorama_size: [64, 256],
            panorama_vfov_deg: 70.0,
            pinhole_size: [64, 64],
            pinhole_hfov_deg: 70.0,
            view_yaw_jitter_deg: 20.0,
            camera_height: 1.6,
            buildings: [3, 6],
            vegetation: [1, 3],
            cars: [2, 5],
            persons: [1, 4],
            poles: [1, 3],
            source_appearance: AppearanceShift::default(),
            target_appearance: AppearanceShift::panoramic_default(),
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let sizes = [self.panorama_size, self.pinhole_size];
        if sizes.iter().flatten().any(|&s| s == 0) {
            errs.push("synthetic image sizes must be positive".to_string());
        }
        if !(self.pinhole_hfov_deg > 0.0 && self.pinhole_hfov_deg <= 120.0) {
            errs.push(format!(
                "pinhole_hfov_deg must be in (0, 120], got {}",
                self.pinhole_hfov_deg
            ));
        }
        if !(self.panorama_vfov_deg > 0.0 && self.panorama_vfov_deg < 180.0) {
            errs.push("panorama_vfov_deg must be in (0, 180)".to_string());
        }
        if self.camera_height <= 0.0 {
            errs.push("camera_height must be positive".to_string());
        }
        for (name, r) in [
            ("buildings", self.buildings),
            ("vegetation", self.vegetation),
            ("cars", self.cars),
            ("persons", self.persons),
            ("poles", self.poles),
        ] {
            if r[0] > r[1] {
                errs.push(format!("{name} count range {r:?} is empty"));
            }
        }
        errs
    }
}

/// Azimuth interval `[center - half_width, center + half_width]` in degrees,
/// wrapping at ±180.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center_deg: f64,
    pub half_width_deg: f64,
}

impl Arc {
    pub fn contains(&self, azimuth_deg: f64) -> bool {
        angle_diff(azimuth_deg, self.center_deg).abs() <= self.half_width_deg
    }
}

/// Signed difference `a - b` wrapped into `[-180, 180)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    (a - b + 180.0).rem_euclid(360.0) - 180.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: u8,
    pub arc: Arc,
    /// Horizontal distance of the facade from the camera.
    pub distance: f64,
    /// Height of the top above the ground.
    pub height: f64,
    pub color: [f64; 3],
}

impl SceneObject {
    /// Elevation range `(bottom, top)` in degrees as seen from the camera.
    pub fn elevation_range(&self, camera_height: f64) -> (f64, f64) {
        (
            (-camera_height / self.distance).atan().to_degrees(),
            ((self.height - camera_height) / self.distance).atan().to_degrees(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidewalk {
    pub arc: Arc,
    /// Ground points closer than this stay road.
    pub near_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub camera_height: f64,
    pub sidewalks: Vec<Sidewalk>,
    pub objects: Vec<SceneObject>,
    pub road_color: [f64; 3],
    pub sidewalk_color: [f64; 3],
    pub sky_color: [f64; 3],
}

/// What a viewing ray hits first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hit {
    Object { index: usize, z: f64 },
    Ground { class: u8, distance: f64 },
    Sky,
}

impl Scene {
    /// Ray query in degrees. `z` is the height above ground of the hit point.
    pub fn trace(&self, azimuth_deg: f64, elevation_deg: f64) -> Hit {
        let tan_e = elevation_deg.to_radians().tan();
        let mut best: Option<(f64, usize, f64)> = None;
        for (i, o) in self.objects.iter().enumerate() {
            if !o.arc.contains(azimuth_deg) {
                continue;
            }
            let z = self.camera_height + o.distance * tan_e;
            if (0.0..=o.height).contains(&z) && best.is_none_or(|(d, _, _)| o.distance < d) {
                best = Some((o.distance, i, z));
            }
        }
        if let Some((_, index, z)) = best {
            return Hit::Object { index, z };
        }
        if elevation_deg < 0.0 {
            let distance = self.camera_height / (-tan_e);
            let on_sidewalk = self
                .sidewalks
                .iter()
                .any(|s| s.arc.contains(azimuth_deg) && distance >= s.near_distance);
            let class = if on_sidewalk { ids::SIDEWALK } else { ids::ROAD };
            return Hit::Ground { class, distance };
        }
        Hit::Sky
    }

    pub fn label_at(&self, azimuth_deg: f64, elevation_deg: f64) -> u8 {
        match self.trace(azimuth_deg, elevation_deg) {
            Hit::Object { index, .. } => self.objects[index].class,
            Hit::Ground { class, .. } => class,
            Hit::Sky => ids::SKY,
        }
    }

    /// Noise-free surface color along a ray.
    fn shade(&self, azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
        match self.trace(azimuth_deg, elevation_deg) {
            Hit::Object { index, z } => {
                let o = &self.objects[index];
                let s = o.distance * azimuth_deg.to_radians();
                let t = value_noise(s * 2.0, z * 2.0, index as u64 + 17);
                let mut c = o.color;
                let factor = match o.class {
                    ids::BUILDING => {
                        let window = s.rem_euclid(3.0) < 1.4 && z.rem_euclid(3.0) > 1.0 && z.rem_euclid(3.0) < 2.2;
                        if window {
                            0.55
                        } else {
                            0.9 + 0.2 * t
                        }
                    }
                    ids::VEGETATION => 0.7 + 0.6 * value_noise(s * 6.0, z * 6.0, 5),
                    ids::CAR => {
                        if z < 0.45 {
                            0.25
                        } else if z > 1.0 {
                            1.25
                        } else {
                            0.95 + 0.1 * t
                        }
                    }
                    ids::PERSON => {
                        if z > o.height - 0.3 {
                            c = [0.85, 0.65, 0.5];
                            1.0
                        } else {
                            0.9 + 0.2 * t
                        }
                    }
                    _ => 0.9 + 0.2 * t,
                };
                c.map(|v| (v * factor).clamp(0.0, 1.0))
            }
            Hit::Ground { class, distance } => {
                let a = azimuth_deg.to_radians();
                let (gx, gy) = (distance * a.cos(), distance * a.sin());
                let t = value_noise(gx * 1.5, gy * 1.5, 3);
                let (base, f) = if class == ids::SIDEWALK {
                    let tile = ((gx.rem_euclid(1.0) < 0.08) || (gy.rem_euclid(1.0) < 0.08)) as u8;
                    (self.sidewalk_color, 0.92 + 0.16 * t - 0.2 * tile as f64)
                } else {
                    (self.road_color, 0.9 + 0.2 * t)
                };
                base.map(|v| (v * f).clamp(0.0, 1.0))
            }
            Hit::Sky => {
                let lift = 1.0 - elevation_deg.max(0.0) / 90.0 * 0.6;
                self.sky_color.map(|v| (v * (0.75 + 0.35 * lift)).clamp(0.0, 1.0))
            }
        }
    }
}

/// Smooth deterministic 2-D noise in `[0, 1]`.
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let h = |i: f64, j: f64| -> f64 {
        let mut v = (i as i64 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (j as i64 as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
        v ^= v >> 33;
        v = v.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
        v ^= v >> 33;
        (v >> 11) as f64 / (1u64 << 53) as f64
    };
    let a = h(x0, y0) + (h(x0 + 1.0, y0) - h(x0, y0)) * sx;
    let b = h(x0, y0 + 1.0) + (h(x0 + 1.0, y0 + 1.0) - h(x0, y0 + 1.0)) * sx;
    a + (b - a) * sy
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, base: [f64; 3], amount: f64) -> [f64; 3] {
    base.map(|v| (v + rng.gen_range(-amount..=amount)).clamp(0.0, 1.0))
}

fn count<R: Rng + ?Sized>(rng: &mut R, r: CountRange) -> usize {
    rng.gen_range(r[0]..=r[1])
}

/// Draws one random street scene.
pub fn sample_scene<R: Rng + ?Sized>(spec: &SyntheticSceneSpec, rng: &mut R) -> Scene {
    let side = |rng: &mut R| if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut objects = Vec::new();

    let building_color = jitter(rng, [0.50, 0.40, 0.34], 0.06);
    for _ in 0..count(rng, spec.buildings) {
        let s = side(rng);
        objects.push(SceneObject {
            class: ids::BUILDING,
            arc: Arc {
                center_deg: s * rng.gen_range(45.0..135.0),
                half_width_deg: rng.gen_range(12.0..35.0),
            },
            distance: rng.gen_range(12.0..25.0),
            height: rng.gen_range(8.0..24.0),
            color: jitter(rng, building_color, 0.05),
        });
    }
    for _ in 0..count(rng, spec.vegetation) {
        objects.push(SceneObject {
            class: ids::VEGETATION,
            arc: Arc {
                center_deg: side(rng) * rng.gen_range(20.0..160.0),
                half_width_deg: rng.gen_range(8.0..25.0),
            },
            distance: rng.gen_range(9.0..20.0),
            height: rng.gen_range(3.0..8.0),
            color: jitter(rng, [0.28, 0.50, 0.20], 0.05),
        });
    }
    let mut small = |class: u8, n: usize, dist: (f64, f64), width: (f64, f64), height: (f64, f64), color: [f64; 3], amount: f64, rng: &mut R| {
        for _ in 0..n {
            let distance = rng.gen_range(dist.0..dist.1);
            let w = rng.gen_range(width.0..width.1);
            objects.push(SceneObject {
                class,
                arc: Arc {
                    center_deg: rng.gen_range(-180.0..180.0),
                    half_width_deg: (w / 2.0 / distance).atan().to_degrees(),
                },
                distance,
                height: rng.gen_range(height.0..height.1),
                color: jitter(rng, color, amount),
            });
        }
    };
    let n_cars = count(rng, spec.cars);
    small(ids::CAR, n_cars, (5.0, 14.0), (3.8, 4.8), (1.4, 1.7), [0.3, 0.35, 0.6], 0.25, rng);
    let n_persons = count(rng, spec.persons);
    small(ids::PERSON, n_persons, (4.0, 11.0), (0.5, 0.8), (1.6, 1.9), [0.75, 0.25, 0.25], 0.1, rng);
    let n_poles = count(rng, spec.poles);
    small(ids::POLE, n_poles, (4.0, 10.0), (0.25, 0.4), (5.0, 8.0), [0.55, 0.55, 0.58], 0.04, rng);

    let sidewalks = [1.0, -1.0]
        .into_iter()
        .map(|s| Sidewalk {
            arc: Arc {
                center_deg: s * rng.gen_range(80.0..100.0),
                half_width_deg: rng.gen_range(50.0..70.0),
            },
            near_distance: rng.gen_range(3.0..6.0),
        })
        .collect();

    Scene {
        camera_height: spec.camera_height,
        sidewalks,
        objects,
        road_color: jitter(rng, [0.36, 0.35, 0.38], 0.04),
        sidewalk_color: jitter(rng, [0.62, 0.52, 0.56], 0.04),
        sky_color: jitter(rng, [0.55, 0.72, 0.92], 0.04),
    }
}

/// Viewing direction `(azimuth, elevation)` in degrees of panorama pixel
/// centre `(y, x)`.
pub fn panorama_direction(spec: &SyntheticSceneSpec, y: usize, x: usize) -> (f64, f64) {
    let [h, w] = spec.panorama_size;
    let az = (x as f64 + 0.5) / w as f64 * 360.0 - 180.0;
    let el = spec.panorama_vfov_deg / 2.0 - (y as f64 + 0.5) / h as f64 * spec.panorama_vfov_deg;
    (az, el)
}

/// Viewing direction of pinhole pixel centre `(y, x)` for a camera yawed by
/// `yaw_deg`.
pub fn pinhole_direction(spec: &SyntheticSceneSpec, yaw_deg: f64, y: usize, x: usize) -> (f64, f64) {
    let [h, w] = spec.pinhole_size;
    let f = (w as f64 / 2.0) / (spec.pinhole_hfov_deg.to_radians() / 2.0).tan();
    let a = (x as f64 + 0.5 - w as f64 / 2.0) / f;
    let b = (h as f64 / 2.0 - (y as f64 + 0.5)) / f;
    let az = angle_diff(yaw_deg + a.atan().to_degrees(), 0.0);
    let el = b.atan2((1.0 + a * a).sqrt()).to_degrees();
    (az, el)
}

fn render<R: Rng + ?Sized>(
    scene: &Scene,
    h: usize,
    w: usize,
    dir: impl Fn(usize, usize) -> (f64, f64),
    shift: &AppearanceShift,
    rng: &mut R,
) -> (Image, LabelMap) {
    let mut image = Image::new(h, w);
    let mut label = LabelMap::new(h, w, 0);
    for y in 0..h {
        for x in 0..w {
            let (az, el) = dir(y, x);
            label.set(y, x, scene.label_at(az, el));
            image.set_pixel(y, x, shift.apply(scene.shade(az, el), rng));
        }
    }
    (image, label)
}

pub fn render_panorama<R: Rng + ?Sized>(
    scene: &Scene,
    spec: &SyntheticSceneSpec,
    shift: &AppearanceShift,
    rng: &mut R,
) -> (Image, LabelMap) {
    let [h, w] = spec.panorama_size;
    render(scene, h, w, |y, x| panorama_direction(spec, y, x), shift, rng)
}

pub fn render_pinhole<R: Rng + ?Sized>(
    scene: &Scene,
    spec: &SyntheticSceneSpec,
    yaw_deg: f64,
    shift: &AppearanceShift,
    rng: &mut R,
) -> (Image, LabelMap) {
    let [h, w] = spec.pinhole_size;
    render(scene, h, w, |y, x| pinhole_direction(spec, yaw_deg, y, x), shift, rng)
}

/// Full render of one scene: pinhole view, panorama, and the draws behind them.
#[derive(Clone, Debug)]
pub struct SyntheticPair {
    pub scene: Scene,
    pub yaw_deg: f64,
    pub pinhole: SampleRecord,
    pub panorama: SampleRecord,
}

/// One scene rendered as a labelled pinhole source record and a labelled
/// panoramic target record (target labels are for evaluation only).
pub fn generate_synthetic_pair<R: Rng + ?Sized>(spec: &SyntheticSceneSpec, rng: &mut R) -> SyntheticPair {
    let scene = sample_scene(spec, rng);
    let yaw_deg = if spec.view_yaw_jitter_deg > 0.0 {
        rng.gen_range(-spec.view_yaw_jitter_deg..=spec.view_yaw_jitter_deg)
    } else {
        0.0
    };
    let (pi, pl) = render_pinhole(&scene, spec, yaw_deg, &spec.source_appearance, rng);
    let (qi, ql) = render_panorama(&scene, spec, &spec.target_appearance, rng);
    SyntheticPair {
        scene,
        yaw_deg,
        pinhole: SampleRecord {
            id: "pinhole".into(),
            domain: Domain::Source,
            image: pi,
            label: Some(pl),
        },
        panorama: SampleRecord {
            id: "panorama".into(),
            domain: Domain::Target,
            image: qi,
            label: Some(ql),
        },
    }
}

/// Number of records per split and domain for an on-disk benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCounts {
    pub source_train: usize,
    pub source_val: usize,
    pub target_train: usize,
    pub target_val: usize,
    pub target_test: usize,
}

impl Default for SyntheticCounts {
    fn default() -> Self {
        Self {
            source_train: 200,
            source_val: 0,
            target_train: 200,
            target_val: 20,
            target_test: 50,
        }
    }
}

fn mix_seed(seed: u64, domain: u64, split: u64, index: u64) -> u64 {
    let mut z = seed
        ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ split.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ index.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic pair for `(domain, split, index)` of a benchmark.
pub fn benchmark_pair(spec: &SyntheticSceneSpec, domain: Domain, split: &str, index: usize) -> SyntheticPair {
    let split_tag = match split {
        "train" => 1,
        "val" => 2,
        _ => 3,
    };
    let dom_tag = match domain {
        Domain::Source => 1,
        Domain::Target => 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, dom_tag, split_tag, index as u64));
    generate_synthetic_pair(spec, &mut rng)
}

/// JSON sidecar written next to a generated benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSidecar {
    pub generator: String,
    pub seed: u64,
    pub spec: SyntheticSceneSpec,
    pub counts: SyntheticCounts,
}

pub const SIDECAR_NAME: &str = "synthetic.json";

/// Writes `<out>/source/<split>/{images,labels}` and
/// `<out>/target/<split>/{images,labels}` plus the JSON sidecar.
pub fn write_synthetic_dataset(spec: &SyntheticSceneSpec, counts: &SyntheticCounts, out: &Path) -> Result<()> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let jobs: Vec<(Domain, &str, usize)> = [
        (Domain::Source, "train", counts.source_train),
        (Domain::Source, "val", counts.source_val),
        (Domain::Target, "train", counts.target_train),
        (Domain::Target, "val", counts.target_val),
        (Domain::Target, "test", counts.target_test),
    ]
    .into_iter()
    .filter(|j| j.2 > 0)
    .collect();
    for (domain, split, n) in jobs {
        let dom_dir = out.join(match domain {
            Domain::Source => "source",
            Domain::Target => "target",
        });
        let img_dir = dom_dir.join(split).join("images");
        let lab_dir = dom_dir.join(split).join("labels");
        for d in [&img_dir, &lab_dir] {
            fs::create_dir_all(d).map_err(|e| Error::io("create directory", d, e))?;
        }
        let records: Vec<SampleRecord> = {
            use rayon::prelude::*;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let pair = benchmark_pair(spec, domain, split, i);
                    match domain {
                        Domain::Source => pair.pinhole,
                        Domain::Target => pair.panorama,
                    }
                })
                .collect()
        };
        for (i, rec) in records.iter().enumerate() {
            let name = format!("{i:05}.png");
            rec.image.write_png(&img_dir.join(&name))?;
            if let Some(l) = &rec.label {
                l.write_png(&lab_dir.join(&name))?;
            }
        }
    }
    let sidecar = SyntheticSidecar {
        generator: format!("panoda-core {}", env!("CARGO_PKG_VERSION")),
        seed: spec.seed,
        spec: spec.clone(),
        counts: counts.clone(),
    };
    let path = out.join(SIDECAR_NAME);
    fs::write(&path, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io("write sidecar", &path, e))?;
    Ok(())
}
