//! Parametric wood-log model: closed-form bark surface and internal density
//! fields, plus seeded sampling of balanced log datasets.
//!
//! A log is described entirely by a [`LogSpec`]. The bark surface is a tapered
//! cylinder modulated by low- and high-frequency cosines plus one Gaussian
//! bump per branch. The internal density is a background wood value with
//! growth-ring modulation, overridden by a high-density tube around each
//! knot's centerline `z_k(r) = z0 + a*sqrt(r) + b*r`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::config::SynthesisConfig;
use crate::{Error, Result};

/// Linear taper of the trunk radius with height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperSpec {
    pub base_radius: f64,
    pub taper_rate: f64,
    pub height: f64,
}

impl TaperSpec {
    pub fn radius_at(&self, z: f64) -> f64 {
        self.base_radius * (1.0 - self.taper_rate * z / self.height)
    }
}

/// Cosine bark texture: one low- and one high-frequency angular harmonic plus
/// a longitudinal ripple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarkTextureSpec {
    pub amp_low: f64,
    pub amp_high: f64,
    pub freq_low: u32,
    pub freq_high: u32,
    pub phase_low: f64,
    pub phase_high: f64,
    pub z_amp: f64,
    pub z_freq: f64,
}

impl BarkTextureSpec {
    /// Dimensionless radial modulation factor at (theta, z).
    fn factor(&self, theta: f64, z: f64) -> f64 {
        1.0 + self.amp_low * (self.freq_low as f64 * theta + self.phase_low).cos()
            + self.amp_high * (self.freq_high as f64 * theta + self.phase_high).cos()
            + self.z_amp * (self.z_freq * z).cos()
    }
}

/// One branch: a high-density tube inside the trunk plus a Gaussian bump on
/// the bark where the branch exits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotSpec {
    pub azimuth: f64,
    /// Pith entry height z0.
    pub start_height: f64,
    /// Coefficient of the sqrt(r) centerline term.
    pub rise_sqrt: f64,
    /// Coefficient of the linear centerline term.
    pub rise_lin: f64,
    /// Tube radius at the pith.
    pub core_radius: f64,
    /// Tube radius growth per unit of radial distance.
    pub growth_rate: f64,
    pub knot_density: f64,
    pub bump_amp: f64,
    pub bump_sigma_theta: f64,
    pub bump_sigma_z: f64,
}

impl KnotSpec {
    /// Centerline height at radial distance r from the pith.
    pub fn centerline_z(&self, r: f64) -> f64 {
        self.start_height + self.rise_sqrt * r.sqrt() + self.rise_lin * r
    }

    /// Tube radius at radial distance r.
    pub fn tube_radius(&self, r: f64) -> f64 {
        self.core_radius + self.growth_rate * r
    }
}

/// Growth-ring modulation of the background density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub background_density: f64,
    pub ring_amp: f64,
    pub ring_period: f64,
}

/// Complete parametric description of one synthetic log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSpec {
    pub taper: TaperSpec,
    pub texture: BarkTextureSpec,
    pub rings: RingSpec,
    pub knots: Vec<KnotSpec>,
    pub seed: u64,
}

impl LogSpec {
    /// Upper bound on the bark radius over the whole log, bumps included.
    pub fn max_radius(&self) -> f64 {
        let t = &self.texture;
        let bump = self.knots.iter().map(|k| k.bump_amp).fold(0.0f64, f64::max);
        self.taper.base_radius * (1.0 + t.amp_low + t.amp_high + t.z_amp) + bump
    }
}

/// Wrap an angle difference into (-pi, pi].
pub fn wrap_angle(d: f64) -> f64 {
    let mut d = d % TAU;
    if d > PI {
        d -= TAU;
    } else if d <= -PI {
        d += TAU;
    }
    d
}

/// Per-knot geometry derived from a [`LogSpec`]: bark-exit point and bounds
/// used to prune tube-membership tests.
#[derive(Debug, Clone, Copy)]
struct KnotGeometry {
    spec: KnotSpec,
    /// Radial distance where the centerline meets the bark.
    r_exit: f64,
    /// Height where the centerline meets the bark.
    z_exit: f64,
    /// Largest tube radius along the centerline.
    rho_max: f64,
}

impl KnotGeometry {
    fn new(log: &LogSpec, knot: &KnotSpec) -> Self {
        // Fixed point of r = bark(azimuth, z_k(r)); the texture factor is
        // smooth and close to 1 so a few iterations converge.
        let taper = &log.taper;
        let mut r = taper.radius_at(knot.start_height.min(taper.height));
        for _ in 0..12 {
            let z = knot.centerline_z(r).clamp(0.0, taper.height);
            r = taper.radius_at(z) * log.texture.factor(knot.azimuth, z);
        }
        let z_exit = knot.centerline_z(r).clamp(0.0, taper.height);
        KnotGeometry {
            spec: *knot,
            r_exit: r,
            z_exit,
            rho_max: knot.tube_radius(r),
        }
    }

    /// True when (r, theta, z) lies within the knot's tube: Euclidean
    /// distance to the centerline curve is at most the local tube radius.
    fn contains(&self, r: f64, theta: f64, z: f64) -> bool {
        let k = &self.spec;
        let dth = wrap_angle(theta - k.azimuth);
        // Cheap rejections: outside the centerline's z band, behind the pith,
        // or too far from the knot's radial half-plane.
        if z < k.start_height - self.rho_max || z > self.z_exit + self.rho_max {
            return false;
        }
        let (x, y) = (r * dth.cos(), r * dth.sin());
        if x <= 0.0 && r > self.rho_max {
            return false;
        }
        if y.abs() > self.rho_max {
            return false;
        }

        // Signed clearance dist(P, C(t)) - rho(t), minimized over the
        // centerline parameter t in [0, r_exit].
        let clearance = |t: f64| {
            let dz = z - k.centerline_z(t);
            ((x - t) * (x - t) + y * y + dz * dz).sqrt() - k.tube_radius(t)
        };
        let n = 24;
        let mut best_i = 0;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            let t = self.r_exit * i as f64 / n as f64;
            let c = clearance(t);
            if c < best {
                best = c;
                best_i = i;
            }
        }
        if best <= 0.0 {
            return true;
        }
        // Golden-section refine around the coarse minimum.
        let step = self.r_exit / n as f64;
        let mut lo = (best_i as f64 - 1.0).max(0.0) * step;
        let mut hi = ((best_i + 1) as f64 * step).min(self.r_exit);
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut t1 = hi - INV_PHI * (hi - lo);
        let mut t2 = lo + INV_PHI * (hi - lo);
        let mut f1 = clearance(t1);
        let mut f2 = clearance(t2);
        for _ in 0..24 {
            if f1.min(f2) <= 0.0 {
                return true;
            }
            if f1 < f2 {
                hi = t2;
                t2 = t1;
                f2 = f1;
                t1 = hi - INV_PHI * (hi - lo);
                f1 = clearance(t1);
            } else {
                lo = t1;
                t1 = t2;
                f1 = f2;
                t2 = lo + INV_PHI * (hi - lo);
                f2 = clearance(t2);
            }
        }
        f1.min(f2) <= 0.0
    }
}

/// Evaluator over one [`LogSpec`] with per-knot geometry precomputed.
///
/// Build one of these when evaluating many points; the free functions
/// [`surface_radius`] and [`density_at`] rebuild it on every call.
#[derive(Debug, Clone)]
pub struct LogField<'a> {
    spec: &'a LogSpec,
    knots: Vec<KnotGeometry>,
}

impl<'a> LogField<'a> {
    pub fn new(spec: &'a LogSpec) -> Self {
        let knots = spec
            .knots
            .iter()
            .map(|k| KnotGeometry::new(spec, k))
            .collect();
        LogField { spec, knots }
    }

    pub fn spec(&self) -> &LogSpec {
        self.spec
    }

    /// Height (world units) where a knot's centerline exits through the bark.
    pub fn knot_exit(&self, index: usize) -> (f64, f64) {
        let g = &self.knots[index];
        (g.r_exit, g.z_exit)
    }

    /// Tube membership of one knot at cylindrical (r, theta, z), ignoring
    /// the bark boundary.
    pub fn knot_contains(&self, index: usize, r: f64, theta: f64, z: f64) -> bool {
        self.knots[index].contains(r, theta, z)
    }

    /// Bark radius at (theta, z). 2*pi-periodic in theta; z must lie within
    /// [0, height].
    pub fn surface_radius(&self, theta: f64, z: f64) -> Result<f64> {
        let taper = &self.spec.taper;
        if !(0.0..=taper.height).contains(&z) {
            return Err(Error::domain(format!(
                "z = {z} outside [0, {}]",
                taper.height
            )));
        }
        let mut radius = taper.radius_at(z) * self.spec.texture.factor(theta, z);
        for g in &self.knots {
            let k = &g.spec;
            if k.bump_amp == 0.0 {
                continue;
            }
            let dth = wrap_angle(theta - k.azimuth);
            let dz = z - g.z_exit;
            radius += k.bump_amp
                * (-dth * dth / (2.0 * k.bump_sigma_theta * k.bump_sigma_theta)
                    - dz * dz / (2.0 * k.bump_sigma_z * k.bump_sigma_z))
                    .exp();
        }
        Ok(radius)
    }

    /// Internal density at cylindrical (r, theta, z). Total function: 0
    /// outside the bark or the log's height range.
    pub fn density_at(&self, r: f64, theta: f64, z: f64) -> f64 {
        if !(0.0..=self.spec.taper.height).contains(&z) {
            return 0.0;
        }
        let bark = self.surface_radius(theta, z).expect("z checked above");
        if r > bark {
            return 0.0;
        }
        for g in &self.knots {
            if g.contains(r, theta, z) {
                return g.spec.knot_density;
            }
        }
        let rings = &self.spec.rings;
        rings.background_density + rings.ring_amp * (TAU * r / rings.ring_period).cos()
    }
}

/// See [`LogField::surface_radius`].
pub fn surface_radius(spec: &LogSpec, theta: f64, z: f64) -> Result<f64> {
    LogField::new(spec).surface_radius(theta, z)
}

/// See [`LogField::density_at`].
pub fn density_at(spec: &LogSpec, r: f64, theta: f64, z: f64) -> f64 {
    LogField::new(spec).density_at(r, theta, z)
}

fn sample(rng: &mut ChaCha8Rng, range: crate::config::Range) -> f64 {
    if range.lo == range.hi {
        range.lo
    } else {
        rng.gen_range(range.lo..range.hi)
    }
}

/// Draw k azimuths on the circle with every pairwise gap at least `min_gap`.
fn sample_azimuths(rng: &mut ChaCha8Rng, k: usize, min_gap: f64) -> Vec<f64> {
    let slack = TAU - k as f64 * min_gap;
    assert!(slack > 0.0, "min_azimuth_gap infeasible for k = {k}");
    let mut u: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..slack)).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let offset = rng.gen_range(0.0..TAU);
    u.iter()
        .enumerate()
        .map(|(i, v)| (v + i as f64 * min_gap + offset) % TAU)
        .collect()
}

/// Sample a complete [`LogSpec`] with exactly `k` knots. Identical
/// (config, seed, k) always yields an identical spec.
pub fn sample_log_spec(cfg: &SynthesisConfig, seed: u64, k: usize) -> Result<LogSpec> {
    if !(2..=7).contains(&k) {
        return Err(Error::domain(format!("knot count {k} outside [2, 7]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taper = TaperSpec {
        base_radius: sample(&mut rng, cfg.base_radius),
        taper_rate: sample(&mut rng, cfg.taper_rate),
        height: cfg.height,
    };
    let texture = BarkTextureSpec {
        amp_low: sample(&mut rng, cfg.amp_low),
        amp_high: sample(&mut rng, cfg.amp_high),
        freq_low: rng.gen_range(cfg.freq_low.lo as u32..=cfg.freq_low.hi as u32),
        freq_high: rng.gen_range(cfg.freq_high.lo as u32..=cfg.freq_high.hi as u32),
        phase_low: rng.gen_range(0.0..TAU),
        phase_high: rng.gen_range(0.0..TAU),
        z_amp: sample(&mut rng, cfg.z_amp),
        z_freq: sample(&mut rng, cfg.z_freq),
    };
    let background = sample(&mut rng, cfg.background_density);
    let rings = RingSpec {
        background_density: background,
        ring_amp: background * sample(&mut rng, cfg.ring_amp_frac),
        ring_period: sample(&mut rng, cfg.ring_period),
    };

    let azimuths = sample_azimuths(&mut rng, k, cfg.min_azimuth_gap);
    let max_bark = taper.base_radius * (1.0 + texture.amp_low + texture.amp_high + texture.z_amp);
    let knots = azimuths
        .into_iter()
        .map(|azimuth| {
            let start_height = cfg.height * sample(&mut rng, cfg.knot_start_frac);
            let mut rise_sqrt = sample(&mut rng, cfg.knot_rise_sqrt);
            let mut rise_lin = sample(&mut rng, cfg.knot_rise_lin);
            // Keep the centerline inside the log up to the bark radius.
            let rise = rise_sqrt * max_bark.sqrt() + rise_lin * max_bark;
            let max_rise = 0.95 * cfg.height - start_height;
            if rise > max_rise {
                let scale = max_rise / rise;
                rise_sqrt *= scale;
                rise_lin *= scale;
            }
            KnotSpec {
                azimuth,
                start_height,
                rise_sqrt,
                rise_lin,
                core_radius: taper.base_radius * sample(&mut rng, cfg.knot_core_frac),
                growth_rate: sample(&mut rng, cfg.knot_growth_rate),
                knot_density: sample(&mut rng, cfg.knot_density),
                bump_amp: taper.base_radius * sample(&mut rng, cfg.bump_amp_frac),
                bump_sigma_theta: sample(&mut rng, cfg.bump_sigma_theta),
                bump_sigma_z: sample(&mut rng, cfg.bump_sigma_z),
            }
        })
        .collect();

    Ok(LogSpec {
        taper,
        texture,
        rings,
        knots,
        seed,
    })
}

/// One dataset entry: enough to re-render the log from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub k: usize,
    pub seed: u64,
    pub spec: LogSpec,
}

/// A balanced dataset of log specifications, `count_per_k` logs for each knot
/// count in the range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub master_seed: u64,
    pub entries: Vec<ManifestEntry>,
}

/// Generate a balanced manifest: `count_per_k` logs per knot count.
pub fn forge_dataset(
    cfg: &SynthesisConfig,
    count_per_k: usize,
    k_range: std::ops::RangeInclusive<usize>,
    master_seed: u64,
) -> Result<DatasetManifest> {
    if count_per_k == 0 {
        return Err(Error::domain("count_per_k must be >= 1"));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(master_seed);
    let mut entries = Vec::new();
    for k in k_range {
        for i in 0..count_per_k {
            let seed: u64 = seeder.gen();
            let spec = sample_log_spec(cfg, seed, k)?;
            entries.push(ManifestEntry {
                id: format!("log-{k}k-{i:04}"),
                k,
                seed,
                spec,
            });
        }
    }
    Ok(DatasetManifest {
        master_seed,
        entries,
    })
}
