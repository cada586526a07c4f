//! Run configuration: a sectioned TOML file mapped onto the library types.

use anyhow::{bail, Context};
use num_complex::Complex64;
use semiclassical::assembly::Method;
use semiclassical::dynamics::SearchConfig;
use semiclassical::ode::IntegratorOptions;
use semiclassical::packet::GaussianPacket;
use semiclassical::potential::PotentialModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub potential: PotentialSection,
    pub packet: PacketSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_packet: Option<PacketSection>,
    pub run: RunSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: String,
    #[serde(default = "one")]
    pub dimension: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spring: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quartic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSection {
    pub x0: Vec<f64>,
    pub p0: Vec<f64>,
    /// Per-axis width parameters: m Omega_ii = 2 (a0_i + i a1_i).
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    pub hbar: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub method: String,
    pub order: usize,
    pub time: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    pub targets_start: Vec<f64>,
    pub targets_stop: Vec<f64>,
    pub targets_count: Vec<usize>,
}

fn default_rtol() -> f64 {
    1e-10
}

fn default_atol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub re_range: [f64; 2],
    pub im_range: [f64; 2],
    pub grid: usize,
    pub shoot_tol: f64,
    pub dedup_tol: f64,
    pub caustic_threshold: f64,
    pub cutoff: f64,
    pub max_newton: usize,
    pub trajectory_samples: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self {
            re_range: [d.re_range.0, d.re_range.1],
            im_range: [d.im_range.0, d.im_range.1],
            grid: d.grid_n,
            shoot_tol: d.shoot_tol,
            dedup_tol: d.dedup_tol,
            caustic_threshold: d.caustic_threshold,
            cutoff: d.cutoff,
            max_newton: d.max_newton,
            trajectory_samples: d.trajectory_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            prefix: "run".into(),
        }
    }
}

/// Everything a command needs, resolved and validated.
pub struct Resolved {
    pub model: PotentialModel,
    pub packet: GaussianPacket,
    pub final_packet: Option<GaussianPacket>,
    pub method: Method,
    pub order: usize,
    pub t_end: f64,
    pub opts: IntegratorOptions,
    pub targets: Vec<Vec<f64>>,
    pub search: SearchConfig,
    pub oracle: Option<OracleSection>,
    pub out_dir: std::path::PathBuf,
    pub prefix: String,
}

const ALLOWED_MATRIX: &str = "supported (method, order, dimension) combinations:\n  \
    wkb:         n = 0..3 for d = 1; n = 0..2 for d = 2, 3\n  \
    bomca:       n = 1 for d = 1..3; n = 2 for d = 1, 2\n  \
    classical_q: d = 1 (order ignored beyond the built-in first-order correction)";

fn build_potential(sec: &PotentialSection) -> anyhow::Result<PotentialModel> {
    let model = match sec.kind.as_str() {
        "free" => PotentialModel::Free { dim: sec.dimension },
        "harmonic" => PotentialModel::Harmonic {
            dim: sec.dimension,
            spring: sec.spring.context("harmonic needs `spring`")?,
        },
        "quartic_perturbed_harmonic" => PotentialModel::QuarticPerturbedHarmonic {
            dim: sec.dimension,
            spring: sec.spring.context("quartic_perturbed_harmonic needs `spring`")?,
            quartic: sec.quartic.context("quartic_perturbed_harmonic needs `quartic`")?,
        },
        "polynomial" => PotentialModel::Polynomial {
            coeffs: sec.coeffs.clone().context("polynomial needs `coeffs`")?,
        },
        "morse_1d" => PotentialModel::Morse1d {
            depth: sec.depth.context("morse_1d needs `depth`")?,
            width: sec.width.context("morse_1d needs `width`")?,
            center: sec.center.unwrap_or(0.0),
        },
        other => bail!(
            "unknown potential kind {other:?}; expected free | harmonic | \
             quartic_perturbed_harmonic | polynomial | morse_1d"
        ),
    };
    model.validate()?;
    Ok(model)
}

fn build_packet(sec: &PacketSection) -> anyhow::Result<GaussianPacket> {
    let d = sec.x0.len();
    if sec.p0.len() != d || sec.a0.len() != d || sec.a1.len() != d {
        bail!("packet arrays x0/p0/a0/a1 must share length");
    }
    let masses = match (&sec.mass, &sec.masses) {
        (Some(m), None) => vec![*m; d],
        (None, Some(ms)) => {
            if ms.len() != d {
                bail!("masses length must match dimension");
            }
            ms.clone()
        }
        (Some(_), Some(_)) => bail!("give either `mass` or `masses`, not both"),
        (None, None) => bail!("packet needs `mass` or `masses`"),
    };
    let mut width = vec![Complex64::ZERO; d * d];
    for i in 0..d {
        width[i * d + i] = Complex64::new(2.0 * sec.a0[i], 2.0 * sec.a1[i]) / masses[i];
    }
    let packet = GaussianPacket {
        x0: sec.x0.clone(),
        p0: sec.p0.clone(),
        width,
        hbar: sec.hbar,
        masses,
    };
    packet.validate()?;
    Ok(packet)
}

pub fn resolve(
    cfg: &ConfigFile,
    out_override: Option<&str>,
    seed: u64,
    needs_final_packet: bool,
) -> anyhow::Result<Resolved> {
    let model = build_potential(&cfg.potential)?;
    let packet = build_packet(&cfg.packet)?;
    let final_packet = cfg.final_packet.as_ref().map(build_packet).transpose()?;
    if needs_final_packet && final_packet.is_none() {
        bail!("this command needs a [final_packet] section");
    }
    let d = model.dim();
    if packet.dim() != d {
        bail!("packet dimension {} does not match potential dimension {d}", packet.dim());
    }

    let method = match cfg.run.method.as_str() {
        "wkb" => Method::Wkb,
        "bomca" => Method::Bomca,
        "classical_q" => Method::ClassicalQ,
        other => bail!("unknown method {other:?}; expected wkb | bomca | classical_q\n{ALLOWED_MATRIX}"),
    };
    if let Err(e) = semiclassical::assembly::validate_method(method, cfg.run.order, d) {
        bail!("{e}\n{ALLOWED_MATRIX}");
    }
    if cfg.run.time < 0.0 {
        bail!("run.time must be nonnegative");
    }
    for (name, v) in [
        ("run.rtol", cfg.run.rtol),
        ("run.atol", cfg.run.atol),
        ("search.shoot_tol", cfg.search.shoot_tol),
        ("search.dedup_tol", cfg.search.dedup_tol),
        ("search.caustic_threshold", cfg.search.caustic_threshold),
        ("search.cutoff", cfg.search.cutoff),
    ] {
        if v <= 0.0 {
            bail!("{name} must be positive, got {v}");
        }
    }
    if cfg.run.targets_start.len() != d
        || cfg.run.targets_stop.len() != d
        || cfg.run.targets_count.len() != d
    {
        bail!("targets_start/stop/count must have length {d}");
    }
    if let Some(o) = &cfg.oracle {
        if o.lo.len() != d || o.hi.len() != d || o.points.len() != d {
            bail!("oracle lo/hi/points must have length {d}");
        }
    }

    let targets = semiclassical::assembly::linspace_targets(
        &cfg.run.targets_start,
        &cfg.run.targets_stop,
        &cfg.run.targets_count,
    );
    let search = SearchConfig {
        re_range: (cfg.search.re_range[0], cfg.search.re_range[1]),
        im_range: (cfg.search.im_range[0], cfg.search.im_range[1]),
        grid_n: cfg.search.grid,
        shoot_tol: cfg.search.shoot_tol,
        dedup_tol: cfg.search.dedup_tol,
        caustic_threshold: cfg.search.caustic_threshold,
        cutoff: cfg.search.cutoff,
        max_newton: cfg.search.max_newton,
        seed,
        trajectory_samples: cfg.search.trajectory_samples,
    };
    let opts = IntegratorOptions {
        rtol: cfg.run.rtol,
        atol: cfg.run.atol,
        ..Default::default()
    };
    let out_dir = std::path::PathBuf::from(out_override.unwrap_or(&cfg.output.dir));

    Ok(Resolved {
        model,
        packet,
        final_packet,
        method,
        order: cfg.run.order,
        t_end: cfg.run.time,
        opts,
        targets,
        search,
        oracle: cfg.oracle.clone(),
        out_dir,
        prefix: cfg.output.prefix.clone(),
    })
}

pub fn load(path: &std::path::Path) -> anyhow::Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: ConfigFile = toml::from_str(&text).context("parsing config")?;
    Ok(cfg)
}
