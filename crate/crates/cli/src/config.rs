use phi_yamabe::flow::{FlowConfig, FlowVariant};
use phi_yamabe::geometry::{build_grid, GeometryError, ModelPhiManifold, RadialGrid};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: field `{field}`: {message}")]
    Parse { path: String, field: String, message: String },
    #[error("invalid manifold: {0}")]
    Manifold(#[source] GeometryError),
    #[error("invalid grid: {0}")]
    Grid(#[source] GeometryError),
    #[error("invalid flow settings: {0}")]
    Flow(String),
    #[error("{0}")]
    Sweep(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub m: usize,
    pub b: usize,
    #[serde(rename = "scalY")]
    pub scal_y: f64,
    #[serde(rename = "scalZ")]
    pub scal_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSettings {
    pub variant: FlowVariant,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub tol_converge: f64,
    pub record_every: usize,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default = "default_tol_step")]
    pub tol_step: f64,
}

fn default_snapshot_every() -> usize {
    10
}

fn default_tol_step() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifold: ManifoldConfig,
    pub grid: GridConfig,
    pub flow: FlowSettings,
    pub outputs: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    /// Pass threshold for `rescale-check` on the two-route discrepancy.
    #[serde(default = "default_rescale_threshold")]
    pub rescale_threshold: f64,
}

fn default_rescale_threshold() -> f64 {
    1e-4
}

/// Validated model objects built from a [`RunConfig`].
pub struct Setup {
    pub manifold: ModelPhiManifold,
    pub grid: RadialGrid,
    pub flow: FlowConfig,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    /// Loads a config; relative output paths are resolved against the
    /// directory holding the file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.outputs.resolve(base);
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn setup(&self) -> Result<Setup, ConfigError> {
        let m = &self.manifold;
        let manifold =
            ModelPhiManifold::new(m.m, m.b, m.scal_y, m.scal_z, self.grid.x_max).map_err(ConfigError::Manifold)?;
        let grid = build_grid(&manifold, self.grid.n, self.grid.x_min, self.grid.x_max).map_err(ConfigError::Grid)?;
        let f = &self.flow;
        let flow = FlowConfig {
            variant: f.variant,
            t_end: f.t_end,
            cfl_safety: f.cfl_safety,
            tol_step: f.tol_step,
            tol_converge: f.tol_converge,
            record_every: f.record_every,
            snapshot_every: f.snapshot_every,
        };
        flow.validate().map_err(|e| ConfigError::Flow(e.to_string()))?;
        if !(self.rescale_threshold > 0.0) {
            return Err(ConfigError::Flow("rescale_threshold must be positive".into()));
        }
        Ok(Setup { manifold, grid, flow })
    }
}

impl OutputConfig {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.csv_path);
        fix(&mut self.json_path);
        if let Some(p) = self.svg_path.as_mut() {
            fix(p);
        }
    }

    /// Same outputs with `suffix` inserted before each extension.
    pub fn with_suffix(&self, suffix: &str) -> Self {
        let tag = |p: &Path| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let name = match p.extension() {
                Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
                None => format!("{stem}{suffix}"),
            };
            p.with_file_name(name)
        };
        Self {
            csv_path: tag(&self.csv_path),
            json_path: tag(&self.json_path),
            svg_path: self.svg_path.as_deref().map(tag),
        }
    }
}

/// Parameter grid for `sweep`: each present key lists the values to try;
/// runs cover the cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub b: Vec<usize>,
    #[serde(default, rename = "scalY")]
    pub scal_y: Vec<f64>,
    #[serde(default, rename = "scalZ")]
    pub scal_z: Vec<f64>,
    #[serde(default, rename = "N")]
    pub n: Vec<usize>,
    #[serde(default)]
    pub variant: Vec<FlowVariant>,
    #[serde(default)]
    pub t_end: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub config: RunConfig,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    /// Cartesian product of the listed values applied to `base`.
    pub fn expand(&self, base: &RunConfig) -> Result<Vec<SweepPoint>, ConfigError> {
        type Apply = Box<dyn Fn(&mut RunConfig)>;
        let mut axes: Vec<Vec<(String, Apply)>> = Vec::new();
        fn axis<T: Copy + std::fmt::Display + 'static>(
            name: &str,
            values: &[T],
            set: fn(&mut RunConfig, T),
        ) -> Vec<(String, Apply)> {
            values
                .iter()
                .map(|&v| (format!("{name}={v}"), Box::new(move |c: &mut RunConfig| set(c, v)) as Apply))
                .collect()
        }
        axes.push(axis("m", &self.m, |c, v| c.manifold.m = v));
        axes.push(axis("b", &self.b, |c, v| c.manifold.b = v));
        axes.push(axis("scalY", &self.scal_y, |c, v| c.manifold.scal_y = v));
        axes.push(axis("scalZ", &self.scal_z, |c, v| c.manifold.scal_z = v));
        axes.push(axis("N", &self.n, |c, v| c.grid.n = v));
        axes.push(axis("variant", &self.variant, |c, v| c.flow.variant = v));
        axes.push(axis("t_end", &self.t_end, |c, v| c.flow.t_end = v));
        axes.retain(|a| !a.is_empty());
        if axes.is_empty() {
            return Err(ConfigError::Sweep("sweep spec lists no parameter values".into()));
        }
        let mut points = vec![(Vec::<String>::new(), base.clone())];
        for a in &axes {
            let mut next = Vec::with_capacity(points.len() * a.len());
            for (labels, cfg) in &points {
                for (label, apply) in a {
                    let mut c = cfg.clone();
                    apply(&mut c);
                    let mut l = labels.clone();
                    l.push(label.clone());
                    next.push((l, c));
                }
            }
            points = next;
        }
        Ok(points
            .into_iter()
            .map(|(labels, mut config)| {
                let label = labels.join(",");
                let suffix: String = format!("_{}", labels.join("_"))
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || "-._".contains(c) { c } else { '_' })
                    .collect();
                config.outputs = config.outputs.with_suffix(&suffix);
                SweepPoint { label, config }
            })
            .collect())
    }
}
