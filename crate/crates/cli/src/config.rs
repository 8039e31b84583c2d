//! Run configuration: one JSON document, validated field by field so that
//! errors name the offending path.

use crate::error::CliError;
use eprsim_core::analysis::AnalysisOptions;
use eprsim_core::simulate::{default_mode_count, DetectorConfig, Roi, SimulateError};
use eprsim_core::{Basis, DiffusionModel, EprGaussianState};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const CONFIG_SCHEMA_VERSION: u64 = 1;

/// Configurations shipped with the binary, addressable by file name.
pub const BUILTIN: [(&str, &str); 2] = [
    ("table1-demo.json", include_str!("../configs/table1-demo.json")),
    ("separable-demo.json", include_str!("../configs/separable-demo.json")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub tau: Vec<f64>,
    /// Frames per delay and basis.
    pub frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings {
    pub options: AnalysisOptions,
    /// Upper bound on bins per map axis.
    pub map_bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub state: EprGaussianState,
    pub diffusion: DiffusionModel,
    pub detectors: BTreeMap<Basis, DetectorConfig>,
    pub schedule: Schedule,
    pub seed: u64,
    pub analysis: AnalysisSettings,
    pub output_dir: PathBuf,
    /// The validated document, echoed into output metadata.
    pub document: Value,
}

impl RunConfig {
    pub fn detector(&self, basis: Basis) -> &DetectorConfig {
        &self.detectors[&basis]
    }

    /// Master seed for one basis, so near- and far-field runs draw from
    /// unrelated streams.
    pub fn basis_seed(&self, basis: Basis) -> u64 {
        let tag = match basis {
            Basis::Position => 0x6e65_6172,
            Basis::Momentum => 0x6661_7221,
        };
        splitmix64(self.seed ^ tag)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Reads a config file, falling back to a built-in config of the same file
/// name when the path does not exist.
pub fn load_document(path: &Path) -> Result<Value, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            let builtin = BUILTIN
                .iter()
                .find(|(n, _)| *n == name || n.trim_end_matches(".json") == name);
            match builtin {
                Some((_, text)) => text.to_string(),
                None => return Err(CliError::usage(format!("config {}: not found", path.display()))),
            }
        }
        Err(e) => return Err(CliError::usage(format!("config {}: {e}", path.display()))),
    };
    serde_json::from_str(&text).map_err(|e| CliError::config("", format!("{}: invalid JSON: {e}", path.display())))
}

/// Sets a dotted path to `value`, creating intermediate objects.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::usage(format!("invalid override path `{path}`")));
    }
    let mut node = doc;
    for (i, key) in keys.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            _ => return Err(CliError::config(&keys[..i].join("."), "is not an object; cannot override below it")),
        };
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("path has at least one key")
}

/// Parses `path=value`; the value is read as JSON when possible and as a
/// string otherwise.
pub fn parse_override(spec: &str) -> Result<(String, Value), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("override `{spec}` must look like path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path.trim().to_string(), value))
}

/// Parses a comma-separated delay list.
pub fn parse_tau_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("--tau: `{}` is not a number", t.trim())))
        })
        .collect()
}

// Typed access to one JSON object, tracking its path and the keys used.
struct Section<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

impl<'a> Section<'a> {
    fn root(doc: &'a Value) -> Result<Self, CliError> {
        match doc {
            Value::Object(map) => Ok(Self { path: String::new(), map }),
            _ => Err(CliError::config("", "config must be a JSON object")),
        }
    }

    fn child_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn only(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::config(&self.child_path(k), "unknown field")),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn require(&self, key: &str) -> Result<&'a Value, CliError> {
        self.get(key).ok_or_else(|| CliError::config(&self.child_path(key), "missing required field"))
    }

    fn section(&self, key: &str) -> Result<Section<'a>, CliError> {
        match self.require(key)? {
            Value::Object(map) => Ok(Section { path: self.child_path(key), map }),
            _ => Err(CliError::config(&self.child_path(key), "must be an object")),
        }
    }

    fn optional_section(&self, key: &str) -> Result<Option<Section<'a>>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.section(key).map(Some),
        }
    }

    fn number(&self, key: &str, v: &Value) -> Result<f64, CliError> {
        v.as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| CliError::config(&self.child_path(key), "must be a finite number"))
    }

    fn f64_where(&self, key: &str, ok: impl Fn(f64) -> bool, what: &str) -> Result<f64, CliError> {
        let x = self.number(key, self.require(key)?)?;
        if ok(x) {
            Ok(x)
        } else {
            Err(CliError::config(&self.child_path(key), format!("must be {what}, got {x}")))
        }
    }

    fn positive(&self, key: &str) -> Result<f64, CliError> {
        self.f64_where(key, |x| x > 0.0, "positive")
    }

    fn non_negative(&self, key: &str) -> Result<f64, CliError> {
        self.f64_where(key, |x| x >= 0.0, "non-negative")
    }

    fn unsigned(&self, key: &str, min: u64) -> Result<u64, CliError> {
        let v = self.require(key)?;
        match v.as_u64() {
            Some(n) if n >= min => Ok(n),
            _ => Err(CliError::config(
                &self.child_path(key),
                format!("must be an integer >= {min}, got {v}"),
            )),
        }
    }

    fn boolean(&self, key: &str) -> Result<bool, CliError> {
        self.require(key)?
            .as_bool()
            .ok_or_else(|| CliError::config(&self.child_path(key), "must be true or false"))
    }

    fn string(&self, key: &str) -> Result<&'a str, CliError> {
        self.require(key)?
            .as_str()
            .ok_or_else(|| CliError::config(&self.child_path(key), "must be a string"))
    }

    fn pair(&self, key: &str) -> Result<[f64; 2], CliError> {
        let path = self.child_path(key);
        match self.require(key)?.as_array().map(Vec::as_slice) {
            Some([a, b]) => match (a.as_f64(), b.as_f64()) {
                (Some(a), Some(b)) if a.is_finite() && b.is_finite() => Ok([a, b]),
                _ => Err(CliError::config(&path, "entries must be finite numbers")),
            },
            _ => Err(CliError::config(&path, "must be a two-element array [u, v]")),
        }
    }
}

const DETECTOR_SHARED: [&str; 6] = [
    "eff_photon",
    "eff_spinwave_readout",
    "dark_rate",
    "pairs_per_mode",
    "mode_count",
    "pixel_pitch",
];

fn parse_state(root: &Section) -> Result<EprGaussianState, CliError> {
    let s = root.section("state")?;
    s.only(&["epsilon", "sigma_minus", "sigma_plus"])?;
    let epsilon = s.positive("epsilon")?;
    let sigma_minus = s.positive("sigma_minus")?;
    let sigma_plus = s.positive("sigma_plus")?;
    EprGaussianState::new(epsilon, sigma_minus, sigma_plus).map_err(|e| CliError::config("state", e.to_string()))
}

fn parse_diffusion(root: &Section) -> Result<DiffusionModel, CliError> {
    let d = root.section("diffusion")?;
    d.only(&["coefficient", "readout_time"])?;
    let coefficient = d.non_negative("coefficient")?;
    let readout_time = match d.get("readout_time") {
        Some(_) => d.non_negative("readout_time")?,
        None => 0.0,
    };
    DiffusionModel::new(coefficient, readout_time).map_err(|e| CliError::config("diffusion", e.to_string()))
}

fn parse_roi(s: &Section, key: &str) -> Result<Roi, CliError> {
    let r = s.section(key)?;
    r.only(&["min", "max"])?;
    Ok(Roi {
        min: r.pair("min")?,
        max: r.pair("max")?,
    })
}

fn parse_detector(root: &Section, basis: Basis, state: &EprGaussianState) -> Result<DetectorConfig, CliError> {
    let shared = root.section("detector")?;
    let mut allowed: Vec<&str> = DETECTOR_SHARED.to_vec();
    allowed.extend(["near_field", "far_field"]);
    shared.only(&allowed)?;
    let own = shared.section(basis.label())?;
    let mut own_allowed: Vec<&str> = DETECTOR_SHARED.to_vec();
    own_allowed.extend(["roi_half_width", "roi_stokes", "roi_anti_stokes"]);
    own.only(&own_allowed)?;

    // Basis-specific values take precedence over shared ones.
    let pick = |key: &str| if own.get(key).is_some() { &own } else { &shared };
    let unit = |key: &str| pick(key).f64_where(key, |x| (0.0..=1.0).contains(&x), "within [0, 1]");
    let pixel_pitch = pick("pixel_pitch").positive("pixel_pitch")?;
    let (roi_stokes, roi_anti_stokes) = match own.get("roi_half_width") {
        Some(_) => {
            let h = own.positive("roi_half_width")?;
            (Roi::symmetric(h), Roi::symmetric(h))
        }
        None => (parse_roi(&own, "roi_stokes")?, parse_roi(&own, "roi_anti_stokes")?),
    };
    let mode_count = if pick("mode_count").get("mode_count").is_some() {
        let n = pick("mode_count").unsigned("mode_count", 1)?;
        u32::try_from(n).map_err(|_| CliError::config(&pick("mode_count").child_path("mode_count"), "too large"))?
    } else {
        default_mode_count(state).map_err(|e| CliError::config("state", e.to_string()))?
    };
    let det = DetectorConfig {
        basis,
        pixel_pitch,
        roi_stokes,
        roi_anti_stokes,
        eff_photon: unit("eff_photon")?,
        eff_spinwave_readout: unit("eff_spinwave_readout")?,
        dark_rate: pick("dark_rate").non_negative("dark_rate")?,
        pairs_per_mode: pick("pairs_per_mode").non_negative("pairs_per_mode")?,
        mode_count,
    };
    det.validate().map_err(|e| match e {
        SimulateError::InvalidConfig { field, reason } => CliError::config(&own.child_path(field), reason),
        other => CliError::config(&own.path, other.to_string()),
    })?;
    Ok(det)
}

fn parse_schedule(root: &Section) -> Result<Schedule, CliError> {
    let s = root.section("schedule")?;
    s.only(&["tau", "frames"])?;
    let path = s.child_path("tau");
    let list = s
        .require("tau")?
        .as_array()
        .ok_or_else(|| CliError::config(&path, "must be an array of delays in us"))?;
    if list.is_empty() {
        return Err(CliError::config(&path, "must not be empty"));
    }
    let mut tau = Vec::with_capacity(list.len());
    for (i, v) in list.iter().enumerate() {
        let item = format!("{path}[{i}]");
        let t = v
            .as_f64()
            .filter(|t| t.is_finite() && *t >= 0.0)
            .ok_or_else(|| CliError::config(&item, format!("must be a non-negative delay, got {v}")))?;
        if tau.contains(&t) {
            return Err(CliError::config(&item, format!("duplicate delay {t}")));
        }
        tau.push(t);
    }
    Ok(Schedule {
        tau,
        frames: s.unsigned("frames", 1)?,
    })
}

fn parse_analysis(root: &Section) -> Result<AnalysisSettings, CliError> {
    let defaults = AnalysisOptions::default();
    let mut settings = AnalysisSettings {
        options: defaults,
        map_bins: 60,
    };
    let Some(a) = root.optional_section("analysis")? else {
        return Ok(settings);
    };
    a.only(&["bins", "span_sigmas", "shift", "pixel_correction", "map_bins"])?;
    let o = &mut settings.options;
    if a.get("bins").is_some() {
        o.bins = a.unsigned("bins", 6)? as usize;
    }
    if a.get("span_sigmas").is_some() {
        o.span_sigmas = a.positive("span_sigmas")?;
    }
    if a.get("shift").is_some() {
        o.shift = a.unsigned("shift", 1)? as usize;
    }
    if a.get("pixel_correction").is_some() {
        o.pixel_correction = a.boolean("pixel_correction")?;
    }
    if a.get("map_bins").is_some() {
        settings.map_bins = a.unsigned("map_bins", 1)? as usize;
    }
    Ok(settings)
}

/// Analysis settings from a document holding at most `analysis` and
/// `output` sections.
pub fn parse_analysis_only(doc: &Value) -> Result<AnalysisSettings, CliError> {
    let root = Section::root(doc)?;
    root.only(&["analysis", "output"])?;
    parse_analysis(&root)
}

/// Validates a configuration document.
pub fn parse_config(doc: Value) -> Result<RunConfig, CliError> {
    let root = Section::root(&doc)?;
    root.only(&["schema_version", "state", "diffusion", "detector", "schedule", "seed", "analysis", "output"])?;
    let version = root.unsigned("schema_version", 0)?;
    if version != CONFIG_SCHEMA_VERSION {
        return Err(CliError::config(
            "schema_version",
            format!("unsupported version {version}, expected {CONFIG_SCHEMA_VERSION}"),
        ));
    }
    let state = parse_state(&root)?;
    let diffusion = parse_diffusion(&root)?;
    let mut detectors = BTreeMap::new();
    for basis in [Basis::Position, Basis::Momentum] {
        detectors.insert(basis, parse_detector(&root, basis, &state)?);
    }
    let schedule = parse_schedule(&root)?;
    let seed = root.unsigned("seed", 0)?;
    let analysis = parse_analysis(&root)?;
    let output_dir = match root.optional_section("output")? {
        Some(o) => {
            o.only(&["dir"])?;
            PathBuf::from(o.string("dir")?)
        }
        None => PathBuf::from("."),
    };
    Ok(RunConfig {
        state,
        diffusion,
        detectors,
        schedule,
        seed,
        analysis,
        output_dir,
        document: doc,
    })
}
